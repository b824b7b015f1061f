"""``popsize`` command line.

Examples::

    popsize simulate --n 1024 --trials 10 --seed 7 --out-csv runs.csv
    popsize sweep --n-list 100,1000,10000 --trials 10 --out-svg figure.svg
    popsize bounds --formula half_geom_subexp_tail --grid lambda=1..12
    popsize verify --samples 1000000

Exit codes: 0 success, 1 a verification failed, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from typing import Optional, Sequence

from . import bounds, experiments as ex
from .experiments import ConfigError, ExperimentConfig

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_IO = 3

_CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)} - {"command"}
_DEFAULT_SWEEP = [100, 1000, 10_000]


class UsageError(Exception):
    pass


def _int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    return value


def _n_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _grid_item(text: str) -> tuple[str, list[float]]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"grid entries look like name=1..12 or name=6,8,12, got {text!r}")
    key, values = text.split("=", 1)
    try:
        return key.strip(), ex.parse_grid_value(values)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse grid values {values!r}") from None


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--n", type=_int, default=S, help="population size (default 1024)")
    g.add_argument("--n-list", type=_n_list, default=S, help="comma-separated population sizes")
    g.add_argument("--trials", type=_int, default=S, help="trials per n (default 1)")
    g.add_argument("--seed", type=_int, default=S, help="base seed; trial t uses seed+t (default 0)")
    g.add_argument("--variant", choices=("as", "af"), default=S, help="protocol variant (default as)")
    g.add_argument("--cte", type=_int, default=S,
                   help="phase length factor; overrides the profile (faithful: 140 as / 200 af, fast: 16)")
    g.add_argument("--epoch-mult", type=_int, default=S, help="epochs per unit of clk (default 5)")
    g.add_argument("--profile", choices=ex.PROFILES, default=S, help="constant profile (default faithful)")
    g.add_argument("--jobs", type=_int, default=S, help="trials run concurrently (default 1)")
    g.add_argument("--out-csv", default=S, help="per-trial CSV path")
    g.add_argument("--out-json", default=S, help="JSON summary path")
    g.add_argument("--out-svg", default=S, help="SVG scatter path (simulate/sweep)")
    g.add_argument("--max-budget", type=_int, default=S,
                   help="interaction budget per trial (default 10^4 n ceil(log2 n)^2)")
    g.add_argument("--snapshot-every", type=_int, default=S,
                   help="interactions between convergence checks (default n)")
    g.add_argument("--config", default=None, help="JSON file with the same keys as the flags")

    parser = argparse.ArgumentParser(prog="popsize", description="Population size estimation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="independent trials of the estimator")
    sub.add_parser("sweep", parents=[common], help="trials over several n (default 100,1000,10000)")
    b = sub.add_parser("bounds", parents=[common], help="tabulate an analytic bound over a grid")
    b.add_argument("--formula", default=S, help=f"one of: {', '.join(sorted(bounds.FORMULAS))}")
    b.add_argument("--grid", type=_grid_item, action="append", default=S,
                   help="parameter values, repeatable: lambda=1..12 or alpha_u=6,8,12")
    v = sub.add_parser("verify", parents=[common], help="Monte Carlo checks of the geometric-maximum bounds")
    v.add_argument("--samples", type=_int, default=S, help="draws of the maximum (default 100000)")
    v.add_argument("--N", type=_int, default=S, help="geometrics per maximum (default 1024)")
    e = sub.add_parser("epidemic", parents=[common], help="epidemic completion times")
    e.add_argument("--fraction", type=float, default=S, help="subpopulation fraction (default 1)")
    d = sub.add_parser("decay", parents=[common], help="worst-case count decay")
    d.add_argument("--k", type=_int, default=S, help="initial marked count (default n)")
    d.add_argument("--T", type=float, default=S, help="parallel time (default 1)")
    k = sub.add_parser("backup", parents=[common], help="exact backup stabilization")
    k.add_argument("--combined", action="store_true", default=S,
                   help="also run the estimator with the same seed and report the combined bound")
    lp = sub.add_parser("leader", parents=[common], help="leader-driven termination")
    lp.add_argument("--k2", type=_int, default=S, help="phase multiplier (default 4)")
    return parser


def _normalize_key(key: str) -> str:
    key = key.replace("-", "_")
    return {"epoch_mult": "epoch_multiplier", "n": "n_list"}.get(key, key)


def parse_config(argv: Optional[Sequence[str]] = None) -> ExperimentConfig:
    """Defaults, then the JSON file, then explicit flags.

    Raises:
        UsageError: on unknown keys or invalid values.
    """
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    command = ns.pop("command")
    config_path = ns.pop("config", None)

    values: dict = {}
    if command == "sweep":
        values["n_list"] = list(_DEFAULT_SWEEP)
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {config_path}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {config_path} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"config {config_path} must hold a JSON object")
        for key, value in loaded.items():
            name = _normalize_key(key)
            if name not in _CONFIG_KEYS:
                raise UsageError(f"unknown config key {key!r}")
            values[name] = [value] if name == "n_list" and isinstance(value, int) else value

    if "n" in ns and "n_list" in ns:
        raise UsageError("give either --n or --n-list, not both")
    for key, value in ns.items():
        name = _normalize_key(key)
        if name == "grid":
            value = dict(value)
        elif name == "n_list" and isinstance(value, int):
            value = [value]
        values[name] = value
    try:
        return ExperimentConfig(command=command, **values)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def _emit(rows, summary, config: ExperimentConfig, svg: bool = False) -> int:
    failures = ex.write_outputs(rows, summary, config, svg=svg)
    print(ex.json_text(summary), end="")
    for msg in failures:
        print(f"error: {msg}", file=sys.stderr)
    return EXIT_IO if failures else EXIT_OK


def _run(config: ExperimentConfig) -> int:
    cmd = config.command
    if cmd in ("simulate", "sweep"):
        rows, summary = ex.run_experiment(config)
        return _emit(rows, summary, config, svg=True)
    if cmd == "bounds":
        if not config.formula:
            raise UsageError(f"--formula is required; valid names: {', '.join(sorted(bounds.FORMULAS))}")
        try:
            text = ex.bounds_table(config.formula, config.grid)
        except (ConfigError, bounds.DomainError, ValueError) as exc:
            raise UsageError(str(exc)) from None
        if config.out_csv:
            try:
                ex.write_text(config.out_csv, text)
            except OSError as exc:
                print(f"error: cannot write {config.out_csv}: {exc.strerror or exc}", file=sys.stderr)
                return EXIT_IO
        else:
            print(text, end="")
        return EXIT_OK
    if cmd == "verify":
        reports = ex.verification_reports(config.samples, config.seed, config.N)
        for rep in reports:
            print("\n".join(rep.lines()))
        summary = {"verdict": all(r.verdict for r in reports),
                   "reports": {r.bound_name: r.verdict for r in reports}}
        status = EXIT_OK
        targets = []
        if config.out_csv:
            targets.append((config.out_csv, ex.report_rows(reports)))
        if config.out_json:
            targets.append((config.out_json, ex.json_text(summary)))
        for path, text in targets:
            try:
                ex.write_text(path, text)
            except OSError as exc:
                print(f"error: cannot write {path}: {exc.strerror or exc}", file=sys.stderr)
                status = EXIT_IO
        if status == EXIT_OK and not summary["verdict"]:
            status = EXIT_VERIFY
        return status
    trial_fn, summarize = {
        "epidemic": (ex.epidemic_trial, ex.summarize_epidemic),
        "decay": (ex.decay_trial, ex.summarize_decay),
        "backup": (ex.backup_trial, ex.summarize_backup),
        "leader": (ex.leader_trial, ex.summarize_leader),
    }[cmd]
    try:
        rows = ex.run_trials(config, trial_fn)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return _emit(rows, summarize(rows), config)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config = parse_config(argv)
        return _run(config)
    except UsageError as exc:
        print(f"popsize: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
