"""Trial orchestration and output files for the command line.

Trials are seeded ``seed + trial`` and may run on a thread pool (the
compiled kernels release the GIL). Rows are sorted by ``(n, trial)`` before
anything is written, so files never depend on completion order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Iterable, Optional, Sequence

from . import bounds
from .engine import RunResult
from .estimation import FAITHFUL_CTE, FAST_CTE, ProtocolParams, simulate
from .rng import Rng
from . import statlab
from .variants import combined_upper_bound, simulate_backup, simulate_leader

COMMANDS = ("simulate", "sweep", "bounds", "verify", "epidemic", "decay", "backup", "leader")
PROFILES = ("faithful", "fast")


class ConfigError(ValueError):
    """Invalid experiment configuration (usage error)."""


@dataclass
class ExperimentConfig:
    command: str = "simulate"
    n_list: list = field(default_factory=lambda: [1024])
    trials: int = 1
    seed: int = 0
    variant: str = "as"
    cte: Optional[int] = None
    epoch_multiplier: int = 5
    profile: str = "faithful"
    jobs: int = 1
    out_csv: Optional[str] = None
    out_json: Optional[str] = None
    out_svg: Optional[str] = None
    max_budget: Optional[int] = None
    snapshot_every: Optional[int] = None
    # command-specific
    formula: Optional[str] = None
    grid: dict = field(default_factory=dict)
    N: int = 1024
    fraction: float = 1.0
    k: Optional[int] = None
    T: float = 1.0
    k2: int = 4
    samples: int = 100_000
    combined: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        if not self.n_list or any(int(n) < 2 for n in self.n_list):
            raise ConfigError(f"every n must be at least 2, got {self.n_list}")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.variant not in ("as", "af"):
            raise ConfigError(f"variant must be 'as' or 'af', got {self.variant!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.cte is not None and self.cte < 1:
            raise ConfigError("cte must be at least 1")
        if self.epoch_multiplier < 1:
            raise ConfigError("epoch multiplier must be at least 1")
        if self.max_budget is not None and self.max_budget < 1:
            raise ConfigError("max budget must be positive")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ConfigError("snapshot cadence must be positive")
        if self.samples < 1:
            raise ConfigError("samples must be positive")

    def params(self) -> ProtocolParams:
        """Profile defaults, then explicit overrides."""
        base = FAITHFUL_CTE[self.variant] if self.profile == "faithful" else FAST_CTE
        cte = self.cte if self.cte is not None else base
        return ProtocolParams(variant=self.variant, cte=cte, epoch_multiplier=self.epoch_multiplier)

    def trial_keys(self) -> list[tuple[int, int]]:
        return [(int(n), t) for n in self.n_list for t in range(self.trials)]


# ---------------------------------------------------------------- rows


@dataclass(frozen=True)
class ResultRow:
    n: int
    trial: int
    seed: int
    converged: bool
    convergence_parallel_time: Optional[float]
    output_value: Optional[float]
    error: Optional[float]
    restarts: int
    clk_max: int
    gr_max: int
    time_max: int
    epoch_max: int
    sum_max: int
    role_count_A: int


RESULT_COLUMNS = tuple(f.name for f in fields(ResultRow))


def _output_value(outputs) -> Optional[float]:
    if not outputs or any(o is None for o in outputs):
        return None
    values = set(outputs)
    return float(values.pop()) if len(values) == 1 else None


def run_trial(config: ExperimentConfig, n: int, trial: int) -> ResultRow:
    seed = config.seed + trial
    res = simulate(n, config.params(), seed=seed, max_interactions=config.max_budget,
                   snapshot_every=config.snapshot_every, record_trace=False)
    return result_row(res, n, trial, seed)


def result_row(res: RunResult, n: int, trial: int, seed: int) -> ResultRow:
    r = res.field_ranges
    return ResultRow(
        n=n, trial=trial, seed=seed, converged=res.converged,
        convergence_parallel_time=res.convergence_parallel_time,
        output_value=_output_value(res.outputs), error=res.error,
        restarts=res.restart_count, clk_max=r["clk"], gr_max=r["gr"], time_max=r["time"],
        epoch_max=r["epoch"], sum_max=r["sum"], role_count_A=res.role_counts.get("A", 0),
    )


def run_trials(config: ExperimentConfig, fn: Callable[[ExperimentConfig, int, int], Any]) -> list:
    """Apply ``fn(config, n, trial)`` to every trial; results ordered by (n, trial)."""
    keys = sorted(config.trial_keys())
    if config.jobs == 1:
        return [fn(config, n, t) for n, t in keys]
    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        futures = [pool.submit(fn, config, n, t) for n, t in keys]
        return [f.result() for f in futures]


def _median(values: Sequence[float]) -> Optional[float]:
    return statistics.median(values) if values else None


def _mean(values: Sequence[float]) -> Optional[float]:
    return statistics.fmean(values) if values else None


def summarize(rows: Sequence[ResultRow]) -> dict:
    """Per-n and overall summary: times, worst error, convergence fraction."""
    def block(group):
        times = [r.convergence_parallel_time for r in group if r.converged]
        errors = [r.error for r in group if r.error is not None]
        return {
            "trials": len(group),
            "converged_fraction": sum(r.converged for r in group) / len(group),
            "median_time": _median(times),
            "mean_time": _mean(times),
            "max_error": max(errors) if errors else None,
        }

    by_n = {}
    for n in sorted({r.n for r in rows}):
        by_n[str(n)] = block([r for r in rows if r.n == n])
    return {"per_n": by_n, "overall": block(list(rows))}


def run_experiment(config: ExperimentConfig) -> tuple[list[ResultRow], dict]:
    rows = run_trials(config, run_trial)
    summary = summarize(rows)
    summary["config"] = {"variant": config.variant, "profile": config.profile,
                         "cte": config.params().cte, "epoch_multiplier": config.epoch_multiplier,
                         "seed": config.seed, "trials": config.trials}
    return rows, summary


# ---------------------------------------------------------------- formatting


def format_value(v: Any) -> str:
    """CSV cell: reals to 6 significant digits, booleans as 0/1, missing as empty."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def rows_csv(rows: Sequence[Any]) -> str:
    """CSV for a list of dataclass rows sharing one type."""
    if not rows:
        raise ValueError("no rows to write")
    columns = [f.name for f in fields(rows[0])]
    return csv_text(columns, ([getattr(r, c) for c in columns] for r in rows))


def json_text(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def svg_scatter(rows: Sequence[ResultRow], width: int = 480, height: int = 320) -> str:
    """Convergence time against log10 n, one circle per converged trial."""
    pts = [(math.log10(r.n), r.convergence_parallel_time) for r in rows if r.converged]
    margin = 50
    xs = [p[0] for p in pts] or [0.0, 1.0]
    ys = [p[1] for p in pts] or [0.0, 1.0]
    x0, x1 = math.floor(min(xs)), math.ceil(max(xs))
    if x1 == x0:
        x1 = x0 + 1
    y1 = max(ys) * 1.1 or 1.0

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - y / y1 * (height - 2 * margin)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
    ]
    for d in range(x0, x1 + 1):
        out.append(f'<text x="{sx(d):.1f}" y="{height - margin + 18}" font-size="11" '
                   f'text-anchor="middle">10^{d}</text>')
    out.append(f'<text x="{margin - 6}" y="{margin:.1f}" font-size="11" text-anchor="end">{y1:.3g}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="{height - 10}" font-size="12" text-anchor="middle">n</text>')
    out.append(f'<text x="14" y="{height / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {height / 2:.1f})">parallel time</text>')
    for x, y in pts:
        out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="steelblue"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_outputs(rows: Sequence[Any], summary: dict, config: ExperimentConfig,
                  svg: bool = True) -> list[str]:
    """Write every requested file; returns one message per failed path.

    Each file is attempted independently so one bad path does not lose the
    others.
    """
    if not rows:
        raise ValueError("no rows to write")
    targets = []
    if config.out_csv:
        targets.append((config.out_csv, lambda: rows_csv(rows)))
    if config.out_json:
        targets.append((config.out_json, lambda: json_text(summary)))
    if config.out_svg and svg:
        targets.append((config.out_svg, lambda: svg_scatter(rows)))
    failures = []
    for path, render in targets:
        try:
            write_text(path, render())
        except OSError as exc:
            failures.append(f"cannot write {path}: {exc.strerror or exc}")
    return failures


# ---------------------------------------------------------------- bounds tables


def parse_grid_value(text: str) -> list[float]:
    """``"1..12"`` (integer range), ``"6,8,12"`` or a single number; ``""`` is empty."""
    text = text.strip()
    if not text:
        return []
    if ".." in text:
        lo, hi = text.split("..", 1)
        return [float(v) for v in range(int(lo), int(hi) + 1)]
    return [float(v) for v in text.split(",")]


def _plain(v: float):
    return int(v) if float(v).is_integer() else v


def bounds_table(name: str, grid: dict) -> str:
    """CSV with one row per grid point: parameters, bound value, vacuous flag."""
    formula = bounds.FORMULAS.get(name)
    if formula is None:
        raise ConfigError(f"unknown formula {name!r}; valid names: {', '.join(sorted(bounds.FORMULAS))}")
    unknown = set(grid) - set(formula.params)
    if unknown:
        raise ConfigError(f"{name} takes {', '.join(formula.params)}; got {', '.join(sorted(unknown))}")
    columns = list(formula.params) + ["value", "vacuous"]
    if not grid or any(len(v) == 0 for v in grid.values()):
        return csv_text(columns, [])
    missing = [p for p in formula.params if p not in grid]
    if missing:
        raise ConfigError(f"{name} needs values for {', '.join(missing)}")
    results = bounds.evaluate_grid(name, {p: [_plain(v) for v in grid[p]] for p in formula.params})
    return csv_text(columns, ([point[p] for p in formula.params] + [float(v), v.vacuous]
                              for point, v in results))


# ---------------------------------------------------------------- other commands


@dataclass(frozen=True)
class EpidemicRow:
    n: int
    trial: int
    seed: int
    fraction: float
    parallel_time: float


def epidemic_trial(config: ExperimentConfig, n: int, trial: int) -> EpidemicRow:
    seed = config.seed + trial
    return EpidemicRow(n, trial, seed, config.fraction,
                       statlab.measure_epidemic_time(n, config.fraction, Rng(seed)))


def summarize_epidemic(rows: Sequence[EpidemicRow]) -> dict:
    out = {}
    for n in sorted({r.n for r in rows}):
        times = [r.parallel_time for r in rows if r.n == n]
        limit = 24 * math.log(n)
        out[str(n)] = {"trials": len(times), "mean_time": _mean(times), "max_time": max(times),
                       "full_population_expectation": (n - 1) / n * bounds.harmonic(n - 1),
                       "exceedances_of_24_ln_n": sum(t > limit for t in times)}
    return {"per_n": out}


@dataclass(frozen=True)
class DecayRow:
    n: int
    trial: int
    seed: int
    k: int
    T: float
    min_count: int


def decay_trial(config: ExperimentConfig, n: int, trial: int) -> DecayRow:
    seed = config.seed + trial
    k = n if config.k is None else config.k
    return DecayRow(n, trial, seed, k, config.T, statlab.measure_count_decay(n, k, config.T, Rng(seed)))


def summarize_decay(rows: Sequence[DecayRow]) -> dict:
    out = {}
    for n in sorted({r.n for r in rows}):
        group = [r for r in rows if r.n == n]
        k = group[0].k
        out[str(n)] = {"trials": len(group), "k": k, "min_count": min(r.min_count for r in group),
                       "mean_fraction": _mean([r.min_count / k for r in group]) if k else None,
                       "below_k_over_81": sum(r.min_count < k / 81 for r in group)}
    return {"per_n": out}


@dataclass(frozen=True)
class BackupRow:
    n: int
    trial: int
    seed: int
    stabilized: bool
    k_ex: Optional[int]
    stabilization_parallel_time: Optional[float]
    merge_free_parallel_time: Optional[float]
    k_est: Optional[float]
    combined: Optional[int]


def backup_trial(config: ExperimentConfig, n: int, trial: int) -> BackupRow:
    seed = config.seed + trial
    res = simulate_backup(n, seed=seed, max_interactions=config.max_budget,
                          snapshot_every=config.snapshot_every)
    k_est = combined = None
    if config.combined:
        est = simulate(n, config.params(), seed=seed, max_interactions=config.max_budget,
                       record_trace=False)
        k_est = _output_value(est.outputs)
        if k_est is not None and res.k_ex is not None:
            combined = combined_upper_bound(k_est, res.k_ex)
    return BackupRow(
        n, trial, seed, res.stabilized, res.k_ex,
        res.parallel_time if res.stabilized else None,
        res.merge_free_interactions / n if res.merge_free_interactions is not None else None,
        k_est, combined,
    )


def summarize_backup(rows: Sequence[BackupRow]) -> dict:
    out = {}
    for n in sorted({r.n for r in rows}):
        group = [r for r in rows if r.n == n]
        out[str(n)] = {"trials": len(group), "stabilized": sum(r.stabilized for r in group),
                       "k_ex_values": sorted({r.k_ex for r in group if r.k_ex is not None}),
                       "expected_k_ex": (n - 1).bit_length(),
                       "median_time": _median([r.stabilization_parallel_time for r in group
                                               if r.stabilized])}
    return {"per_n": out}


@dataclass(frozen=True)
class LeaderRow:
    n: int
    trial: int
    seed: int
    terminated: bool
    termination_parallel_time: Optional[float]
    converged_at_termination: bool
    first_converged_parallel_time: Optional[float]
    output_value: Optional[float]
    error: Optional[float]


def leader_trial(config: ExperimentConfig, n: int, trial: int) -> LeaderRow:
    seed = config.seed + trial
    res = simulate_leader(n, config.params(), seed=seed, k2=config.k2,
                          max_interactions=config.max_budget, snapshot_every=config.snapshot_every)
    return LeaderRow(n, trial, seed, res.terminated, res.termination_parallel_time,
                     res.converged_at_termination, res.first_converged_parallel_time,
                     _output_value(res.run.outputs), res.run.error)


def summarize_leader(rows: Sequence[LeaderRow]) -> dict:
    out = {}
    for n in sorted({r.n for r in rows}):
        group = [r for r in rows if r.n == n]
        out[str(n)] = {"trials": len(group), "terminated": sum(r.terminated for r in group),
                       "safe_fraction": sum(r.converged_at_termination for r in group) / len(group),
                       "median_termination_time": _median([r.termination_parallel_time for r in group
                                                           if r.terminated])}
    return {"per_n": out}


# ---------------------------------------------------------------- verification suite


def verification_reports(samples: int, seed: int, N: int = 1024) -> list[statlab.BoundReport]:
    """Monte Carlo checks of the maximum-of-geometrics bounds at one N."""
    rng = Rng(seed)
    m = statlab.sample_max_geometric(rng, N, samples)
    center = float(m.mean())
    lg = math.log2(N)
    reports = []

    # E[M] sits close to the low end of the interval, so the sample mean gets
    # the same 3 standard errors of slack as the tail checks
    lo, hi = bounds.expected_max_interval(N)
    slack = statlab.DEFAULT_SLACK_SIGMA * float(m.std(ddof=1)) / math.sqrt(samples) if samples > 1 else 0.0
    reports.append(statlab.BoundReport(
        "expected_max_interval", {"N": N, "samples": samples, "low": lo, "high": hi},
        # high end as is; low end negated, as in EmpiricalTail.lower
        [(0.0, center, center + slack, hi, center - slack < hi),
         (0.0, -center, -center + slack, -lo, -center - slack < -lo)],
        statlab.DEFAULT_SLACK_SIGMA))

    lams = list(range(1, 13))
    reports.append(statlab.verify_bound(
        statlab.EmpiricalTail.from_samples(m, lams, center=center),
        bounds.half_geom_subexp_tail, bound_name="half_geom_subexp_tail",
        parameters={"N": N, "samples": samples}))
    reports.append(statlab.verify_bound(
        statlab.EmpiricalTail.from_samples(m - center, lams),
        lambda lam: bounds.max_geom_upper_tail(0.5, lam), bound_name="max_geom_upper_tail",
        parameters={"N": N, "samples": samples}))
    reports.append(statlab.verify_bound(
        statlab.EmpiricalTail.from_samples(center - m, list(range(1, 9))),
        lambda lam: bounds.max_geom_lower_tail(0.5, lam), bound_name="max_geom_lower_tail",
        parameters={"N": N, "samples": samples}))

    p_high, p_low = bounds.max_geom_range_tails(N)
    reports.append(statlab.verify_bound(
        statlab.EmpiricalTail.from_samples(m, [2 * lg]), 2 * p_high,
        bound_name="max_geom_range_tail_high", parameters={"N": N}))
    reports.append(statlab.verify_bound(
        statlab.EmpiricalTail.lower(m, [lg - math.log2(math.log(N))]), 2 * p_low,
        bound_name="max_geom_range_tail_low", parameters={"N": N}))

    K = 4 * math.ceil(lg)
    sums = statlab.sample_sum_of_maxima(rng, N, K, max(1, samples // 100))
    reports.append(statlab.verify_bound(
        statlab.EmpiricalTail.from_samples(sums / K, [4.7], center=lg),
        bounds.average_estimate_tail(N, K), bound_name="average_estimate_tail",
        parameters={"N": N, "K": K, "sums": int(sums.size)}))
    return reports


def report_rows(reports: Sequence[statlab.BoundReport]) -> str:
    columns = ["bound_name", "threshold", "empirical", "empirical_plus_slack", "analytic", "passed"]
    return csv_text(columns, ([rep.bound_name, *row] for rep in reports for row in rep.rows))


def as_dict(row: Any) -> dict:
    return asdict(row)
