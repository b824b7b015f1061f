import json
import os

import pytest

from popsize import experiments as ex
from popsize.cli import main, parse_config, UsageError

HEADER = ("n,trial,seed,converged,convergence_parallel_time,output_value,error,restarts,"
          "clk_max,gr_max,time_max,epoch_max,sum_max,role_count_A")


def run_cli(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_result_columns_golden():
    assert ",".join(ex.RESULT_COLUMNS) == HEADER


def test_parse_simulate_defaults():
    cfg = parse_config(["simulate", "--n", "1024", "--trials", "10", "--seed", "7"])
    assert (cfg.n_list, cfg.trials, cfg.seed, cfg.profile) == ([1024], 10, 7, "faithful")
    assert cfg.params().cte == 140
    assert cfg.trial_keys()[:2] == [(1024, 0), (1024, 1)]


def test_profile_fast_and_cte_precedence():
    assert parse_config(["simulate", "--profile", "fast"]).params().cte == 16
    assert parse_config(["simulate", "--profile", "fast", "--cte", "50"]).params().cte == 50
    assert parse_config(["simulate", "--variant", "af"]).params().cte == 200


def test_sweep_default_n_list():
    assert parse_config(["sweep"]).n_list == [100, 1000, 10_000]


def test_config_file_then_flags(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"trials": 3, "seed": 5, "n": 64, "epoch-mult": 4}))
    cfg = parse_config(["simulate", "--config", str(path), "--seed", "9"])
    assert (cfg.trials, cfg.seed, cfg.n_list, cfg.epoch_multiplier) == (3, 9, [64], 4)


def test_config_file_unknown_key(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"trails": 3}))
    with pytest.raises(UsageError):
        parse_config(["simulate", "--config", str(path)])


@pytest.mark.parametrize("args", [
    ["simulate", "--trials", "0"],
    ["simulate", "--n", "1"],
    ["simulate", "--bogus"],
    ["simulate", "--n", "10", "--n-list", "10,20"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(args, capsys):
    code, _, _ = run_cli(args, capsys)
    assert code == 2


def test_malformed_n_creates_no_file(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code, _, err = run_cli(["simulate", "--n", "1o24", "--out-csv", str(out)], capsys)
    assert code == 2 and "1o24" in err
    assert not out.exists()


def test_simulate_thirty_rows(tmp_path, capsys):
    csv_path, svg_path, json_path = tmp_path / "r.csv", tmp_path / "r.svg", tmp_path / "r.json"
    code, out, _ = run_cli(["simulate", "--n", "16", "--trials", "30", "--profile", "fast",
                            "--out-csv", str(csv_path), "--out-svg", str(svg_path),
                            "--out-json", str(json_path)], capsys)
    assert code == 0
    raw = read(csv_path)
    assert b"\r" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert len(lines) == 31 and lines[0] == HEADER
    converged = sum(line.split(",")[3] == "1" for line in lines[1:])
    assert svg_path.read_text().count("<circle") == converged
    text = json_path.read_text()
    assert ex.json_text(json.loads(text)) == text
    assert json.loads(out) == json.loads(text)


def test_reals_six_significant_digits():
    assert ex.format_value(1 / 3) == "0.333333"
    assert ex.format_value(True) == "1"
    assert ex.format_value(None) == ""
    assert ex.format_value(12) == "12"


@pytest.mark.parametrize("cmd", [
    ["simulate", "--n", "24", "--trials", "3", "--profile", "fast"],
    ["sweep", "--n-list", "8,16", "--trials", "2", "--profile", "fast", "--variant", "af"],
    ["epidemic", "--n", "200", "--trials", "5"],
    ["decay", "--n", "500", "--trials", "3"],
    ["backup", "--n", "100", "--trials", "3", "--combined", "--profile", "fast"],
    ["leader", "--n", "32", "--trials", "2", "--profile", "fast"],
    ["verify", "--samples", "5000"],
    ["bounds", "--formula", "epidemic_tail", "--grid", "n=10000", "--grid", "alpha_u=6,8,12"],
])
def test_rerun_is_byte_identical(cmd, tmp_path, capsys):
    outputs = []
    for tag in ("a", "b"):
        csv_path, json_path = tmp_path / f"{tag}.csv", tmp_path / f"{tag}.json"
        extra = ["--out-csv", str(csv_path)]
        if cmd[0] != "bounds":
            extra += ["--out-json", str(json_path)]
        code, _, _ = run_cli(cmd + extra, capsys)
        assert code == 0
        outputs.append((read(csv_path), read(json_path) if json_path.exists() else None))
    assert outputs[0] == outputs[1]
    assert outputs[0][0]


def test_jobs_do_not_change_output(tmp_path, capsys):
    base = ["simulate", "--n", "20", "--trials", "6", "--profile", "fast", "--seed", "3"]
    for jobs in ("1", "3"):
        code, _, _ = run_cli(base + ["--jobs", jobs, "--out-csv", str(tmp_path / f"{jobs}.csv")], capsys)
        assert code == 0
    assert read(tmp_path / "1.csv") == read(tmp_path / "3.csv")


def test_trial_seeds_are_seed_plus_index(tmp_path, capsys):
    path = tmp_path / "r.csv"
    run_cli(["simulate", "--n", "12", "--trials", "4", "--seed", "10", "--profile", "fast",
             "--out-csv", str(path)], capsys)
    rows = path.read_text().splitlines()[1:]
    assert [r.split(",")[2] for r in rows] == ["10", "11", "12", "13"]


def test_bounds_half_geom_table(capsys):
    code, out, _ = run_cli(["bounds", "--formula", "half_geom_subexp_tail", "--grid", "lambda=1..12"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "lambda,value,vacuous"
    assert len(lines) == 13
    assert lines[2] == "2,1.21768,1"


def test_bounds_empty_grid_header_only(capsys):
    code, out, _ = run_cli(["bounds", "--formula", "epidemic_tail", "--grid", "n=", "--grid", "alpha_u=6"],
                           capsys)
    assert code == 0
    assert out == "n,alpha_u,value,vacuous\n"


def test_bounds_unknown_formula_lists_names(capsys):
    code, _, err = run_cli(["bounds", "--formula", "nope", "--grid", "x=1"], capsys)
    assert code == 2
    assert "half_geom_subexp_tail" in err and "epidemic_tail" in err


def test_unwritable_path_exit_3(tmp_path, capsys):
    bad = tmp_path / "missing" / "dir" / "r.csv"
    code, _, err = run_cli(["simulate", "--n", "8", "--profile", "fast", "--out-csv", str(bad)], capsys)
    assert code == 3
    assert str(bad) in err


def test_verify_summary_json(tmp_path, capsys):
    path = tmp_path / "v.json"
    code, out, _ = run_cli(["verify", "--samples", "20000", "--out-json", str(path)], capsys)
    summary = json.loads(path.read_text())
    assert code == (0 if summary["verdict"] else 1)
    assert set(summary["reports"]) >= {"half_geom_subexp_tail", "max_geom_lower_tail", "expected_max_interval"}
    assert "verdict" in out


def test_help_exits_zero(capsys):
    code, out, _ = run_cli(["--help"], capsys)
    assert code == 0 and "simulate" in out


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "popsize", "bounds", "--formula", "harmonic",
                           "--grid", "n=4"], capture_output=True, text=True, env=dict(os.environ))
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[1].startswith("4,2.08333")
