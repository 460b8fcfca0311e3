import json
import subprocess
import sys

import pytest

from pddssca import __version__
from pddssca.cli import main, read_trace
from pddssca.config import config_hash, parse_config
from pddssca.longterm import TraceRecord


def run_toy(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", "--experiment", "toy", "--max-iters", "20", "--out", str(out), *extra])
    return code, out


def test_run_writes_trace_and_final(tmp_path, capsys):
    code, out = run_toy(tmp_path, "a", "--seed", "3")
    assert code == 0
    header, rows = read_trace(out / "trace.csv")
    cfg = parse_config("", {"experiment": "toy", "solver.T_max": 20, "solver.seed": 3})
    assert header == [f"# pddssca {__version__}", f"# config_hash {config_hash(cfg)}", "# seed 3"]
    assert tuple(rows[0]) == TraceRecord.COLUMNS and len(rows) == 20
    final = json.loads((out / "final.json").read_text())
    assert final["iterations"] == 20 and final["experiment"] == "toy"
    assert "toy: 20 iterations" in capsys.readouterr().out


def test_trace_identical_across_workers(tmp_path):
    _, a = run_toy(tmp_path, "one", "--workers", "1")
    _, b = run_toy(tmp_path, "three", "--workers", "3")
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert (a / "final.json").read_bytes() == (b / "final.json").read_bytes()


def test_unknown_key_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("solver.warp = 9\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "solver.warp" in capsys.readouterr().err


def test_bad_problem_value_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("cmac.N = 0\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "config error" in capsys.readouterr().err


def test_report_after_run(tmp_path):
    _, out = run_toy(tmp_path, "r")
    assert main(["report", "--experiment", "toy", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["batch"] == 200 and len(report["saa_f"]) == 2


def test_report_needs_matching_run(tmp_path, capsys):
    _, out = run_toy(tmp_path, "r")
    assert main(["report", "--experiment", "cmac", "--out", str(out)]) == 1
    assert main(["report", "--experiment", "toy", "--out", str(tmp_path / "empty")]) == 1


def test_check_gradients_cmac(capsys):
    assert main(["check-gradients", "--experiment", "cmac"]) == 0
    assert "cmac: max relative error" in capsys.readouterr().out


def test_check_gradients_rejects_toy():
    assert main(["check-gradients", "--experiment", "toy"]) == 1


def test_baseline_rejects_other_experiments(tmp_path):
    assert main(["baseline", "--experiment", "toy", "--out", str(tmp_path)]) == 1


@pytest.mark.slow
def test_baseline_writes_table(tmp_path):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("cmac.pool_size = 200\n")
    assert main(["baseline", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    header, rows = read_trace(tmp_path / "baselines.csv")
    assert [r["method"] for r in rows] == ["dual_ellipsoid", "short_term_constraints"]
    assert float(rows[0]["capacity"]) > float(rows[1]["capacity"])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "pddssca", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
