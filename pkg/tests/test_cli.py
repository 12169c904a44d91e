import csv

import numpy as np
import pytest

from dgtwophase.cli import main
from dgtwophase.config import load_config
from dgtwophase.output import DIAGNOSTIC_COLUMNS
from dgtwophase.simulation import Simulation

FAST = ["adapt.max_level=1", "adapt.max_order=1", "output.line_points=64"]


def read_summary(path):
    out = {}
    for line in open(path):
        k, _, v = line.partition(" = ")
        out[k] = v.strip()
    return out


def test_zero_final_time_writes_initial_state(tmp_path):
    assert main(["--quiet", "--output", str(tmp_path), "--override", "problem.T=0"] + sum(
        (["--override", o] for o in FAST), [])) == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert "line_t00000.000.csv" in files and "snapshot_00000.vtk" in files
    assert not any(f.startswith("snapshot_0000") and f != "snapshot_00000.vtk" for f in files)
    s = read_summary(tmp_path / "summary.txt")
    assert s["steps"] == "0" and s["status"] == "ok"


def test_short_run_outputs(tmp_path):
    args = ["--quiet", "--output", str(tmp_path), "--override", "problem.T=6",
            "--override", "output.times=3"]
    for o in FAST:
        args += ["--override", o]
    assert main(args) == 0
    rows = list(csv.DictReader(open(tmp_path / "diagnostics.csv")))
    assert tuple(rows[0].keys()) == DIAGNOSTIC_COLUMNS
    assert [float(r["t"]) for r in rows] == [0.0, 3.0, 6.0]
    assert all(r["scheme"] == "implicit" for r in rows)
    assert (tmp_path / "line_t00003.000.csv").exists()
    assert (tmp_path / "snapshot_00002.vtk").exists()
    assert load_config(str(tmp_path / "run.cfg")).T == 6.0
    s = read_summary(tmp_path / "summary.txt")
    assert s["steps"] == "2" and float(s["t_final"]) == 6.0


def test_rerun_is_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        args = ["--quiet", "--output", str(d), "--override", "problem.T=6",
                "--override", "output.vtk=false"]
        for o in FAST:
            args += ["--override", o]
        assert main(args) == 0
        outs.append((d / "diagnostics.csv").read_bytes() + (d / "line_t00006.000.csv").read_bytes())
    assert outs[0] == outs[1]


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["--output", str(tmp_path), "--override", "scheme.kind=euler"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_print_config(capsys):
    assert main(["--print-config", "--override", "scheme.tau=5"]) == 0
    assert "tau = 5.0" in capsys.readouterr().out


def test_step_failure_exit_code(tmp_path, capsys):
    args = ["--quiet", "--output", str(tmp_path), "--override", "problem.T=6",
            "--override", "scheme.newton_max_iter=1", "--override", "scheme.newton_atol=1e-30",
            "--override", "scheme.newton_rtol=1e-30"]
    for o in FAST:
        args += ["--override", o]
    assert main(args) == 1
    assert "step failure: scheme=implicit t=0" in capsys.readouterr().err
    assert read_summary(tmp_path / "summary.txt")["status"] == "failed"


def test_last_step_lands_on_final_time():
    cfg = load_config(overrides=FAST + ["problem.T=7", "output.vtk=false"])
    cfg.output_dir = ""  # no files
    res = Simulation(cfg).run()
    assert res.ok and res.steps == 3 and res.t == pytest.approx(7.0)
    assert np.isclose([h["t"] for h in res.history], [0, 3, 6, 7]).all()


def test_bad_thread_count():
    assert main(["--threads", "0"]) == 2
