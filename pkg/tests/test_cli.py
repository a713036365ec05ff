import csv

import pytest

from aniso_topo.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main

SMALL = """\
[mesh]
nx = 12
ny = 12
boundary.support = dirichlet, bottom, (-0.25, 0.25)
boundary.pad = traction, top, (-0.125, 0.125)

[anisotropy]
alpha = 0.5
delta = 0.1

[phasefield]
eps = 0.08
tau = 0.001
m = 0.7

[loads]
traction.pad = (5, 0)

[run]
t_end = 0.003
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def test_validate_good_and_bad(small_config, tmp_path, capsys):
    assert main(["validate", "--config", str(small_config)]) == EXIT_OK
    assert "[mesh]" in capsys.readouterr().out
    bad = tmp_path / "bad.cfg"
    bad.write_text(SMALL.replace("ny = 12", "ny 12"))
    assert main(["validate", "--config", str(bad)]) == EXIT_CONFIG
    assert "line 3" in capsys.readouterr().err


def test_missing_file_is_a_config_error(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "absent.cfg")]) == EXIT_CONFIG


def test_argparse_errors_map_to_config_exit():
    assert main([]) == EXIT_CONFIG
    assert main(["frank", "--alpha"]) == EXIT_CONFIG


def test_frank_and_wulff(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["frank", "--alpha", "0.5", "--delta", "0.1", "--samples", "36", "--out", str(out)]) == EXIT_OK
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y"]
    assert len(rows) == 38  # closed curve: first point repeated
    assert rows[1] == rows[-1]
    assert main(["wulff", "--alpha", "0.5", "--out", str(tmp_path / "w.csv")]) == EXIT_OK
    assert main(["frank", "--alpha", "0.5", "--lambda", "0.5", "--out", str(tmp_path / "n.csv")]) == EXIT_OK
    assert main(["wulff", "--alpha", "0.5", "--lambda", "0.5", "--out", str(tmp_path / "n.csv")]) == EXIT_CONFIG
    assert main(["frank", "--alpha", "2", "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG
    assert main(["frank", "--alpha", "0.5", "--samples", "3", "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG


def test_run_writes_artifacts(small_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(small_config), "--out", str(out)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("step=3 ")
    assert len((out / "trace.csv").read_text().splitlines()) == 4
    assert (out / "run.meta").exists()


def test_stepsize_too_large_is_a_solver_error(small_config, tmp_path, capsys):
    small_config.write_text(SMALL.replace("tau = 0.001", "tau = 0.1").replace("t_end = 0.003", "t_end = 0.2"))
    assert main(["run", "--config", str(small_config), "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert "StepsizeTooLarge" in capsys.readouterr().err


def test_sweep(small_config, tmp_path, capsys):
    out = tmp_path / "sweep"
    args = ["sweep", "--config", str(small_config), "--key", "anisotropy.alpha", "--out", str(out)]
    assert main(args + ["--values", " , "]) == EXIT_CONFIG
    assert main(args + ["--values", "0.3,0.7"]) == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["00_anisotropy.alpha=0.3", "01_anisotropy.alpha=0.7"]
    assert "alpha = 0.7" in (out / "01_anisotropy.alpha=0.7" / "run.meta").read_text()
    assert main(args + ["--values", "1.5"]) == EXIT_CONFIG


def test_sweep_rescales_vector_entry(small_config, tmp_path):
    out = tmp_path / "load"
    args = ["sweep", "--config", str(small_config), "--key", "loads.traction.pad", "--values", "2", "--out", str(out)]
    assert main(args) == EXIT_OK
    assert "traction.pad = (2.0, 0.0)" in (out / "00_loads.traction.pad=2" / "run.meta").read_text()


def test_scenario_print(capsys):
    assert main(["scenario", "cantilever", "--print", "--nx", "32"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "nx = 32" in text and "ny = 32" in text
    assert main(["scenario", "cantilever"]) == EXIT_CONFIG
    assert main(["scenario", "teapot", "--print"]) == EXIT_CONFIG
