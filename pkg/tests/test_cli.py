import json

import pytest

from blowup_lab.cli import EXIT_CONFIG, EXIT_IO, EXIT_SOLVER, RunConfig, main, parse_pairs
from blowup_lab.errors import ConfigError


@pytest.mark.parametrize("override", ["nu=0.5", "eps2=0.6", "ladder_points=0", "colour=red",
                                      "order_N=two"])
def test_bad_config_exit_code(tmp_path, override):
    assert main(["match", "--out", str(tmp_path), "--override", override]) == EXIT_CONFIG


def test_io_exit_codes(tmp_path):
    assert main(["match", "--config", str(tmp_path / "missing.cfg"),
                 "--out", str(tmp_path)]) == EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["match", "--out", str(blocker / "sub")]) == EXIT_IO


def test_solver_exit_code(tmp_path):
    # the ladder must start below the admissible threshold
    assert main(["residual", "--out", str(tmp_path), "--override", "ladder_t0=1e-2"]) == EXIT_SOLVER


def test_config_file_and_aliases(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# model\nN = 2\nnu = 1.25   # comment\n\ndelta = 0.3\n")
    rc = RunConfig.load(str(cfg), ["delta=0.25"], tmp_path)
    assert rc.params.order_N == 2 and rc.params.nu == 1.25 and rc.params.delta == 0.25
    with pytest.raises(ConfigError):
        parse_pairs(["no equals sign"])
    a = RunConfig.load(None, ["nu=1.5"], tmp_path)
    b = RunConfig.load(None, [], tmp_path)
    assert a.config_hash() == b.config_hash()


def test_match_is_deterministic(tmp_path):
    runs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["match", "--out", str(out)]) == 0
        runs.append(out)
    a = (runs[0] / "matching_report.json").read_bytes()
    assert a == (runs[1] / "matching_report.json").read_bytes()
    man = json.loads((runs[0] / "manifest.json").read_text())
    assert man["command"] == "match"
    assert man["config_hash"] == RunConfig.load(None, [], runs[0]).config_hash()
    rep = json.loads(a)
    assert rep["boundary"] and rep["beta0"]


def test_evolve_small_run(tmp_path):
    args = ["evolve", "--out", str(tmp_path), "--override", "initial=phi",
            "--override", "grid_n=256", "--override", "dt_kind=fixed",
            "--override", "dt=0.01", "--override", "duration=0.1",
            "--override", "perturbation=0.1", "--override", "max_steps=4"]
    assert main(args) == 0
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("t,energy,degree")
    assert len(lines) == 1 + 4
    assert "plot" in (tmp_path / "trajectory.gp").read_text()
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["completed"] is False
    # static data starts at t1 = 1 and duration is relative to t1
    assert man["t1"] == 1.0 and man["reach"] == pytest.approx(1.04)


def test_sweep(tmp_path):
    args = ["sweep", "--out", str(tmp_path), "--override", "sweep_command=match",
            "--override", "sweep_key=delta", "--override", "sweep_values=0.2,0.3"]
    assert main(args) == 0
    runs = sorted(p.name for p in tmp_path.iterdir() if p.is_dir())
    assert runs == ["run000_delta=0.2", "run001_delta=0.3"]
    for r in runs:
        assert (tmp_path / r / "matching_report.json").exists()
