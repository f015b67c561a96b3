import subprocess
import sys

import numpy as np
import pytest

from kolmo.cli import main
from kolmo.gridio import read_grid

SMALL = ["--set", "grid.half_width=12", "--set", "grid.n_time=8", "--resolution", "32"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def manifest(path):
    return dict(line.split(" = ", 1) for line in (path / "manifest.txt").read_text().splitlines())


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "kolmo.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "density" in res.stdout


def test_help_exits_zero(capsys):
    assert run(capsys, "solve", "--help")[0] == 0


@pytest.mark.parametrize("argv", [["density", "--stable", "--ou"], ["solve", "--picard", "--chain", "0.5"],
                                  ["verify", "--all", "--list"], ["verify"], ["flow", "--resolution", "0"]])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_assumption_error_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "density", "--out", str(tmp_path), "--set", "model.alpha=0.5")
    assert code == 2 and "alpha + beta" in err


def test_bad_thread_count(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("KOLMO_THREADS", "zero")
    code, _, err = run(capsys, "verify", "--list", "--out", str(tmp_path))
    assert code == 2 and "KOLMO_THREADS" in err


def test_density_stable(capsys, tmp_path):
    code, out, _ = run(capsys, "density", "--stable", "--t", "0.5", "--out", str(tmp_path), "--resolution", "64")
    assert code == 0 and "mass defect:" in out
    values = read_grid(tmp_path / "density_stable.ksgd")
    assert values.shape == (64, 64) and np.all(np.isfinite(values))
    assert manifest(tmp_path)["command"] == "density"
    text = (tmp_path / "manifest.txt").read_text()
    assert "inputs_hash = " in text and "numpy = " in text and "output = density_stable.csv sha256=" in text


def test_density_ou(capsys, tmp_path):
    code, out, _ = run(capsys, "density", "--ou", "--x", "0.2,0.1", "--out", str(tmp_path), "--resolution", "96")
    assert code == 0
    defect = float(out.split("mass defect:")[1])
    assert abs(defect) < 1e-2


def test_density_wrong_point_size(capsys, tmp_path):
    assert run(capsys, "density", "--ou", "--x", "0.2", "--out", str(tmp_path))[0] == 2


def test_flow(capsys, tmp_path):
    code, out, _ = run(capsys, "flow", "--x", "0.3,0.1", "--pairs", "20", "--out", str(tmp_path))
    assert code == 0 and "end state" in out
    assert (tmp_path / "flow_path.csv").exists() and (tmp_path / "flow_sensitivity.csv").exists()


def test_solve_writes_time_grid(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "--out", str(tmp_path), *SMALL)
    assert code == 0 and "u(0, 0) =" in out
    values = read_grid(tmp_path / "solution.ksgd")
    assert values.shape == (9, 32, 32)
    times = np.loadtxt(tmp_path / "solution_times.csv", delimiter=",", skiprows=2)
    assert times.shape == (9, 2) and times[-1, 1] == pytest.approx(1.0)


def test_solve_chain(capsys, tmp_path):
    code, _, _ = run(capsys, "solve", "--chain", "0.5", "--out", str(tmp_path), *SMALL)
    assert code == 0 and read_grid(tmp_path / "solution.ksgd").shape == (17, 32, 32)


def test_rerun_is_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(capsys, "mc", "--paths", "500", "--steps", "16", "--seed", "4", "--out", str(d))[0] == 0
    assert (a / "mc.csv").read_bytes() == (b / "mc.csv").read_bytes()
    ma, mb = manifest(a), manifest(b)
    assert ma["inputs_hash"] == mb["inputs_hash"] and ma["config_hash"] == mb["config_hash"]


def test_mc_output(capsys, tmp_path):
    code, out, _ = run(capsys, "mc", "--paths", "500", "--steps", "16", "--x", "0.1,0.2", "--out", str(tmp_path))
    assert code == 0 and "±" in out and "u(0, 0.1, 0.2)" in out


def test_seed_changes_hash(capsys, tmp_path):
    run(capsys, "mc", "--paths", "100", "--steps", "16", "--seed", "1", "--out", str(tmp_path / "a"))
    run(capsys, "mc", "--paths", "100", "--steps", "16", "--seed", "2", "--out", str(tmp_path / "b"))
    assert manifest(tmp_path / "a")["config_hash"] != manifest(tmp_path / "b")["config_hash"]


def test_verify_list_and_suite(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--list", "--out", str(tmp_path))
    assert code == 0 and "scaling-lemma" in out
    code, out, _ = run(capsys, "verify", "--suite", "scaling-lemma", "--out", str(tmp_path))
    assert code == 0 and "scaling-lemma: PASS" in out
    text = (tmp_path / "verify_scaling-lemma.csv").read_text()
    assert text.rstrip().endswith("# passed=1")


def test_verify_unknown_suite(capsys, tmp_path):
    assert run(capsys, "verify", "--suite", "nope", "--out", str(tmp_path))[0] == 2


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("run.seed = 11\nmc.paths = 200\nmc.steps = 16\n")
    code, _, _ = run(capsys, "mc", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 0 and manifest(tmp_path / "o")["seed"] == "11"
