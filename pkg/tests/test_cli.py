import io
import re
import subprocess
import sys

import numpy as np
import pytest

from jetflow.cli import main


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_validate_free_particle(models):
    code, out, _ = run("validate", str(models / "free_particle.toml"))
    assert code == 0
    assert "FAIL" not in out and out.rstrip().endswith("OK")


def test_check_constant_speed(models):
    code, out, _ = run("check", str(models / "constant_speed.toml"), "--seed", "42")
    assert code == 0
    line = next(l for l in out.splitlines() if "orthogonality" in l)
    value = float(re.search(r": (\S+) \(tol", line).group(1))
    assert line.startswith("PASS") and value <= 1e-10


def test_every_report_number_has_tolerance(models):
    _, out, _ = run("check", str(models / "knife_edge.toml"), "--trials", "10")
    for line in out.splitlines():
        if line.startswith(("PASS", "FAIL")):
            assert "(tol " in line


def test_simulate_off_constraint(models):
    code, out, err = run("simulate", str(models / "constant_speed.toml"), "--state", "vx=0.7")
    assert code == 2 and "|f|" in err and out == ""


def test_simulate_csv_layout(models, tmp_path):
    path = tmp_path / "run.csv"
    code, _, err = run("simulate", str(models / "knife_edge.toml"), "--t1", "0.01", "--dt",
                       "0.005", "--out", str(path))
    assert code == 0 and "PASS" in err
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    assert header[:7] == ["t", "x", "y", "th", "vx", "vy", "vth"]
    assert all(h.startswith("mon_") for h in header[7:])
    assert len(lines) == 4
    row = lines[2].split(",")
    assert row[0] == "0.0050000000000000001"
    assert [float(c) for c in row] == [float(format(float(c), ".17g")) for c in row]


def test_simulate_deterministic(models, tmp_path):
    args = ("simulate", str(models / "constant_speed.toml"), "--t1", "0.2")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(*args, "--out", str(a))
    run(*args, "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_gnuplot(models, tmp_path):
    path = tmp_path / "h.csv"
    code, _, _ = run("hamsim", str(models / "harmonic_oscillator.toml"), "--out", str(path),
                     "--gnuplot", "--t1", "0.1")
    assert code == 0
    script = (tmp_path / "h.csv.gp").read_text()
    assert str(path) in script and "plot" in script
    assert run("hamsim", str(models / "harmonic_oscillator.toml"), "--gnuplot")[0] == 2


def test_hamsim_columns(models):
    code, out, _ = run("hamsim", str(models / "constant_speed.toml"), "--t1", "0.01", "--dt",
                       "0.005")
    assert code == 0
    assert out.splitlines()[0] == "t,x,y,p_x,p_y,mon_hamiltonian,mon_pullback"


def test_jacobi_oscillator(models):
    code, out, err = run("jacobi", str(models / "harmonic_oscillator.toml"), "--perturb",
                         "dx=0.3, dp_x=-0.7")
    assert code == 0 and err.startswith("PASS Jacobi")
    assert out.splitlines()[0] == "t,x,p_x,dx,dp_x,mon_fd_error"


def test_energy_knife_edge(models):
    code, out, err = run("energy", str(models / "knife_edge.toml"), "--t1", "0.5")
    assert code == 0
    assert out.splitlines()[0] == "t,mon_energy,mon_energy_balance,mon_reaction_power"
    assert "PASS reaction power" in err


def test_check_failure_exit_code(write_model):
    path = write_model('[space]\ndim = 1\n[newtonian]\nmetric = [["1"]]\nxi = ["v1"]\n')
    code, out, _ = run("validate", path)
    assert code == 1
    assert "FAIL compatibility" in out and "witness" in out


def test_numerical_failure_exit_code(write_model):
    path = write_model('[space]\ndim = 1\n[lagrangian]\nL = "0.5*v1^2"\n'
                       '[force]\nF = ["q1^3"]\n[initial]\nq = [1.0]\nv = [1.0]\n')
    code, _, err = run("simulate", path, "--t1", "10", "--dt", "0.01")
    assert code == 3 and "non-finite" in err


def test_input_errors(models, write_model):
    assert run("hamsim", write_model('[space]\ndim = 1\n[newtonian]\nmetric = [["1"]]\n'
                                     'xi = ["0"]\n[initial]\nq = [0]\n'))[0] == 2
    assert run("simulate", str(models / "free_particle.toml"), "--dt", "-1")[0] == 2
    assert run("bogus", str(models / "free_particle.toml"))[0] == 2
    assert run("check", str(models / "nowhere.toml"))[0] == 2


def test_console_entry_point(models):
    proc = subprocess.run([sys.executable, "-m", "jetflow.cli", "validate",
                           str(models / "knife_edge.toml")], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.rstrip().endswith("OK")
