import json
import subprocess
import sys

import numpy as np
import pytest

from franks_poisson.cli import main
from franks_poisson.core import random_symplectic, rotation
from franks_poisson.fields import make_rotation_hamiltonian, normal_form_hamiltonian, quadratic_hamiltonian
from franks_poisson.io import dump_json, matrix_to_json
from franks_poisson.realization import KFlowMap


@pytest.fixture
def files(tmp_path):
    rng = np.random.default_rng(0)
    lin = np.zeros(5)
    lin[2] = 1.0
    Q = rng.standard_normal((5, 5))
    paths = {
        "H0": normal_form_hamiltonian(2, 1).to_descriptor(),
        "K": make_rotation_hamiltonian(0.3, 1, 2, 1).to_descriptor(),
        "Hq": quadratic_hamiltonian(lin, 0.02 * (Q + Q.T), 2, 1).to_descriptor(),
        "A": matrix_to_json(random_symplectic(2, 1e-2, rng), 2, 1),
        "R": matrix_to_json(rotation(0.3), 1),
        "far": matrix_to_json(np.diag([1.5, 1 / 1.5]), 1),
        "base": KFlowMap(0.2, 2, 2, 1).descriptor(),
        "x0": [0.05, -0.02, 0.0, 0.01, 0.3],
        "bad_x0": [0.0, 0.0],
    }
    out = {}
    for k, v in paths.items():
        out[k] = str(tmp_path / f"{k}.json")
        dump_json(v, out[k])
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    out["broken"] = str(bad)
    out["dir"] = tmp_path
    return out


def run(argv, capsys):
    code = main(argv)
    text = capsys.readouterr().out
    return code, (json.loads(text) if text.strip() else None)


def test_decompose(files, capsys):
    code, out = run(["decompose", "--matrix", files["A"]], capsys)
    assert code == 0 and out["residual"] <= 1e-9
    code, _ = run(["decompose", "--matrix", files["far"]], capsys)
    assert code == 1


def test_flow_and_csv(files, capsys):
    csv = files["dir"] / "traj.csv"
    code, out = run(["flow", "--hamiltonian", files["H0"], "--x0", files["x0"], "--t", "0.5", "--csv", str(csv)],
                    capsys)
    assert code == 0
    assert np.allclose(out["endpoint"], [0.55, -0.02, 0.0, 0.01, 0.3], atol=1e-14)
    lines = csv.read_text().splitlines()
    assert lines[0].split(",")[0] == "t" and len(lines) > 2


def test_poincare(files, capsys):
    code, out = run(["poincare", "--hamiltonian", files["H0"]], capsys)
    assert code == 0 and out["tau"] == pytest.approx(1.0, abs=1e-12)


def test_realize_map(files, capsys):
    report = files["dir"] / "rep.json"
    code, out = run(["realize-map", "--target", files["A"], "--base", files["base"], "--samples", "50",
                     "--report", str(report)], capsys)
    assert code == 0
    assert json.loads(report.read_text())["passed"]
    assert out["kind"] == "perturbed_map"  # stdout carries the map descriptor


def test_realize_flow(files, capsys):
    code, out = run(["realize-flow", "--target", files["R"], "--rho", "1.0"], capsys)
    assert code == 0
    assert out["report"]["passed"]
    assert "descriptor" in out


def test_realize_out_of_regime(files, capsys):
    code, _ = run(["realize-map", "--target", files["far"]], capsys)
    assert code == 1


def test_flowbox(files, capsys):
    csv = files["dir"] / "chart.csv"
    code, out = run(["flowbox", "--hamiltonian", files["Hq"], "--samples", "30", "--csv", str(csv)], capsys)
    assert code == 0 and out["passed"]
    assert len(csv.read_text().splitlines()) == 31


def test_check(files, capsys):
    code, out = run(["check", "--hamiltonian", files["K"], "--samples", "20"], capsys)
    assert code == 0 and out["passed"]


def test_run_suite_small(files, capsys):
    code, out = run(["run-suite", "factorization", "--seed", "3", "--set", "factorization.trials=5",
                     "--set", "factorization.dims=[1,2]"], capsys)
    assert code == 0 and out["passed"]


def test_usage_errors(files, capsys):
    assert main(["flow", "--hamiltonian", str(files["dir"] / "missing.json")]) == 2
    assert main(["flow", "--hamiltonian", files["broken"]]) == 2
    assert main(["flow", "--hamiltonian", files["H0"], "--x0", files["bad_x0"]]) == 2
    assert main(["run-suite", "flows", "--set", "nodot=1"]) == 2
    assert main(["run-suite", "flows", "--set", "flows.unknown_key=1"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["run-suite", "no-such-suite"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_console_entry_point(files):
    out = subprocess.run([sys.executable, "-m", "franks_poisson.cli", "poincare", "--hamiltonian", files["H0"]],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["tau"] == pytest.approx(1.0, abs=1e-12)
