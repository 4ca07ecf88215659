import json

import pytest

from impdelay.cli import main

ATOM = {"mu": {"m": 1, "T": 1.0, "atoms": [{"t": 0.5, "w": [1.0]}]}}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_validate_prints_report(capsys):
    assert main(["validate", "--scenario", "delayed_linear"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["valid"] and out["N"] == 1


def test_simulate_writes_report_and_trace(tmp_path):
    ctrl = write(tmp_path, "c.json", {"mu": {"m": 1, "T": 2.0, "atoms": [{"t": 1.0, "w": [1.0]}]}})
    assert main(["simulate", "--scenario", "delayed_linear", "--grid", "512", "--control", ctrl,
                 "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "simulate.json").read_text())
    assert rep["final"][0] == pytest.approx(4.5, abs=1e-4)
    header = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,left_1,right_1"


def test_aux_round_trip(tmp_path):
    ctrl = write(tmp_path, "c.json", {"mu": {"m": 1, "T": 1.0, "atoms": [{"t": 0.25, "w": [0.5]}]}})
    assert main(["to-aux", "--scenario", "continuous_gain", "--control", ctrl, "--out", str(tmp_path / "a")]) == 0
    assert json.loads((tmp_path / "a" / "to_aux.json").read_text())["integral_gap"] <= 1e-12
    assert main(["from-aux", "--scenario", "continuous_gain", "--control", str(tmp_path / "a" / "aux_control.json"),
                 "--out", str(tmp_path / "b")]) == 0
    back = json.loads((tmp_path / "b" / "control.json").read_text())
    assert back["mu"]["atoms"] == [{"t": 0.25, "w": [0.5]}]


def test_check_pmp_and_approx(tmp_path):
    ctrl = write(tmp_path, "c.json", ATOM)
    assert main(["check-pmp", "--scenario", "atom_placement", "--grid", "64", "--control", ctrl, "--lambda", "1",
                 "--tol", "1e-3", "--out", str(tmp_path / "p")]) == 0
    assert json.loads((tmp_path / "p" / "certificate.json").read_text())["passed"]
    assert (tmp_path / "p" / "adjoint.csv").read_text().startswith("t,p_1,drift_gap,cone_value")
    assert main(["approx", "--scenario", "atom_placement", "--grid", "64", "--control", ctrl, "--levels", "2:4",
                 "--out", str(tmp_path / "q")]) == 0
    assert len((tmp_path / "q" / "approx.csv").read_text().splitlines()) == 4


def test_optimize_small(tmp_path):
    assert main(["optimize", "--scenario", "atom_placement", "--grid", "16", "--starts", "1", "--certify",
                 "--tol", "1e-3", "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "optimize.json").read_text())
    assert rep["cost"] <= 1e-3 and rep["certificate"]["passed"]


def test_exit_codes(tmp_path):
    base = {"version": 1, "n": 1, "m": 1, "q": 0, "T": 1.0, "delays": [0], "G": [["1"]], "xi": [0.0]}
    bad = write(tmp_path, "bad.json", {**base, "f": ["0"], "delays": "x"})
    ev = write(tmp_path, "ev.json", {**base, "f": ["1/(t-0.5)"]})
    inf = write(tmp_path, "inf.json", {**base, "f": ["0"], "target": {"kind": "fixed_both", "initial": [0.0],
                                                                     "terminal": [1.0]}})
    div = write(tmp_path, "div.json", {**base, "f": ["10*x0^2"], "xi": [1.0]})
    assert main(["validate", "--scenario", bad]) == 2
    assert main(["validate", "--scenario", str(tmp_path / "missing.json")]) == 2
    assert main(["simulate", "--scenario", ev]) == 3
    assert main(["check-pmp", "--scenario", inf, "--grid", "8"]) == 4
    assert main(["simulate", "--scenario", div, "--grid", "64"]) == 5


def test_outputs_are_deterministic(tmp_path):
    ctrl = write(tmp_path, "c.json", ATOM)
    for run in ("r1", "r2"):
        assert main(["probe", "--scenario", "continuous_gain", "--samples", "100", "--out", str(tmp_path / run)]) == 0
        assert main(["check-pmp", "--scenario", "atom_placement", "--grid", "64", "--control", ctrl,
                     "--out", str(tmp_path / run)]) == 0
    for name in ("probe.json", "certificate.json", "adjoint.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
