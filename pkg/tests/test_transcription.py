import numpy as np
import pytest

from _builders import atom, atom_placement_spec, const_G, zero_drift
from impdelay import ControlPath, ControlSet, ImpulsiveControl, ProblemSpec, TargetSet, VectorMeasure
from impdelay.transcription import Transcription, evaluate_cost, optimize, optimize_and_certify


def flat(**kw):
    args = dict(T=1.0, delays=(0.0,), n=1, m=1, q=0, f=zero_drift, G=const_G([[1.0]]))
    args.update(kw)
    return ProblemSpec(**args)


def test_cost_examples():
    assert evaluate_cost(flat(), atom(1.0, 0.3, 2.0), [0.0], 16) == 0.0
    spec = flat(Phi=lambda xi, xT: np.asarray(xT)[..., 0], l1=lambda t, a: np.ones(np.shape(t) + (1,)))
    for tau in (0.0, 0.37, 1.0):
        assert evaluate_cost(spec, atom(1.0, tau, 1.5), [0.0], 16) == pytest.approx(3.0, abs=1e-14)
    spec = flat(l0=lambda t, xs, a: np.ones(np.shape(t)))
    assert evaluate_cost(spec, spec.zero_control(), [0.0], 16) == pytest.approx(1.0, abs=1e-14)


def test_encode_decode_round_trip():
    spec = atom_placement_spec()
    tr = Transcription(spec, 16, density=True)
    ctrl = ImpulsiveControl(VectorMeasure(1, 1.0, [(0.25, 1.0), (0.5, 2.0)], np.arange(16.0)[:, None]))
    back, xi = tr.decode(tr.encode(ctrl, [0.0]))
    assert back.mu.allclose(ctrl.mu, 1e-12) and xi.tolist() == [0.0]


def test_projection_respects_cone_and_box():
    spec = flat(q=1, control_set=ControlSet.box([-1.0], [1.0]))
    tr = Transcription(spec, 4)
    v = tr.project(np.full(tr.size, -3.0))
    ctrl, _ = tr.decode(v)
    assert np.all(ctrl.alpha.values == -1.0) and ctrl.mu.is_zero()


def test_convex_quadratic_in_one_cell():
    spec = flat(q=1, control_set=ControlSet.box([-1.0], [1.0]), l0=lambda t, xs, a: (np.asarray(a)[..., 0] - 0.3) ** 2)
    tr = Transcription(spec, 1, starts=2)
    res = optimize(spec, tr, seed=1)
    assert res.control.alpha.values[0, 0] == pytest.approx(0.3, abs=1e-6)


def test_infeasible_target_penalty_reported():
    spec = flat(G=const_G([[0.0]]), target=TargetSet("fixed_both", 1, initial=[0.0], terminal=[1.0]))
    tr = Transcription(spec, 4, starts=1, rounds=3)
    assert tr.penalized
    res = optimize(spec, tr, seed=0)
    assert res.infeasibility == pytest.approx(1.0)
    assert res.objective >= res.penalty_weight * res.infeasibility ** 2
    assert res.penalty_weight == pytest.approx(1000.0)


def test_atom_placement_single_start():
    spec = atom_placement_spec()
    res, cert = optimize_and_certify(spec, Transcription(spec, 64, starts=1), seed=0, tol=1e-3)
    assert res.cost <= 1e-3
    assert res.control.mu.atom_times.tolist() == [0.5]
    assert res.control.mu.atom_weights[0, 0] == pytest.approx(1.0, abs=1e-6)
    assert cert.passed


def test_underconverged_run_names_failure():
    spec = atom_placement_spec()
    res, cert = optimize_and_certify(spec, Transcription(spec, 64, starts=1, max_evals=60), seed=0, tol=1e-3)
    assert not cert.passed and cert.first_failure == "cone_complementarity"


def test_optimizer_is_deterministic():
    spec = atom_placement_spec()
    a = optimize(spec, Transcription(spec, 16, starts=3), seed=4)
    b = optimize(spec, Transcription(spec, 16, starts=3), seed=4)
    assert np.array_equal(a.vector, b.vector) and a.trace_csv() == b.trace_csv()
