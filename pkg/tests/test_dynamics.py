import dataclasses
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from _builders import atom, const_G, delayed_spec, random_linear_spec, random_measure, zero_drift
from impdelay import Cone, ConfigurationError, ImpulsiveControl, ProblemSpec, VectorMeasure
from impdelay.dynamics import (delayed_eval, gronwall_bound, residual, simulate, trajectory_csv,
                               trajectory_differential)


def test_zero_dynamics_keep_initial_point():
    spec = ProblemSpec(T=1.0, delays=(0.0,), n=2, m=1, q=0, f=zero_drift, G=const_G([[1.0], [0.0]]))
    tr = simulate(spec, spec.zero_control(), [1.5, -2.0], 16)
    assert np.all(tr.right == [1.5, -2.0]) and np.all(tr.left == [1.5, -2.0])


def test_pure_jump():
    spec = ProblemSpec(T=1.0, delays=(0.0,), n=1, m=1, q=0, f=zero_drift, G=const_G([[1.0]]))
    tr = simulate(spec, atom(1.0, 0.5, 2.0), [0.0], 16)
    assert tr.value(0.49)[0] == 0.0 and tr.value(0.5)[0] == 2.0 and tr.value(1.0)[0] == 2.0
    assert tr.left_limit(0.5)[0] == 0.0
    assert tr.jumps()[0][0] == 0.5 and tr.jumps()[0][1][0] == 2.0


def test_method_of_steps_closed_form():
    spec = delayed_spec()
    tr = simulate(spec, spec.zero_control(), [1.0], 512)
    assert tr.final()[0] == pytest.approx(3.5, abs=1e-4)
    t = np.linspace(0, 2, 41)
    exact = np.where(t <= 1, 1 + t, 2 + (t - 1) + (t - 1) ** 2 / 2)
    assert np.max(np.abs(tr.value(t)[:, 0] - exact)) < 1e-4
    tr = simulate(spec, atom(2.0, 1.0, 1.0), [1.0], 512)
    assert tr.final()[0] == pytest.approx(4.5, abs=1e-4)


def test_delayed_eval_conventions():
    spec = delayed_spec(zeta=lambda s: (1 + np.asarray(s))[..., None])
    tr = simulate(spec, spec.zero_control(), [5.0], 64)
    assert delayed_eval(tr, 0.7, 1.0)[0] == pytest.approx(0.7)
    assert delayed_eval(tr, 1.0, 1.0)[0] == 5.0


def test_delayed_read_after_atom_matches_fine_grid():
    spec = delayed_spec()
    ctrl = atom(2.0, 0.3, 1.0)
    coarse = simulate(spec, ctrl, [1.0], 64)
    fine = simulate(spec, ctrl, [1.0], 4096)
    for t in (1.31, 1.35, 1.6):
        assert delayed_eval(coarse, t, 1.0)[0] == pytest.approx(delayed_eval(fine, t, 1.0)[0], abs=1e-3)


def test_delay_longer_than_horizon_reads_history():
    spec = ProblemSpec(T=1.0, delays=(0.0, 2.0), n=1, m=1, q=0, f=lambda t, xs, a: xs[..., 1, :], G=const_G([[1.0]]),
                       zeta=lambda s: np.full(np.shape(s) + (1,), 3.0))
    tr = simulate(spec, spec.zero_control(), [0.0], 1)
    assert tr.final()[0] == pytest.approx(3.0)


def test_against_solve_ivp_without_delay_effect():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    spec = ProblemSpec(T=2.0, delays=(0.0,), n=2, m=2, q=0, f=lambda t, xs, a: xs[..., 0, :] @ A.T + np.sin(t)[..., None],
                       G=const_G(np.eye(2)), cone=Cone.finitely_generated([[1, 0], [0, 1], [-1, 0], [0, -1]]))
    ctrl = ImpulsiveControl(VectorMeasure(2, 2.0, [(0.75, [1.0, -0.5])]))
    tr = simulate(spec, ctrl, [1.0, 0.0], 1024)
    rhs = lambda t, x: A @ x + np.sin(t)  # noqa: E731
    mid = solve_ivp(rhs, (0, 0.75), [1.0, 0.0], rtol=1e-11, atol=1e-12).y[:, -1] + [1.0, -0.5]
    end = solve_ivp(rhs, (0.75, 2.0), mid, rtol=1e-11, atol=1e-12).y[:, -1]
    assert np.max(np.abs(tr.final() - end)) < 1e-5


def test_grid_must_divide_delays():
    with pytest.raises(ConfigurationError):
        simulate(delayed_spec(), delayed_spec().zero_control(), [1.0], 3)


def test_gronwall_examples():
    spec = ProblemSpec(T=1.0, delays=(0.0,), n=1, m=1, q=0, f=zero_drift, G=const_G([[1.0]]))
    assert gronwall_bound(spec, spec.zero_control(), [2.0]) == pytest.approx(2.0)
    lin = ProblemSpec(T=1.0, delays=(0.0,), n=1, m=1, q=0, f=lambda t, xs, a: xs[..., 0, :], G=const_G([[1.0]]))
    assert gronwall_bound(lin, lin.zero_control(), [0.5]) == pytest.approx(1.5 * math.e, rel=1e-9)


def test_gronwall_dominates_random_linear_scenarios():
    rng = np.random.default_rng(11)
    for _ in range(30):
        spec = random_linear_spec(rng)
        ctrl = ImpulsiveControl(random_measure(rng, 2, 1.0, cone=spec.cone))
        xi = rng.normal(size=2)
        tr = simulate(spec, ctrl, xi, 64)
        assert tr.shifted_sup() <= gronwall_bound(spec, ctrl, xi, 64)


def test_residual_small_and_detects_missing_jump():
    spec = delayed_spec()
    ctrl = atom(2.0, 1.0, 1.0)
    tr = simulate(spec, ctrl, [1.0], 256)
    assert residual(spec, ctrl, tr) <= 1e-6 * (1 + tr.sup_norm())
    j = int(np.flatnonzero(np.isclose(tr.nodes, 1.0))[0])
    right = tr.right.copy()
    right[j:] -= 1.0
    left = tr.left.copy()
    left[j + 1:] -= 1.0
    wrong = dataclasses.replace(tr, right=right, left=left)
    assert residual(spec, ctrl, wrong) >= 1.0 - 1e-9
    flat = ProblemSpec(T=1.0, delays=(0.0,), n=1, m=1, q=0, f=zero_drift, G=const_G([[1.0]]))
    assert residual(flat, flat.zero_control(), simulate(flat, flat.zero_control(), [1.0], 8)) == 0.0


def test_one_sided_values_agree_away_from_atoms():
    spec = delayed_spec()
    tr = simulate(spec, atom(2.0, 0.5, 1.0), [1.0], 32)
    jump = np.abs(tr.right - tr.left)[:, 0] > 0
    assert np.allclose(tr.nodes[jump], [0.5])


def test_differential_recovers_jump_and_csv_is_deterministic():
    spec = delayed_spec()
    tr = simulate(spec, atom(2.0, 0.5, 1.0), [1.0], 32)
    d = trajectory_differential(tr)
    assert d.atom_times.tolist() == [0.5]
    assert trajectory_csv(tr) == trajectory_csv(simulate(spec, atom(2.0, 0.5, 1.0), [1.0], 32))
    assert trajectory_csv(tr).splitlines()[0] == "t,left_1,right_1"
