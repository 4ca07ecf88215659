import math

import numpy as np
import pytest

from _builders import (atom, const_G, continuity_spec, random_linear_spec, random_measure, step_spec, switch_spec,
                       zero_drift)
from impdelay import ControlPath, ImpulsiveControl, ProblemSpec, VectorMeasure
from impdelay.approximation import (compare_sequence, density_sequence, filippov_bound, mollify, shifted_distance,
                                    switch_pulse_sequence)
from impdelay.dynamics import simulate
from impdelay.measures import integrate


def test_mollify_examples():
    mol = mollify(atom(1.0, 0.5, 2.0), 0.1)
    assert mol.mu.atom_times.size == 0
    assert mol.mu.mass() == pytest.approx(2.0, abs=1e-12)
    edges = mol.mu.cell_edges
    mids = 0.5 * (edges[:-1] + edges[1:])
    inside = (mids > 0.5) & (mids < 0.6)
    assert np.allclose(mol.mu.density[inside], 20.0) and np.all(mol.mu.density[~inside] == 0)
    free = ImpulsiveControl(VectorMeasure(1, 1.0, density=[[1.0], [2.0]]))
    assert mollify(free, 0.1) is free
    for i in (4, 16, 64):
        m = mollify(atom(1.0, 0.0, 1.0), 1 / i)
        assert m.mu.density_at(0.5 / i)[0] == pytest.approx(i) and m.mu.mass() == pytest.approx(1.0)


def test_mollify_near_horizon_uses_left_block():
    m = mollify(atom(1.0, 1.0, 1.0), 0.25)
    assert m.mu.density_at(0.9)[0] == pytest.approx(4.0) and m.mu.density_at(0.7)[0] == 0.0


def test_continuous_gain_sequence_converges():
    spec = ProblemSpec(T=1.0, delays=(0.0,), n=1, m=1, q=0, f=zero_drift, G=const_G([[1.0]]))
    rep = density_sequence(spec, atom(1.0, 0.5, 1.0), [0.0], [2.0 ** -k for k in range(2, 9)], 256)
    assert rep.verdict == "converging"
    assert rep.endpoint_errors[-1] <= 1e-12


def test_delayed_continuity_errors_decrease():
    rep = density_sequence(continuity_spec(), atom(1.0, 0.25, 0.5), [1.0], [2.0 ** -k for k in range(2, 9)], 1024)
    e = rep.endpoint_errors
    assert all(b < a for a, b in zip(e[1:], e[2:]))
    assert e[-1] <= 1e-3
    # first-order decay in the width
    assert e[-2] / e[-1] == pytest.approx(2.0, rel=0.05)


def test_switch_pulses_do_not_converge():
    spec = switch_spec()
    ref = ImpulsiveControl(VectorMeasure(1, 1.0, [(0.0, 1.0)]), ControlPath.constant(1.0, [0.0]))
    widths = [1 / 4, 1 / 16, 1 / 64]
    rep = compare_sequence(spec, ref, [0.0], switch_pulse_sequence(ref, [1.0], widths), widths, 256)
    assert rep.verdict == "non-converging"
    assert all(e == pytest.approx(1.0, abs=0.01) for e in rep.endpoint_errors)
    assert all(g == 0.0 for g in rep.measure_gaps)


def test_step_gain_keeps_unit_gap():
    spec = step_spec()
    ref = atom(1.0, 0.0, 1.0)
    widths = [1 / 4, 1 / 16, 1 / 64]
    rep = density_sequence(spec, ref, [0.0], widths, 256)
    assert rep.verdict == "non-converging"
    assert all(e == pytest.approx(1.0, abs=0.01) for e in rep.endpoint_errors)
    a = lambda t: np.zeros(np.shape(t) + (0,))  # noqa: E731
    assert integrate(lambda t: spec.eval_G(t, a(t)), ref.mu, vectorized=True)[0] == 0.0
    for w in widths:
        mu_i = mollify(ref, w).mu
        assert integrate(lambda t: spec.eval_G(t, a(t)), mu_i, vectorized=True)[0] == pytest.approx(1.0, abs=1e-10)
    assert rep.measure_gaps[-1] < rep.measure_gaps[0]


def test_decreasing_widths_required():
    with pytest.raises(Exception):
        density_sequence(continuity_spec(), atom(1.0, 0.25, 0.5), [1.0], [0.1, 0.2], 64)


def test_filippov_identical_inputs_and_closed_form():
    lin = ProblemSpec(T=1.0, delays=(0.0,), n=1, m=1, q=0, f=lambda t, xs, a: xs[..., 0, :], G=const_G([[1.0]]),
                      lipschitz=lambda t: np.ones(np.shape(t)))
    ctrl = lin.zero_control()
    base = simulate(lin, ctrl, [1.0], 64)
    assert filippov_bound(lin, base, ([1.0], ctrl)) == 0.0
    assert filippov_bound(lin, base, ([1.1], ctrl)) == pytest.approx(0.1 * math.e, rel=1e-12)


def test_filippov_dominates_random_perturbations():
    rng = np.random.default_rng(2)
    for _ in range(20):
        spec = random_linear_spec(rng)
        c0 = ImpulsiveControl(random_measure(rng, 2, 1.0, cone=spec.cone))
        xi0 = rng.normal(size=2)
        base = simulate(spec, c0, xi0, 64)
        c1 = ImpulsiveControl(random_measure(rng, 2, 1.0, cone=spec.cone))
        xi1 = xi0 + 0.1 * rng.normal(size=2)
        observed = shifted_distance(base, simulate(spec, c1, xi1, 64))
        assert observed <= filippov_bound(spec, base, (xi1, c1)) * (1 + 1e-9)
