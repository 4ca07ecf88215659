"""Small problem builders shared by the test modules."""

import numpy as np

from impdelay import ControlPath, ControlSet, Cone, ImpulsiveControl, ProblemSpec, TargetSet, VectorMeasure


def zero_drift(t, xs, a):
    shape = np.broadcast_shapes(np.shape(t), np.shape(xs)[:-2], np.shape(a)[:-1])
    return np.zeros(shape + (np.shape(xs)[-1],))


def const_G(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return lambda t, a: np.broadcast_to(M, np.broadcast_shapes(np.shape(t), np.shape(a)[:-1]) + M.shape)


def delayed_spec(**kw):
    """x' = x(t - 1) on [0, 2], history 1, unit impulse gain."""
    args = dict(T=2.0, delays=(0.0, 1.0), n=1, m=1, q=0, f=lambda t, xs, a: xs[..., 1, :], G=const_G([[1.0]]),
                zeta=lambda s: np.ones(np.shape(s) + (1,)),
                grad_f=lambda t, xs, a: np.broadcast_to(np.array([[[0.0]], [[1.0]]]),
                                                        np.broadcast_shapes(np.shape(t), np.shape(xs)[:-2]) + (2, 1, 1)))
    args.update(kw)
    return ProblemSpec(**args)


def atom_placement_spec(**kw):
    args = dict(T=1.0, delays=(0.0,), n=1, m=1, q=0, f=zero_drift, G=const_G([[1.0]]),
                l1=lambda t, a: ((np.asarray(t) - 0.5) ** 2)[..., None],
                Phi=lambda xi, xT: (np.asarray(xT)[..., 0] - 1.0) ** 2,
                target=TargetSet("fixed_initial_free_terminal", 1, initial=[0.0]), state_free=True)
    args.update(kw)
    return ProblemSpec(**args)


def switch_spec():
    """G(t, a) = a with A = [0, 1], f = 0."""
    return ProblemSpec(T=1.0, delays=(0.0,), n=1, m=1, q=1, f=zero_drift,
                       G=lambda t, a: np.asarray(a, dtype=float)[..., None, :],
                       control_set=ControlSet.box([0.0], [1.0]), state_free=True)


def step_spec():
    """G = indicator of t > 0."""
    return ProblemSpec(T=1.0, delays=(0.0,), n=1, m=1, q=0, f=zero_drift,
                       G=lambda t, a: (np.asarray(t) > 0).astype(float)[..., None, None] * np.ones((1, 1)),
                       state_free=True)


def continuity_spec():
    return ProblemSpec(T=1.0, delays=(0.0, 0.25), n=1, m=1, q=0,
                       f=lambda t, xs, a: -0.5 * xs[..., 0, :] + 0.25 * xs[..., 1, :],
                       G=lambda t, a: (1 + np.asarray(t) / 2)[..., None, None] * np.ones((1, 1)),
                       zeta=lambda s: np.ones(np.shape(s) + (1,)))


def atom(T, t, w, m=1, cone=None):
    return ImpulsiveControl(VectorMeasure(m, T, [(t, w)], cone=cone))


def random_linear_spec(rng, n=2, m=2, T=1.0, delay=0.25):
    A0, A1 = rng.normal(scale=0.8, size=(2, n, n))
    Gm = rng.normal(size=(n, m))
    c = rng.normal(size=n)
    return ProblemSpec(T=T, delays=(0.0, delay), n=n, m=m, q=0,
                       f=lambda t, xs, a: xs[..., 0, :] @ A0.T + xs[..., 1, :] @ A1.T + c,
                       G=const_G(Gm), zeta=lambda s: np.cos(np.asarray(s))[..., None] * np.ones(n),
                       cone=Cone.finitely_generated(np.vstack([np.eye(m), -np.eye(m)])))


def random_measure(rng, m, T, atoms=3, cells=8, cone=None, nonneg=False):
    times = rng.uniform(0, T, rng.integers(0, atoms + 1))
    w = rng.normal(size=(len(times), m))
    d = rng.normal(size=(cells, m)) * (rng.random((cells, 1)) < 0.6)
    if nonneg:
        w, d = np.abs(w), np.abs(d)
    return VectorMeasure(m, T, list(zip(times, w)), d, cone)
