"""Problem data: dynamics, costs, control sets, targets and controls.

All data functions follow one broadcasting convention so they can be called
on a single point or on a whole batch of times:

=========  ==========================  =====================
function   arguments                   result
=========  ==========================  =====================
f          t (...), xs (..., N+1, n),  (..., n)
           a (..., q)
G          t (...), a (..., q)         (..., n, m)
l0         t, xs, a                    (...)
l1         t, a                        (..., m)
Phi        xi (..., n), xT (..., n)    (...)
Psi        x (..., n)                  (..., l)
zeta       s (...)                     (..., n)
=========  ==========================  =====================

``xs[..., k, :]`` is the state delayed by ``delays[k]`` (``delays[0] == 0``).
Optional analytic gradients: ``grad_f`` -> (..., N+1, n, n) with entry
``[k, i, j] = d f_i / d x_k[j]``, ``grad_l0`` -> (..., N+1, n),
``grad_Phi`` -> (..., 2n), ``grad_Psi`` -> (..., l, n).  Missing gradients are
replaced by central differences with step ``1e-6 * (1 + |state|)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, EvaluationError, InfeasibilityError
from .measures import TOL, Cone, VectorMeasure

FD_STEP = 1e-6
ENDPOINT_TOL = 1e-8

__all__ = [
    "ControlSet",
    "TargetSet",
    "InitialSet",
    "ControlPath",
    "ImpulsiveControl",
    "ProblemSpec",
]


class ControlSet:
    """A(t): either empty-dimensional, a box with time-dependent bounds, or a finite list."""

    def __init__(self, kind: str, q: int, lo=None, hi=None, points=None):
        if kind not in ("none", "box", "finite"):
            raise ConfigurationError(f"unknown control set kind {kind!r}")
        self.kind, self.q = kind, q
        if kind == "none" and q:
            raise ConfigurationError("control set 'none' requires q = 0")
        if kind == "box":
            if lo is None or hi is None or len(lo) != q or len(hi) != q:
                raise ConfigurationError(f"box control set needs {q} lower and upper bounds")
        if kind == "finite":
            pts = np.atleast_2d(np.asarray(points, dtype=float))
            if pts.size == 0 or pts.shape[1] != q:
                raise ConfigurationError(f"finite control set needs points with {q} entries")
            self.points = pts
        self.lo, self.hi = lo, hi

    @classmethod
    def none(cls) -> "ControlSet":
        return cls("none", 0)

    @classmethod
    def box(cls, lo, hi) -> "ControlSet":
        """Bounds may be numbers or callables of t."""
        return cls("box", len(lo), list(lo), list(hi))

    @classmethod
    def finite(cls, points) -> "ControlSet":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls("finite", pts.shape[1], points=pts)

    def bounds(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        ev = lambda b: float(b(t)) if callable(b) else float(b)  # noqa: E731
        return np.array([ev(b) for b in self.lo]), np.array([ev(b) for b in self.hi])

    def contains(self, t: float, a, tol: float = 1e-9) -> bool:
        a = np.asarray(a, dtype=float).reshape(self.q)
        if self.kind == "none":
            return True
        if self.kind == "box":
            lo, hi = self.bounds(t)
            return bool(np.all(a >= lo - tol) and np.all(a <= hi + tol))
        return bool(np.min(np.linalg.norm(self.points - a, axis=1)) <= tol)

    def samples(self, t: float, per_dim: int = 32) -> np.ndarray:
        """Lattice of A(t) (box) or the listed points; shape (k, q)."""
        if self.kind == "none":
            return np.zeros((1, 0))
        if self.kind == "finite":
            return self.points.copy()
        if self.q > 2:
            raise ConfigurationError("box lattices are limited to q <= 2")
        lo, hi = self.bounds(t)
        axes = [np.linspace(l, h, per_dim) for l, h in zip(lo, hi)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1)

    def project(self, t: float, a) -> np.ndarray:
        a = np.asarray(a, dtype=float).reshape(self.q)
        if self.kind == "box":
            lo, hi = self.bounds(t)
            return np.clip(a, lo, hi)
        if self.kind == "finite":
            return self.points[int(np.argmin(np.linalg.norm(self.points - a, axis=1)))].copy()
        return a


def _box_normal_distance(v, z, lo, hi, tol):
    """Distance from v to the normal cone of the box [lo, hi] at z (componentwise)."""
    out = np.zeros_like(v)
    for i in range(len(v)):
        fixed = hi[i] - lo[i] <= tol
        at_lo = z[i] <= lo[i] + tol
        at_hi = z[i] >= hi[i] - tol
        if fixed:
            out[i] = 0.0
        elif at_lo:
            out[i] = max(v[i], 0.0)
        elif at_hi:
            out[i] = max(-v[i], 0.0)
        else:
            out[i] = abs(v[i])
    return float(np.linalg.norm(out))


class TargetSet:
    """Endpoint constraint on (x(0), x(T)) in R^{2n}.

    Kinds: ``free``, ``fixed_initial_free_terminal``, ``fixed_both``, ``box``
    (``lo``/``hi`` over R^{2n}, ``None`` = unbounded) and ``affine``
    (``matrix @ z == offset``).
    """

    KINDS = ("free", "fixed_initial_free_terminal", "fixed_both", "box", "affine")

    def __init__(self, kind: str, n: int, **data):
        if kind not in self.KINDS:
            raise ConfigurationError(f"unknown target kind {kind!r}")
        self.kind, self.n = kind, n
        self.initial = self.terminal = None
        if kind in ("fixed_initial_free_terminal", "fixed_both"):
            self.initial = np.asarray(data["initial"], dtype=float).reshape(n)
        if kind == "fixed_both":
            self.terminal = np.asarray(data["terminal"], dtype=float).reshape(n)
        if kind == "box":
            lo = [(-np.inf if v is None else float(v)) for v in data["lo"]]
            hi = [(np.inf if v is None else float(v)) for v in data["hi"]]
            if len(lo) != 2 * n or len(hi) != 2 * n:
                raise ConfigurationError(f"box target needs {2 * n} bounds")
            self.lo, self.hi = np.array(lo), np.array(hi)
            if np.any(self.lo > self.hi):
                raise ConfigurationError("box target with lo > hi")
        if kind == "affine":
            A = np.atleast_2d(np.asarray(data["matrix"], dtype=float))
            if A.shape[1] != 2 * n:
                raise ConfigurationError(f"affine target matrix needs {2 * n} columns")
            b = np.asarray(data.get("offset", np.zeros(len(A))), dtype=float).reshape(len(A))
            self.matrix, self.offset = A, b

    @classmethod
    def from_json(cls, data: dict, n: int) -> "TargetSet":
        data = dict(data)
        kind = data.pop("kind", None)
        try:
            return cls(kind, n, **data)
        except KeyError as exc:
            raise ConfigurationError(f"target kind {kind!r} is missing {exc}") from exc

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.initial is not None:
            out["initial"] = self.initial.tolist()
        if self.terminal is not None:
            out["terminal"] = self.terminal.tolist()
        if self.kind == "box":
            out["lo"] = [None if np.isinf(v) else float(v) for v in self.lo]
            out["hi"] = [None if np.isinf(v) else float(v) for v in self.hi]
        if self.kind == "affine":
            out["matrix"] = self.matrix.tolist()
            out["offset"] = self.offset.tolist()
        return out

    @property
    def fixed_initial(self) -> np.ndarray | None:
        if self.initial is not None:
            return self.initial.copy()
        if self.kind == "box" and np.all(self.hi[: self.n] - self.lo[: self.n] <= TOL):
            return self.lo[: self.n].copy()
        return None

    @property
    def terminal_free(self) -> bool:
        """True when the terminal part of every normal cone is {0} at interior points."""
        if self.kind in ("free", "fixed_initial_free_terminal"):
            return True
        if self.kind == "box":
            return bool(np.all(np.isinf(self.lo[self.n:])) and np.all(np.isinf(self.hi[self.n:])))
        return False

    def distance(self, xi, xT) -> float:
        """Euclidean distance from (xi, xT) to the target."""
        z = np.concatenate([np.asarray(xi, float), np.asarray(xT, float)])
        n = self.n
        if self.kind == "free":
            return 0.0
        if self.kind == "fixed_initial_free_terminal":
            return float(np.linalg.norm(z[:n] - self.initial))
        if self.kind == "fixed_both":
            return float(np.linalg.norm(z - np.concatenate([self.initial, self.terminal])))
        if self.kind == "box":
            return float(np.linalg.norm(z - np.clip(z, self.lo, self.hi)))
        r = self.matrix @ z - self.offset
        corr, *_ = np.linalg.lstsq(self.matrix, r, rcond=None)
        return float(np.linalg.norm(corr))

    def contains(self, xi, xT, tol: float = ENDPOINT_TOL) -> bool:
        return self.distance(xi, xT) <= tol

    def require(self, xi, xT, tol: float = ENDPOINT_TOL):
        d = self.distance(xi, xT)
        if d > tol:
            raise InfeasibilityError(f"endpoint pair is at distance {d:.3e} from the target")

    def normal_distance(self, v, xi, xT, tol: float = ENDPOINT_TOL) -> float:
        """Distance from v in R^{2n} to the limiting normal cone N_T(xi, xT)."""
        v = np.asarray(v, dtype=float)
        n = self.n
        if self.kind == "free":
            return float(np.linalg.norm(v))
        if self.kind == "fixed_initial_free_terminal":
            return float(np.linalg.norm(v[n:]))
        if self.kind == "fixed_both":
            return 0.0
        z = np.concatenate([np.asarray(xi, float), np.asarray(xT, float)])
        if self.kind == "box":
            return _box_normal_distance(v, z, self.lo, self.hi, tol)
        coef, *_ = np.linalg.lstsq(self.matrix.T, v, rcond=None)
        return float(np.linalg.norm(v - self.matrix.T @ coef))


class InitialSet:
    """Closed set C of admissible initial points, a (possibly degenerate) box in R^n."""

    def __init__(self, n: int, lo=None, hi=None):
        self.n = n
        self.lo = np.full(n, -np.inf) if lo is None else np.array([-np.inf if v is None else v for v in lo], float)
        self.hi = np.full(n, np.inf) if hi is None else np.array([np.inf if v is None else v for v in hi], float)

    @classmethod
    def from_json(cls, data: dict, n: int) -> "InitialSet":
        kind = data.get("kind", "free")
        if kind == "free":
            return cls(n)
        if kind == "point":
            v = list(np.asarray(data["value"], float).reshape(n))
            return cls(n, v, v)
        if kind == "box":
            return cls(n, data["lo"], data["hi"])
        raise ConfigurationError(f"unknown initial set kind {kind!r}")

    def to_json(self) -> dict:
        enc = lambda a: [None if np.isinf(v) else float(v) for v in a]  # noqa: E731
        return {"kind": "box", "lo": enc(self.lo), "hi": enc(self.hi)}

    def contains(self, x, tol: float = ENDPOINT_TOL) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def normal_distance(self, v, x, tol: float = ENDPOINT_TOL) -> float:
        return _box_normal_distance(np.asarray(v, float), np.asarray(x, float), self.lo, self.hi, tol)


class ControlPath:
    """Piecewise-constant ordinary control on a uniform partition, plus point values.

    Point values (typically at atom times) override the cell value at exactly
    that time; they matter only for the measure part of the dynamics.
    """

    def __init__(self, T: float, values, points: dict | Sequence = ()):
        self.T = float(T)
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        if vals.ndim != 2 or len(vals) == 0:
            raise ConfigurationError("control values must have shape (cells, q)")
        self.values = vals
        self.values.setflags(write=False)
        items = points.items() if isinstance(points, dict) else points
        self.points = {float(t): np.asarray(a, float).reshape(vals.shape[1]) for t, a in items}

    @classmethod
    def constant(cls, T: float, a) -> "ControlPath":
        return cls(T, np.atleast_2d(np.asarray(a, dtype=float)))

    @property
    def q(self) -> int:
        return self.values.shape[1]

    @property
    def cells(self) -> int:
        return len(self.values)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.cells + 1)

    def __call__(self, t) -> np.ndarray:
        """Cell values, right-continuous, last cell closed at T (vectorized)."""
        idx = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, self.cells - 1)
        return self.values[idx]

    def at(self, t: float) -> np.ndarray:
        for s, a in self.points.items():
            if abs(s - t) <= TOL:
                return a.copy()
        return self(t)

    def lookup(self, t) -> np.ndarray:
        """Vectorized ``at``: cell values with point values substituted."""
        t = np.asarray(t, dtype=float)
        out = np.array(self(t), dtype=float)
        for s, a in self.points.items():
            out[np.abs(t - s) <= TOL] = a
        return out

    def change_points(self) -> np.ndarray:
        """Interior cell edges where the value changes."""
        if self.cells < 2:
            return np.zeros(0)
        jump = np.any(np.diff(self.values, axis=0) != 0, axis=1)
        return self.edges[1:-1][jump]

    def to_json(self) -> dict:
        return {
            "cells": self.cells,
            "values": self.values.tolist(),
            "points": [{"t": t, "a": a.tolist()} for t, a in sorted(self.points.items())],
        }

    @classmethod
    def from_json(cls, data: dict, T: float) -> "ControlPath":
        try:
            values = np.asarray(data["values"], dtype=float)
            points = [(p["t"], p["a"]) for p in data.get("points", [])]
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed control: {exc}") from exc
        if "cells" in data and int(data["cells"]) != len(values):
            raise ConfigurationError("control cell count does not match its values")
        return cls(T, values, points)


@dataclass(frozen=True)
class ImpulsiveControl:
    """(mu, alpha): a cone-valued vector measure and an ordinary control (None when q = 0)."""

    mu: VectorMeasure
    alpha: ControlPath | None = None

    def alpha_at(self, t: float) -> np.ndarray:
        return np.zeros(0) if self.alpha is None else self.alpha.at(t)

    def alpha_cells(self, t) -> np.ndarray:
        if self.alpha is None:
            return np.zeros(np.shape(t) + (0,))
        return self.alpha(t)

    def alpha_lookup(self, t) -> np.ndarray:
        if self.alpha is None:
            return np.zeros(np.shape(t) + (0,))
        return self.alpha.lookup(t)

    def breakpoints(self) -> np.ndarray:
        """Interior times where alpha or the density changes value."""
        pts = [] if self.alpha is None else [self.alpha.change_points()]
        mu = self.mu
        if mu.cells >= 2:
            jump = np.any(np.diff(mu.density, axis=0) != 0, axis=1)
            pts.append(mu.cell_edges[1:-1][jump])
        return np.unique(np.concatenate(pts)) if pts else np.zeros(0)

    def validate(self, spec: "ProblemSpec", tol: float = 1e-9):
        """Check alpha(t) in A(t) on every cell and atom, and mu's range in the cone."""
        if self.mu.m != spec.m or abs(self.mu.T - spec.T) > TOL:
            raise ConfigurationError("control measure does not match the problem dimensions")
        for k, w in enumerate(self.mu.atom_weights):
            if not spec.cone.contains(w, 1e-12):
                raise ConfigurationError(f"atom {k} weight is outside the cone")
        for k, d in enumerate(self.mu.density):
            if not spec.cone.contains(d, 1e-12):
                raise ConfigurationError(f"density cell {k} is outside the cone")
        if spec.q == 0:
            return
        if self.alpha is None or self.alpha.q != spec.q:
            raise ConfigurationError(f"control needs an ordinary part with q={spec.q}")
        edges = self.alpha.edges
        for k, a in enumerate(self.alpha.values):
            for t in (edges[k], 0.5 * (edges[k] + edges[k + 1])):
                if not spec.control_set.contains(t, a, tol):
                    raise ConfigurationError(f"alpha on cell {k} leaves A(t) at t={t}")
        for t in self.mu.atom_times:
            if not spec.control_set.contains(t, self.alpha.at(t), tol):
                raise ConfigurationError(f"alpha at atom time {t} leaves A(t)")

    def to_json(self) -> dict:
        out = {"mu": self.mu.to_json()}
        if self.alpha is not None:
            out["alpha"] = self.alpha.to_json()
        return out

    @classmethod
    def from_json(cls, data: dict, cone: Cone | None = None) -> "ImpulsiveControl":
        if "mu" not in data:
            raise ConfigurationError("control document lacks 'mu'")
        mu = VectorMeasure.from_json(data["mu"], cone)
        alpha = ControlPath.from_json(data["alpha"], mu.T) if data.get("alpha") else None
        return cls(mu, alpha)


@dataclass(eq=False)
class ProblemSpec:
    """Data of an impulsive delayed control problem (see module docstring)."""

    T: float
    delays: tuple
    n: int
    m: int
    q: int
    f: Callable
    G: Callable
    l0: Callable | None = None
    l1: Callable | None = None
    Phi: Callable | None = None
    zeta: Callable | None = None
    cone: Cone | None = None
    control_set: ControlSet | None = None
    target: TargetSet | None = None
    Psi: Callable | None = None
    initial_set: InitialSet | None = None
    grad_f: Callable | None = None
    grad_l0: Callable | None = None
    grad_Phi: Callable | None = None
    grad_Psi: Callable | None = None
    growth: Callable | None = None
    lipschitz: Callable | None = None
    state_free: bool = False
    nonsmooth: frozenset = frozenset()
    source: dict | None = None
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.T = float(self.T)
        self.delays = tuple(float(h) for h in self.delays)
        if not self.T > 0:
            raise ConfigurationError("horizon T must be positive")
        if not self.delays or self.delays[0] != 0.0:
            raise ConfigurationError("delays must start with 0")
        if any(b <= a for a, b in zip(self.delays, self.delays[1:])):
            raise ConfigurationError("delays must be strictly increasing")
        if self.cone is None:
            self.cone = Cone.nonnegative_orthant(self.m)
        if self.cone.m != self.m:
            raise ConfigurationError("cone dimension does not match m")
        if self.control_set is None:
            self.control_set = ControlSet.none()
        if self.control_set.q != self.q:
            raise ConfigurationError(f"control set has q={self.control_set.q}, expected {self.q}")
        if self.target is None:
            self.target = TargetSet("free", self.n)
        if self.initial_set is None:
            self.initial_set = InitialSet(self.n)
        n, m = self.n, self.m
        self._cache["zero_l0"] = self.l0 is None
        if self.l0 is None:
            self.l0 = lambda t, xs, a: np.zeros(np.shape(t))
        if self.l1 is None:
            self.l1 = lambda t, a: np.zeros(np.shape(t) + (m,))
        if self.Phi is None:
            self.Phi = lambda xi, xT: np.zeros(np.shape(xi)[:-1])
        if self.zeta is None:
            self.zeta = lambda s: np.zeros(np.shape(s) + (n,))
        self.validate()

    # -- basic properties --------------------------------------------------
    @property
    def N(self) -> int:
        return len(self.delays) - 1

    @property
    def h(self) -> float:
        return self.delays[-1]

    def validate(self):
        """Evaluate every datum on a few probe points and check shapes and finiteness."""
        n, m, q, N = self.n, self.m, self.q, self.N
        rng = np.random.default_rng(12345)
        ts = np.linspace(0.0, self.T, 5)
        for t in ts:
            a = self.control_set.samples(t, 3)[0] if q else np.zeros(0)
            for xs in (np.zeros((N + 1, n)), rng.normal(size=(N + 1, n))):
                _check(self.f(t, xs, a), (n,), "f", t)
                _check(self.l0(t, xs, a), (), "l0", t)
            _check(self.G(t, a), (n, m), "G", t)
            _check(self.l1(t, a), (m,), "l1", t)
        x = rng.normal(size=n)
        _check(self.Phi(x, x), (), "Phi", None)
        if self.h > 0:
            for s in np.linspace(-self.h, 0.0, 5):
                _check(self.zeta(s), (n,), "zeta", s)
        if self.Psi is not None:
            v = np.asarray(self.Psi(x))
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise ConfigurationError("Psi must return a finite vector")

    @property
    def l(self) -> int:
        return 0 if self.Psi is None else int(np.asarray(self.Psi(np.zeros(self.n))).shape[-1])

    # -- evaluation with checks ---------------------------------------------
    def eval_f(self, t, xs, a) -> np.ndarray:
        out = np.asarray(self.f(t, xs, a), dtype=float)
        shape = np.broadcast_shapes(np.shape(t), np.shape(xs)[:-2], np.shape(a)[:-1]) + (self.n,)
        out = np.array(np.broadcast_to(out, shape))
        if not np.all(np.isfinite(out)):
            bad = np.argwhere(~np.isfinite(out))[0][:-1]
            tt = np.broadcast_to(t, shape[:-1])[tuple(bad)] if shape[:-1] else t
            raise EvaluationError(f"drift is not finite at t={float(tt)} with state {np.asarray(xs)[tuple(bad)] if np.ndim(xs) > 2 else xs}")
        return out

    def eval_G(self, t, a) -> np.ndarray:
        out = np.asarray(self.G(t, a), dtype=float)
        shape = np.broadcast_shapes(np.shape(t), np.shape(a)[:-1]) + (self.n, self.m)
        out = np.array(np.broadcast_to(out, shape))
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"G is not finite near t={np.ravel(t)[0] if np.size(t) else t}")
        return out

    def eval_l0(self, t, xs, a) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(t), np.shape(xs)[:-2], np.shape(a)[:-1])
        out = np.array(np.broadcast_to(np.asarray(self.l0(t, xs, a), dtype=float), shape))
        if not np.all(np.isfinite(out)):
            raise EvaluationError("running cost l0 is not finite")
        return out

    def eval_l1(self, t, a) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(t), np.shape(a)[:-1]) + (self.m,)
        out = np.array(np.broadcast_to(np.asarray(self.l1(t, a), dtype=float), shape))
        if not np.all(np.isfinite(out)):
            raise EvaluationError("impulse cost l1 is not finite")
        return out

    def eval_zeta(self, s) -> np.ndarray:
        out = np.array(np.broadcast_to(np.asarray(self.zeta(s), dtype=float), np.shape(s) + (self.n,)))
        if not np.all(np.isfinite(out)):
            raise EvaluationError("history zeta is not finite")
        return out

    # -- derivatives --------------------------------------------------------
    def jac_f(self, t, xs, a, analytic: bool = True) -> np.ndarray:
        """d f / d x_k, shape (..., N+1, n, n)."""
        if analytic and self.grad_f is not None:
            shape = np.broadcast_shapes(np.shape(t), np.shape(xs)[:-2]) + (self.N + 1, self.n, self.n)
            return np.broadcast_to(np.asarray(self.grad_f(t, xs, a), float), shape)
        return _fd_jacobian(lambda z: self.eval_f(t, z, a), xs)

    def grad_l0_x(self, t, xs, a, analytic: bool = True) -> np.ndarray:
        """d l0 / d x_k, shape (..., N+1, n)."""
        if analytic and self.grad_l0 is not None:
            shape = np.broadcast_shapes(np.shape(t), np.shape(xs)[:-2]) + (self.N + 1, self.n)
            return np.broadcast_to(np.asarray(self.grad_l0(t, xs, a), float), shape)
        return _fd_gradient(lambda z: self.eval_l0(t, z, a), xs)

    def grad_Phi_x(self, xi, xT, analytic: bool = True) -> np.ndarray:
        xi, xT = np.asarray(xi, float), np.asarray(xT, float)
        if analytic and self.grad_Phi is not None:
            return np.asarray(self.grad_Phi(xi, xT), float).reshape(2 * self.n)
        z = np.concatenate([xi, xT])
        return _fd_gradient(lambda v: np.asarray(self.Phi(v[..., : self.n], v[..., self.n:]), float), z)

    def jac_Psi(self, x, analytic: bool = True) -> np.ndarray:
        if self.Psi is None:
            raise ConfigurationError("problem has no boundary map Psi")
        x = np.asarray(x, float)
        if analytic and self.grad_Psi is not None:
            return np.asarray(self.grad_Psi(x), float).reshape(self.l, self.n)
        cols = []
        for j in range(self.n):
            hstep = FD_STEP * (1 + abs(x[j]))
            e = np.zeros(self.n)
            e[j] = hstep
            cols.append((np.asarray(self.Psi(x + e)) - np.asarray(self.Psi(x - e))) / (2 * hstep))
        return np.stack(cols, axis=-1)

    # -- misc -----------------------------------------------------------------
    def check_grid(self, grid_cells: int) -> float:
        """Grid step; every delay must be an integer multiple of it (relative 1e-9)."""
        if grid_cells < 1:
            raise ConfigurationError("grid_cells must be positive")
        dt = self.T / grid_cells
        for hk in self.delays[1:]:
            r = hk / dt
            if abs(r - round(r)) > 1e-9 * max(1.0, r):
                raise ConfigurationError(f"delay {hk} is not a multiple of the grid step {dt}")
        return dt

    def zero_control(self) -> ImpulsiveControl:
        mu = VectorMeasure.zero(self.m, self.T, self.cone)
        alpha = None
        if self.q:
            alpha = ControlPath.constant(self.T, self.control_set.project(0.0, self.control_set.samples(0.0, 3)[0]))
        return ImpulsiveControl(mu, alpha)


def _check(value, shape, name, t):
    v = np.asarray(value, dtype=float)
    try:
        v = np.broadcast_to(v, shape)
    except ValueError:
        raise ConfigurationError(f"{name} returned shape {v.shape}, expected {shape}") from None
    if not np.all(np.isfinite(v)):
        where = "" if t is None else f" at t={t}"
        raise EvaluationError(f"{name} is not finite{where}")


def _fd_step(x):
    return FD_STEP * (1.0 + np.abs(x))


def _fd_jacobian(fn: Callable, xs) -> np.ndarray:
    """Central differences of fn(xs) -> (..., n_out) w.r.t. xs (..., K, n); shape (..., K, n_out, n)."""
    xs = np.asarray(xs, dtype=float)
    K, n = xs.shape[-2], xs.shape[-1]
    cols = []
    for k in range(K):
        row = []
        for j in range(n):
            hstep = _fd_step(xs[..., k, j])
            plus, minus = xs.copy(), xs.copy()
            plus[..., k, j] += hstep
            minus[..., k, j] -= hstep
            row.append((fn(plus) - fn(minus)) / (2 * hstep)[..., None])
        cols.append(np.stack(row, axis=-1))
    return np.stack(cols, axis=-3)


def _fd_gradient(fn: Callable, x) -> np.ndarray:
    """Central-difference gradient of a scalar fn w.r.t. every entry of x (same shape as x)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    it = np.ndindex(x.shape[-2:] if x.ndim >= 2 else x.shape[-1:])
    for idx in it:
        sl = (Ellipsis,) + idx
        hstep = _fd_step(x[sl])
        plus, minus = x.copy(), x.copy()
        plus[sl] += hstep
        minus[sl] -= hstep
        out[sl] = (np.asarray(fn(plus)) - np.asarray(fn(minus))) / (2 * hstep)
    return out
