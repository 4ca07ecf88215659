"""Vector measures on [0, T] made of finitely many atoms plus a step density.

A :class:`VectorMeasure` stores

* atoms ``(t_i, w_i)`` with strictly increasing times and nonzero weights in R^m,
* a density that is constant on each cell of a uniform partition of [0, T].

Integrals are taken over closed intervals, so an atom sitting on an endpoint
counts (``cumulative(mu, t)`` is the right-continuous primitive of ``mu``).
Densities are integrated with the midpoint rule on the pieces obtained by
cutting the measure's own cells at any extra breakpoints the caller needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import nnls

from .errors import ConfigurationError, EvaluationError, UndefinedDirectionError

#: absolute tolerance for canonicalization and cone membership
TOL = 1e-12

__all__ = [
    "TOL",
    "Atom",
    "Cone",
    "VectorMeasure",
    "DirectionField",
    "total_variation",
    "radon_nikodym",
    "integrate",
    "cumulative",
    "default_test_family",
    "weakstar_gap",
    "aligned_cells",
]


@dataclass(frozen=True)
class Atom:
    time: float
    weight: np.ndarray


class Cone:
    """Closed convex cone in R^m given by unit generators.

    ``kind`` is one of ``nonnegative_orthant``, ``half_line`` or
    ``finitely_generated``.  Membership and projection have closed forms for
    the first two kinds; the general case goes through nonnegative least
    squares on the generator matrix.
    """

    KINDS = ("nonnegative_orthant", "half_line", "finitely_generated")

    def __init__(self, kind: str, m: int, generators=None):
        if kind not in self.KINDS:
            raise ConfigurationError(f"unknown cone kind {kind!r}")
        if kind == "nonnegative_orthant":
            gens = np.eye(m)
        else:
            gens = np.atleast_2d(np.asarray(generators, dtype=float))
            if gens.size == 0 or gens.shape[1] != m:
                raise ConfigurationError(f"cone generators must have {m} columns")
            norms = np.linalg.norm(gens, axis=1)
            if np.any(norms <= TOL):
                raise ConfigurationError("cone generators must be nonzero")
            gens = gens / norms[:, None]
            if kind == "half_line" and len(gens) != 1:
                raise ConfigurationError("a half line has exactly one generator")
        gens.setflags(write=False)
        self.kind = kind
        self.m = m
        self.generators = gens

    @classmethod
    def nonnegative_orthant(cls, m: int) -> "Cone":
        return cls("nonnegative_orthant", m)

    @classmethod
    def half_line(cls, direction) -> "Cone":
        d = np.atleast_1d(np.asarray(direction, dtype=float))
        return cls("half_line", d.size, [d])

    @classmethod
    def finitely_generated(cls, generators) -> "Cone":
        g = np.atleast_2d(np.asarray(generators, dtype=float))
        return cls("finitely_generated", g.shape[1], g)

    def __repr__(self):
        return f"Cone({self.kind!r}, m={self.m})"

    def __eq__(self, other):
        return (
            isinstance(other, Cone)
            and self.kind == other.kind
            and self.m == other.m
            and np.array_equal(self.generators, other.generators)
        )

    def __hash__(self):
        return hash((self.kind, self.m, self.generators.tobytes()))

    def contains(self, v, tol: float = TOL) -> bool:
        v = np.asarray(v, dtype=float)
        if np.all(np.abs(v) <= tol):
            return True
        if self.kind == "nonnegative_orthant":
            return bool(np.all(v >= -tol))
        if self.kind == "half_line":
            d = self.generators[0]
            c = float(v @ d)
            return c >= -tol and float(np.linalg.norm(v - c * d)) <= tol * (1 + abs(c))
        return float(np.linalg.norm(v - self.project(v))) <= tol * (1 + float(np.linalg.norm(v)))

    def project(self, v) -> np.ndarray:
        """Euclidean projection onto the cone."""
        v = np.asarray(v, dtype=float)
        if self.kind == "nonnegative_orthant":
            return np.maximum(v, 0.0)
        if self.kind == "half_line":
            d = self.generators[0]
            return max(float(v @ d), 0.0) * d
        coef, _ = nnls(self.generators.T, v)
        return self.generators.T @ coef

    def polar_violation(self, v) -> float:
        """max over generators g of (v . g)_+ ; zero iff v lies in the polar cone.

        For a closed convex cone the support function is 0 on the polar cone
        and +inf elsewhere, so this is the finite surrogate of sigma_K(v) <= 0.
        """
        v = np.asarray(v, dtype=float)
        return float(max(0.0, np.max(self.generators @ v)))

    def sample_compact(self, rng: np.random.Generator, k: int) -> np.ndarray:
        """k points of {w in K : |w_j| <= 1}, always including 0 and the scaled generators."""
        g = self.generators
        scaled = g / np.max(np.abs(g), axis=1, keepdims=True)
        fixed = np.vstack([np.zeros(self.m), scaled])
        extra = max(k - len(fixed), 0)
        if self.kind == "nonnegative_orthant":
            rand = rng.uniform(0.0, 1.0, size=(extra, self.m))
        else:
            c = rng.exponential(size=(extra, len(g)))
            rand = c @ g
            rand *= rng.uniform(0.0, 1.0, size=(extra, 1)) / np.maximum(
                np.max(np.abs(rand), axis=1, keepdims=True), TOL
            )
        return np.vstack([fixed, rand])[: max(k, len(fixed))]

    def to_json(self) -> dict:
        if self.kind == "nonnegative_orthant":
            return {"kind": self.kind}
        if self.kind == "half_line":
            return {"kind": self.kind, "direction": self.generators[0].tolist()}
        return {"kind": self.kind, "generators": self.generators.tolist()}

    @classmethod
    def from_json(cls, data: dict, m: int) -> "Cone":
        kind = data.get("kind")
        if kind == "nonnegative_orthant":
            return cls.nonnegative_orthant(m)
        if kind == "half_line":
            c = cls.half_line(data.get("direction", [1.0] * m))
        elif kind == "finitely_generated":
            c = cls.finitely_generated(data["generators"])
        else:
            raise ConfigurationError(f"unknown cone kind {kind!r}")
        if c.m != m:
            raise ConfigurationError(f"cone dimension {c.m} does not match m={m}")
        return c


class VectorMeasure:
    """R^m-valued measure on [0, T]: atoms plus a step density.

    Parameters
    ----------
    m : int
        Dimension of the values.
    T : float
        Horizon.
    atoms : iterable of (time, weight)
        Atoms; duplicates within ``TOL`` are merged, zero weights dropped.
    density : array_like, shape (cells, m), optional
        Density values on the uniform partition of [0, T] into ``cells`` cells.
    cone : Cone, optional
        If given every weight and density value must lie in it.
    """

    def __init__(self, m: int, T: float, atoms: Iterable = (), density=None, cone: Cone | None = None):
        if m < 1:
            raise ConfigurationError("measure dimension must be positive")
        if not T > 0:
            raise ConfigurationError("horizon must be positive")
        self.m = int(m)
        self.T = float(T)
        times, weights = [], []
        for a in atoms:
            t, w = (a.time, a.weight) if isinstance(a, Atom) else a
            times.append(float(t))
            weights.append(np.atleast_1d(np.asarray(w, dtype=float)).reshape(self.m))
        times = np.array(times, dtype=float)
        weights = np.array(weights, dtype=float).reshape(-1, self.m)
        order = np.argsort(times, kind="stable")
        times, weights = times[order], weights[order]
        bad = (times < -TOL) | (times > self.T + TOL)
        if np.any(bad):
            raise ConfigurationError(f"atom time {times[bad][0]} outside [0, {self.T}]")
        if not np.all(np.isfinite(weights)):
            t_bad = times[~np.all(np.isfinite(weights), axis=1)][0]
            raise ConfigurationError(f"non-finite atom weight at t={t_bad}")
        times = np.clip(times, 0.0, self.T)
        if len(times):
            # merge runs of times within TOL of the first time of the run
            if np.all(np.diff(times) > TOL):
                starts = list(range(len(times)))
            else:
                starts = [0]
                for i in range(1, len(times)):
                    if times[i] - times[starts[-1]] > TOL:
                        starts.append(i)
            times = times[starts]
            weights = np.add.reduceat(weights, starts, axis=0)
            keep = np.any(np.abs(weights) > TOL, axis=1)
            times, weights = times[keep], weights[keep]
        self.atom_times = times
        self.atom_weights = weights
        if density is None:
            dens = np.zeros((0, self.m))
        else:
            dens = np.asarray(density, dtype=float)
            if dens.ndim == 1:
                dens = dens.reshape(-1, 1) if self.m == 1 else dens.reshape(1, -1)
            if dens.ndim != 2 or dens.shape[1] != self.m:
                raise ConfigurationError(f"density must have shape (cells, {self.m})")
            if not np.all(np.isfinite(dens)):
                raise ConfigurationError("non-finite density value")
            if not np.any(dens):
                dens = np.zeros((0, self.m))
        self.density = dens
        for arr in (self.atom_times, self.atom_weights, self.density):
            arr.setflags(write=False)
        self.cone = cone
        if cone is not None:
            if cone.m != self.m:
                raise ConfigurationError("cone dimension does not match the measure")
            if cone.kind == "nonnegative_orthant":
                neg_atoms = np.any(self.atom_weights < -TOL, axis=1)
                neg_cells = np.any(self.density < -TOL, axis=1)
            else:
                neg_atoms = np.array([not cone.contains(w) for w in self.atom_weights], dtype=bool)
                neg_cells = np.array([not cone.contains(d) for d in self.density], dtype=bool)
            if np.any(neg_atoms):
                raise ConfigurationError(f"atom weight at t={self.atom_times[neg_atoms][0]} not in the cone")
            if np.any(neg_cells):
                raise ConfigurationError(f"density cell {np.flatnonzero(neg_cells)[0]} not in the cone")

    # -- structure -----------------------------------------------------
    @classmethod
    def zero(cls, m: int, T: float, cone: Cone | None = None) -> "VectorMeasure":
        return cls(m, T, cone=cone)

    @property
    def cells(self) -> int:
        return len(self.density)

    @property
    def cell_width(self) -> float:
        return self.T / self.cells if self.cells else self.T

    @property
    def cell_edges(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.cells + 1) if self.cells else np.array([0.0, self.T])

    @property
    def atoms(self) -> list[Atom]:
        return [Atom(float(t), w.copy()) for t, w in zip(self.atom_times, self.atom_weights)]

    def is_zero(self) -> bool:
        return len(self.atom_times) == 0 and self.cells == 0

    def mass(self) -> float:
        """Total variation norm: sum of componentwise total variations."""
        a = float(np.abs(self.atom_weights).sum())
        d = float(np.abs(self.density).sum()) * self.cell_width if self.cells else 0.0
        return a + d

    def cell_index(self, t) -> np.ndarray | int:
        """Index of the (right-continuous) density cell containing ``t``."""
        if not self.cells:
            raise ValueError("measure has no density partition")
        idx = np.searchsorted(self.cell_edges, t, side="right") - 1
        return np.clip(idx, 0, self.cells - 1)

    def density_at(self, t) -> np.ndarray:
        if not self.cells:
            return np.zeros(np.shape(t) + (self.m,))
        return self.density[self.cell_index(t)]

    def atom_at(self, t: float) -> np.ndarray:
        if len(self.atom_times):
            k = int(np.argmin(np.abs(self.atom_times - t)))
            if abs(self.atom_times[k] - t) <= TOL:
                return self.atom_weights[k].copy()
        return np.zeros(self.m)

    def with_cells(self, cells: int) -> "VectorMeasure":
        """Same measure with the density re-expressed on ``cells`` cells (a multiple)."""
        if not self.cells:
            return self
        if cells % self.cells:
            raise ConfigurationError(f"{cells} cells is not a refinement of {self.cells}")
        dens = np.repeat(self.density, cells // self.cells, axis=0)
        return VectorMeasure(self.m, self.T, zip(self.atom_times, self.atom_weights), dens, self.cone)

    def replace(self, atoms=None, density=None, cone="keep") -> "VectorMeasure":
        atoms = zip(self.atom_times, self.atom_weights) if atoms is None else atoms
        density = self.density if density is None else density
        return VectorMeasure(self.m, self.T, atoms, density, self.cone if cone == "keep" else cone)

    def __add__(self, other: "VectorMeasure") -> "VectorMeasure":
        if other.m != self.m or abs(other.T - self.T) > TOL:
            raise ConfigurationError("measures live on different spaces")
        a, b = self, other
        if a.cells and b.cells:
            c = math.lcm(a.cells, b.cells)
            a, b = a.with_cells(c), b.with_cells(c)
            dens = a.density + b.density
        else:
            dens = a.density if a.cells else b.density
        atoms = list(zip(a.atom_times, a.atom_weights)) + list(zip(b.atom_times, b.atom_weights))
        return VectorMeasure(self.m, self.T, atoms, dens, self.cone)

    def __neg__(self):
        return VectorMeasure(
            self.m, self.T, zip(self.atom_times, -self.atom_weights), -self.density if self.cells else None
        )

    def __sub__(self, other):
        return self + (-other)

    def allclose(self, other: "VectorMeasure", atol: float = 1e-10) -> bool:
        if self.m != other.m or abs(self.T - other.T) > TOL:
            return False
        if len(self.atom_times) != len(other.atom_times):
            return False
        if not np.allclose(self.atom_times, other.atom_times, atol=TOL, rtol=0):
            return False
        if not np.allclose(self.atom_weights, other.atom_weights, atol=atol, rtol=0):
            return False
        a, b = self, other
        if a.cells and b.cells and a.cells != b.cells:
            c = math.lcm(a.cells, b.cells)
            a, b = a.with_cells(c), b.with_cells(c)
        da = a.density if a.cells else np.zeros((max(b.cells, 1), self.m))
        db = b.density if b.cells else np.zeros((max(a.cells, 1), self.m))
        return bool(np.allclose(da, db, atol=atol, rtol=0))

    def __repr__(self):
        return f"VectorMeasure(m={self.m}, T={self.T}, atoms={len(self.atom_times)}, cells={self.cells})"

    # -- serialization -------------------------------------------------
    def to_json(self) -> dict:
        return {
            "m": self.m,
            "T": self.T,
            "atoms": [{"t": float(t), "w": [float(x) for x in w]} for t, w in zip(self.atom_times, self.atom_weights)],
            "density": {"cells": self.cells, "values": [[float(x) for x in row] for row in self.density]},
        }

    @classmethod
    def from_json(cls, data: dict, cone: Cone | None = None) -> "VectorMeasure":
        try:
            m, T = int(data["m"]), float(data["T"])
            atoms = [(a["t"], a["w"]) for a in data.get("atoms", [])]
            dens = data.get("density") or {"cells": 0, "values": []}
            values = np.asarray(dens.get("values", []), dtype=float).reshape(-1, m)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed measure: {exc}") from exc
        if len(values) != int(dens.get("cells", len(values))):
            raise ConfigurationError("density cell count does not match its values")
        return cls(m, T, atoms, values if len(values) else None, cone)


def aligned_cells(T: float, points: Iterable[float], base: int = 1, limit: int = 1 << 22) -> int:
    """Smallest multiple of ``base`` whose uniform partition of [0, T] hits every point."""
    cells = max(int(base), 1)
    for p in points:
        r = Fraction(float(p) / T).limit_denominator(limit)
        if abs(float(r) - p / T) > 1e-12:
            raise ConfigurationError(f"point {p} cannot be aligned to a uniform partition")
        cells = math.lcm(cells, r.denominator)
        if cells > limit:
            raise ConfigurationError("required partition is too fine")
    return cells


# -- operations -----------------------------------------------------------
def total_variation(mu: VectorMeasure) -> VectorMeasure:
    """|mu| as a scalar nonnegative measure (componentwise absolute values summed)."""
    atoms = zip(mu.atom_times, np.abs(mu.atom_weights).sum(axis=1, keepdims=True))
    dens = np.abs(mu.density).sum(axis=1, keepdims=True) if mu.cells else None
    return VectorMeasure(1, mu.T, atoms, dens)


class DirectionField:
    """omega = d mu / d|mu|, defined at atoms and on cells carrying mass."""

    def __init__(self, mu: VectorMeasure):
        self.measure = mu
        s = np.abs(mu.atom_weights).sum(axis=1, keepdims=True)
        self.atom_directions = mu.atom_weights / s if len(s) else np.zeros((0, mu.m))
        if mu.cells:
            s = np.abs(mu.density).sum(axis=1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                cd = np.where(s > TOL, mu.density / np.where(s > TOL, s, 1.0), np.nan)
            self.cell_directions = cd
        else:
            self.cell_directions = np.zeros((0, mu.m))

    def __call__(self, t: float) -> np.ndarray:
        mu = self.measure
        if len(mu.atom_times):
            k = int(np.argmin(np.abs(mu.atom_times - t)))
            if abs(mu.atom_times[k] - t) <= TOL:
                return self.atom_directions[k].copy()
        if mu.cells:
            d = self.cell_directions[mu.cell_index(t)]
            if np.all(np.isfinite(d)):
                return d.copy()
        raise UndefinedDirectionError(f"|mu| has no mass at t={t}")


def radon_nikodym(mu: VectorMeasure) -> DirectionField:
    return DirectionField(mu)


def piece_table(mu: VectorMeasure, lo: float, hi: float, breaks: Sequence[float] = ()):
    """Pieces of [lo, hi] cut at the measure's cell edges and at ``breaks``.

    Returns ``(left, right, mid, density)`` arrays, the density being the cell
    value on each piece.  Empty arrays if the measure has no density.
    """
    if not mu.cells or hi <= lo:
        z = np.zeros(0)
        return z, z, z, np.zeros((0, mu.m))
    edges = mu.cell_edges
    pts = np.concatenate([[lo, hi], edges[(edges > lo) & (edges < hi)], [b for b in breaks if lo < b < hi]])
    pts = np.unique(pts)
    left, right = pts[:-1], pts[1:]
    mid = 0.5 * (left + right)
    return left, right, mid, mu.density[mu.cell_index(mid)]


def _eval_batch(Psi: Callable, times: np.ndarray, vectorized: bool):
    if len(times) == 0:
        return None
    if vectorized:
        vals = np.asarray(Psi(times), dtype=float)
        if vals.ndim == 0:
            vals = np.full(len(times), float(vals))
    else:
        vals = np.array([np.asarray(Psi(float(s)), dtype=float) for s in times])
    if not np.all(np.isfinite(vals)):
        bad = np.where(~np.all(np.isfinite(vals.reshape(len(times), -1)), axis=1))[0][0]
        raise EvaluationError(f"integrand is not finite at t={times[bad]}")
    return vals


def integrate(Psi: Callable, mu: VectorMeasure, interval: tuple[float, float] | None = None,
              vectorized: bool = False, breaks: Sequence[float] = ()) -> np.ndarray:
    """Integral of Psi . mu over a closed interval (default [0, T]).

    ``Psi(t)`` may return a scalar (componentwise integral, result in R^m), a
    vector of length m (dot product, scalar result) or an (n, m) matrix
    (result in R^n).  With ``vectorized=True`` Psi receives an array of times
    and returns the stacked values.
    """
    lo, hi = (0.0, mu.T) if interval is None else (float(interval[0]), float(interval[1]))
    if lo < -TOL or hi > mu.T + TOL or hi < lo:
        raise ConfigurationError(f"interval [{lo}, {hi}] not inside [0, {mu.T}]")
    total = None
    mask = (mu.atom_times >= lo - TOL) & (mu.atom_times <= hi + TOL)
    if np.any(mask):
        times, w = mu.atom_times[mask], mu.atom_weights[mask]
        P = _eval_batch(Psi, times, vectorized)
        total = _sum_contrib(P, w)
    left, right, mid, dens = piece_table(mu, lo, hi, breaks)
    if len(mid):
        P = _eval_batch(Psi, mid, vectorized)
        part = _sum_contrib(P, dens * (right - left)[:, None])
        total = part if total is None else total + part
    if total is None:
        P = np.asarray(Psi(np.array([lo]) if vectorized else lo), dtype=float)
        if vectorized:
            P = P[0] if P.ndim else P
        return np.zeros(_result_shape(P, mu.m))
    return total


def _result_shape(P: np.ndarray, m: int):
    if P.ndim == 0:
        return (m,)
    if P.ndim == 1:
        return ()
    return (P.shape[0],)


def _sum_contrib(P: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Sum over the batch of P_k . w_k for scalar/vector/matrix P_k."""
    if P.ndim == 1:  # scalar per point
        return (P[:, None] * w).sum(axis=0)
    if P.ndim == 2:  # vector per point, dot product
        return np.asarray((P * w).sum())
    return np.einsum("kij,kj->i", P, w)


def cumulative(mu: VectorMeasure, t: float) -> np.ndarray:
    """z(t) = mu([0, t]); right-continuous, includes atoms at 0 and at t."""
    if t < -TOL or t > mu.T + TOL:
        raise ConfigurationError(f"t={t} outside [0, {mu.T}]")
    return integrate(lambda s: 1.0, mu, (0.0, min(max(t, 0.0), mu.T)))


def default_test_family(T: float) -> list[Callable]:
    """Monomials t^0..t^4 plus cos and sin of k pi t / T for k = 1..4."""
    fam: list[Callable] = [(lambda t, p=p: np.asarray(t, dtype=float) ** p) for p in range(5)]
    for k in range(1, 5):
        fam.append(lambda t, k=k: np.cos(k * np.pi * np.asarray(t) / T))
        fam.append(lambda t, k=k: np.sin(k * np.pi * np.asarray(t) / T))
    return fam


def test_integrals(mu: VectorMeasure, tests: Sequence[Callable]) -> np.ndarray:
    """Matrix of integrals of each test function against each component."""
    return np.array([integrate(phi, mu, vectorized=True) for phi in tests]).reshape(len(tests), mu.m)


test_integrals.__test__ = False  # not a pytest test


def weakstar_gap(mu1: VectorMeasure, mu2: VectorMeasure, tests: Sequence[Callable] | None = None) -> float:
    """max over tests phi and components j of |int phi dmu1^j - int phi dmu2^j|."""
    if mu1.m != mu2.m or abs(mu1.T - mu2.T) > TOL:
        raise ConfigurationError("measures live on different spaces")
    tests = default_test_family(mu1.T) if tests is None else tests
    diff = test_integrals(mu1, tests) - test_integrals(mu2, tests)
    return float(np.max(np.abs(diff))) if diff.size else 0.0
