"""Scalar-measure reparametrization of impulsive controls.

A control (mu, alpha) is rewritten as (nu, alpha, omega) with omega = dmu/d|mu|
and nu = (1 + sum_i |(G omega)_i|) |mu|.  The fast dynamics become the bounded
map g(t, a, w) = G(t, a) w / (1 + sum_i |(G(t, a) w)_i|).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dynamics import BVTrajectory, integrate_nodes, node_set
from .errors import ConfigurationError
from .measures import TOL, Cone, VectorMeasure
from .problem import ControlPath, ImpulsiveControl, ProblemSpec

__all__ = [
    "AuxiliaryControl",
    "g_frak",
    "h_frak",
    "to_auxiliary",
    "from_auxiliary",
    "simulate_auxiliary",
    "hausdorff_probe",
]


def _denominator(Gw: np.ndarray) -> np.ndarray:
    return 1.0 + np.abs(Gw).sum(axis=-1)


def g_frak(spec: ProblemSpec, t, a, w) -> np.ndarray:
    """Compactified fast dynamics, shape (..., n); sum of |entries| is below 1."""
    Gw = np.einsum("...ij,...j->...i", spec.eval_G(t, a), np.asarray(w, dtype=float))
    return Gw / _denominator(Gw)[..., None]


def h_frak(spec: ProblemSpec, t, a, w) -> np.ndarray:
    """w scaled by the same denominator as ``g_frak``, shape (..., m)."""
    w = np.asarray(w, dtype=float)
    Gw = np.einsum("...ij,...j->...i", spec.eval_G(t, a), w)
    return w / _denominator(Gw)[..., None]


@dataclass(frozen=True)
class AuxiliaryControl:
    """(nu, alpha, omega) with nu a nonnegative scalar measure.

    ``omega_atoms[k]`` is the direction at ``nu.atom_times[k]`` and
    ``omega_cells[c]`` the direction on density cell ``c`` of ``nu``.
    """

    nu: VectorMeasure
    alpha: ControlPath | None
    omega_atoms: np.ndarray
    omega_cells: np.ndarray

    def __post_init__(self):
        if self.nu.m != 1:
            raise ConfigurationError("nu must be a scalar measure")
        if np.any(self.nu.atom_weights < -TOL) or np.any(self.nu.density < -TOL):
            raise ConfigurationError("nu must be nonnegative")
        oa = np.asarray(self.omega_atoms, dtype=float)
        oc = np.asarray(self.omega_cells, dtype=float)
        if oa.ndim != 2 or len(oa) != len(self.nu.atom_times):
            raise ConfigurationError("omega is missing at some atom of nu")
        if oc.ndim != 2 or len(oc) != self.nu.cells:
            raise ConfigurationError("omega is missing on some density cell of nu")
        if oa.shape[1] != oc.shape[1] and len(oa) and len(oc):
            raise ConfigurationError("omega blocks disagree on the dimension m")
        if not (np.all(np.isfinite(oa)) and np.all(np.isfinite(oc))):
            raise ConfigurationError("omega has non-finite entries")
        object.__setattr__(self, "omega_atoms", oa)
        object.__setattr__(self, "omega_cells", oc)

    @property
    def m(self) -> int:
        for arr in (self.omega_atoms, self.omega_cells):
            if arr.shape[1]:
                return arr.shape[1]
        return 0

    def omega_at(self, t) -> np.ndarray:
        """Direction at times t: atom values at atom times, cell values elsewhere."""
        t = np.asarray(t, dtype=float)
        m = self.m
        out = np.zeros(t.shape + (m,))
        if self.nu.cells:
            out = np.array(self.omega_cells[self.nu.cell_index(t)])
        for tau, w in zip(self.nu.atom_times, self.omega_atoms):
            out[np.abs(t - tau) <= TOL] = w
        return out

    def alpha_cells(self, t) -> np.ndarray:
        if self.alpha is None:
            return np.zeros(np.shape(t) + (0,))
        return self.alpha(t)

    def alpha_at(self, t: float) -> np.ndarray:
        return np.zeros(0) if self.alpha is None else self.alpha.at(t)

    def validate(self, spec: ProblemSpec, tol: float = 1e-12):
        """omega must lie in the cone and in the unit box where nu has mass."""
        cone = spec.cone
        for t, wt, w in zip(self.nu.atom_times, self.nu.atom_weights[:, 0], self.omega_atoms):
            if wt > 0 and (np.any(np.abs(w) > 1 + tol) or not cone.contains(w, tol)):
                raise ConfigurationError(f"omega at atom t={t} is outside the compact cone section")
        for c, (d, w) in enumerate(zip(self.nu.density[:, 0] if self.nu.cells else [], self.omega_cells)):
            if d > 0 and (np.any(np.abs(w) > 1 + tol) or not cone.contains(w, tol)):
                raise ConfigurationError(f"omega on cell {c} is outside the compact cone section")

    def breakpoints(self) -> np.ndarray:
        pts = [] if self.alpha is None else [self.alpha.change_points()]
        if self.nu.cells >= 2:
            vals = np.hstack([self.nu.density, self.omega_cells])
            jump = np.any(np.diff(vals, axis=0) != 0, axis=1)
            pts.append(self.nu.cell_edges[1:-1][jump])
        return np.unique(np.concatenate(pts)) if pts else np.zeros(0)

    def to_json(self) -> dict:
        out = {
            "nu": self.nu.to_json(),
            "omega": {"atoms": self.omega_atoms.tolist(), "cells": self.omega_cells.tolist()},
        }
        if self.alpha is not None:
            out["alpha"] = self.alpha.to_json()
        return out

    @classmethod
    def from_json(cls, data: dict, m: int) -> "AuxiliaryControl":
        try:
            nu = VectorMeasure.from_json(data["nu"])
            om = data["omega"]
            oa = np.asarray(om.get("atoms", []), dtype=float).reshape(-1, m)
            oc = np.asarray(om.get("cells", []), dtype=float).reshape(-1, m)
        except KeyError as exc:
            raise ConfigurationError(f"auxiliary control lacks {exc}") from exc
        alpha = ControlPath.from_json(data["alpha"], nu.T) if data.get("alpha") else None
        return cls(nu, alpha, oa, oc)


def _scalar_cone() -> Cone:
    return Cone.nonnegative_orthant(1)


def to_auxiliary(control: ImpulsiveControl, spec: ProblemSpec) -> AuxiliaryControl:
    """omega = dmu/d|mu| and nu = (1 + sum_i |(G omega)_i|) |mu| (cells use midpoint G)."""
    mu, m = control.mu, spec.m
    atoms, omega_atoms = [], []
    for tau, w in zip(mu.atom_times, mu.atom_weights):
        s = np.abs(w).sum()
        om = w / s
        Gw = spec.eval_G(tau, control.alpha_at(tau)) @ om
        atoms.append((tau, [_denominator(Gw) * s]))
        omega_atoms.append(om)
    density, omega_cells = None, np.zeros((0, m))
    if mu.cells:
        d = np.asarray(mu.density)
        s = np.abs(d).sum(axis=1)
        mids = 0.5 * (mu.cell_edges[:-1] + mu.cell_edges[1:])
        omega_cells = np.divide(d, s[:, None], out=np.zeros_like(d), where=s[:, None] > 0)
        Gw = np.einsum("kij,kj->ki", spec.eval_G(mids, control.alpha_cells(mids)), omega_cells)
        density = (_denominator(Gw) * s)[:, None]
    nu = VectorMeasure(1, mu.T, atoms, density, _scalar_cone())
    if nu.cells != len(omega_cells):  # an all-zero density collapses
        omega_cells = np.zeros((nu.cells, m))
    return AuxiliaryControl(nu, control.alpha, np.array(omega_atoms).reshape(-1, m), omega_cells)


def from_auxiliary(aux: AuxiliaryControl, spec: ProblemSpec) -> ImpulsiveControl:
    """mu = omega nu / (1 + sum_i |(G omega)_i|)."""
    m, nu = spec.m, aux.nu
    if aux.m not in (0, m):
        raise ConfigurationError(f"omega has dimension {aux.m}, expected {m}")
    atoms = []
    for tau, v, om in zip(nu.atom_times, nu.atom_weights[:, 0], aux.omega_atoms):
        atoms.append((tau, om * v / _denominator(spec.eval_G(tau, aux.alpha_at(tau)) @ om)))
    density = None
    if nu.cells:
        mids = 0.5 * (nu.cell_edges[:-1] + nu.cell_edges[1:])
        Gw = np.einsum("kij,kj->ki", spec.eval_G(mids, aux.alpha_cells(mids)), aux.omega_cells)
        density = aux.omega_cells * (nu.density[:, 0] / _denominator(Gw))[:, None]
    mu = VectorMeasure(m, nu.T, atoms, density, spec.cone)
    return ImpulsiveControl(mu, aux.alpha)


def _aux_primitive(spec: ProblemSpec, aux: AuxiliaryControl, nodes: np.ndarray, atom_nodes: np.ndarray):
    n = spec.n
    M = len(nodes) - 1
    nu = aux.nu
    J = np.zeros((M + 1, n))
    for j, tau, v, om in zip(atom_nodes, nu.atom_times, nu.atom_weights[:, 0], aux.omega_atoms):
        J[j] += g_frak(spec, tau, aux.alpha_at(tau), om) * v
    D = np.zeros((M, n))
    if nu.cells:
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        dens = nu.density_at(mids)[:, 0]
        active = dens != 0
        if np.any(active):
            gm = g_frak(spec, mids[active], aux.alpha_cells(mids[active]), aux.omega_at(mids[active]))
            D[active] = (np.diff(nodes)[active] * dens[active])[:, None] * gm
    cumD = np.vstack([np.zeros((1, n)), np.cumsum(D, axis=0)])
    right = np.cumsum(J, axis=0) + cumD
    return right - J, right, D, J


def simulate_auxiliary(spec: ProblemSpec, aux: AuxiliaryControl, xi, grid_cells: int, *,
                       guard: bool = True) -> BVTrajectory:
    """Simulate with g(t, alpha, omega) nu(dt) in place of G(t, alpha) mu(dt)."""
    aux.validate(spec)
    nodes, atom_nodes = node_set(spec, aux.nu.atom_times, aux.breakpoints(), grid_cells)
    table = _aux_primitive(spec, aux, nodes, atom_nodes)
    return integrate_nodes(spec, nodes, atom_nodes, table, aux.alpha_cells, xi, grid_cells, guard=guard)


def hausdorff_probe(spec: ProblemSpec, times=None, cone_samples: int = 16, per_dim: int = 5,
                    seed: int = 0) -> np.ndarray:
    """Sampled Hausdorff distance between g(t_i, A(t_i), K~) and g(t_{i+1}, ...).

    The sets are represented by the same finite cloud of (a, w) samples at
    every time; the result has one entry per consecutive pair of times.
    """
    times = np.linspace(0.0, spec.T, 65) if times is None else np.asarray(times, dtype=float)
    rng = np.random.default_rng(seed)
    W = spec.cone.sample_compact(rng, cone_samples)
    clouds = []
    for t in times:
        A = spec.control_set.samples(t, per_dim)
        a = np.repeat(A, len(W), axis=0)
        w = np.tile(W, (len(A), 1))
        clouds.append(g_frak(spec, np.full(len(a), t), a, w))
    out = np.zeros(len(times) - 1)
    for i in range(len(times) - 1):
        d = cdist(clouds[i], clouds[i + 1])
        out[i] = max(d.min(axis=1).max(), d.min(axis=0).max())
    return out
