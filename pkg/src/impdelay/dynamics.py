"""Simulation of measure-driven systems with delays in the drift.

The trajectory is computed as ``x = x_shift + x_prim`` where
``x_prim(t) = int_[0,t] G(s, alpha(s)) mu(ds)`` is tabulated directly (jumps are
applied exactly at atom nodes) and ``x_shift`` solves an ordinary delayed
equation integrated with Heun's method between nodes.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, HypothesisWarning
from .measures import TOL, VectorMeasure, piece_table
from .problem import ImpulsiveControl, ProblemSpec

__all__ = [
    "BVTrajectory",
    "DriftProbe",
    "GronwallReport",
    "simulate",
    "delayed_eval",
    "gronwall_bound",
    "gronwall_report",
    "probe_drift",
    "residual",
    "trajectory_differential",
    "trajectory_csv",
    "build_nodes",
    "node_set",
    "integrate_nodes",
    "primitive_table",
]

BLOWUP_FACTOR = 10.0
MAX_STATE = 1e150


# ---------------------------------------------------------------------------
# one-sided reads of node tables
# ---------------------------------------------------------------------------

def _encode_reads(nodes: np.ndarray, s, side: str, tol: float):
    """Encode one-sided evaluations of a node table at times ``s``.

    The value is ``wr * right[jr] + wl * left[jl]`` unless ``hist`` is set, in
    which case the history function must be used.
    """
    s = np.asarray(s, dtype=float)
    M = len(nodes) - 1
    hist = s < -tol
    if side == "left":
        hist = hist | (s <= tol)
    sc = np.clip(s, 0.0, nodes[-1])
    k = np.clip(np.searchsorted(nodes, sc, side="left"), 0, M)
    lo = np.clip(k - 1, 0, M)
    d_lo, d_hi = np.abs(nodes[lo] - sc), np.abs(nodes[k] - sc)
    near = np.where(d_lo <= d_hi, lo, k)
    at = np.minimum(d_lo, d_hi) <= tol
    j = np.clip(np.searchsorted(nodes, sc, side="right") - 1, 0, max(M - 1, 0))
    width = nodes[np.minimum(j + 1, M)] - nodes[j]
    theta = np.where(width > 0, (sc - nodes[j]) / np.where(width > 0, width, 1.0), 0.0)
    jr = np.where(at, near, j)
    jl = np.where(at, near, np.minimum(j + 1, M))
    if side == "right":
        wr, wl = np.where(at, 1.0, 1.0 - theta), np.where(at, 0.0, theta)
    else:
        wr, wl = np.where(at, 0.0, 1.0 - theta), np.where(at, 1.0, theta)
    return hist, jr, wr, jl, wl


def _apply_reads(code, right, left, hist_values):
    hist, jr, wr, jl, wl = code
    val = wr[..., None] * right[jr] + wl[..., None] * left[jl]
    return np.where(hist[..., None], hist_values, val)


# ---------------------------------------------------------------------------
# trajectory container
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BVTrajectory:
    """Node table of a BV trajectory with one-sided values.

    ``left[j]`` / ``right[j]`` are the limits from the left / right at
    ``nodes[j]``; ``left[0]`` is the initial point xi and ``right[0]`` is x(0+).
    Between nodes the trajectory is read by linear interpolation from the right
    value at the earlier node to the left value at the later one.
    """

    nodes: np.ndarray
    left: np.ndarray
    right: np.ndarray
    xi: np.ndarray
    history: Callable
    delays: tuple
    grid_cells: int
    atom_nodes: np.ndarray
    prim_left: np.ndarray
    prim_right: np.ndarray
    control: ImpulsiveControl | None = None

    def __post_init__(self):
        for arr in (self.nodes, self.left, self.right, self.xi, self.atom_nodes, self.prim_left, self.prim_right):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.left.shape[1]

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def dt(self) -> float:
        return self.T / self.grid_cells

    @property
    def tol(self) -> float:
        return 1e-9 * self.dt

    @property
    def h(self) -> float:
        return self.delays[-1]

    def read(self, s, side: str = "right") -> np.ndarray:
        """One-sided limit at times ``s`` (history for negative times)."""
        s = np.asarray(s, dtype=float)
        code = _encode_reads(self.nodes, s, side, self.tol)
        hv = np.asarray(self.history(np.minimum(s, 0.0)), dtype=float)
        hv = np.broadcast_to(hv, s.shape + (self.n,))
        return _apply_reads(code, self.right, self.left, hv)

    def value(self, t) -> np.ndarray:
        """Right-continuous evaluation; history before 0 and xi at exactly 0."""
        t = np.asarray(t, dtype=float)
        out = self.read(t, "right")
        zero = np.abs(t) <= self.tol
        return np.where(zero[..., None], self.xi, out)

    __call__ = value

    def left_limit(self, t) -> np.ndarray:
        return self.read(t, "left")

    def right_limit(self, t) -> np.ndarray:
        return self.read(t, "right")

    def delayed_states(self, t, side: str = "right") -> np.ndarray:
        """Stack {x(t - h_k)} as one-sided limits, shape (..., N+1, n)."""
        t = np.asarray(t, dtype=float)
        return np.stack([self.read(t - hk, side) for hk in self.delays], axis=-2)

    def sup_norm(self) -> float:
        return float(max(np.abs(self.left).max(), np.abs(self.right).max()))

    def shifted(self) -> tuple[np.ndarray, np.ndarray]:
        """(left, right) tables of x minus its measure primitive."""
        return self.left - self.prim_left, self.right - self.prim_right

    def shifted_sup(self) -> float:
        sl, sr = self.shifted()
        return float(max(np.linalg.norm(sl, axis=1).max(), np.linalg.norm(sr, axis=1).max()))

    def jumps(self) -> list[tuple[float, np.ndarray]]:
        return [(float(self.nodes[j]), self.right[j] - self.left[j]) for j in self.atom_nodes]

    def grid_indices(self) -> np.ndarray:
        """Indices of the base-grid nodes inside ``nodes``."""
        base = np.linspace(0.0, self.T, self.grid_cells + 1)
        idx = np.searchsorted(self.nodes, base - self.tol)
        return np.clip(idx, 0, len(self.nodes) - 1)

    def final(self) -> np.ndarray:
        return self.right[-1].copy()


def delayed_eval(traj: BVTrajectory, t: float, h_k: float) -> np.ndarray:
    """x(t - h_k): history before 0, xi at exactly 0, right-continuous after."""
    return traj.value(float(t) - float(h_k))


# ---------------------------------------------------------------------------
# node set and measure primitive
# ---------------------------------------------------------------------------

def _propagate(times: Sequence[float], delays: Sequence[float], T: float, tol: float) -> np.ndarray:
    """All tau + (nonnegative integer combination of delays) inside (0, T]."""
    lags = [h for h in delays if h > 0]
    seen: list[float] = []
    frontier = list(times)
    while frontier:
        nxt = []
        for tau in frontier:
            for hk in lags:
                s = tau + hk
                if s <= T + tol and not any(abs(s - u) <= tol for u in seen):
                    seen.append(s)
                    nxt.append(s)
        frontier = nxt
        if len(seen) > 100000:
            raise ConfigurationError("too many propagated breakpoints; refine delays or atoms")
    return np.array(seen, dtype=float)


def build_nodes(spec: ProblemSpec, control: ImpulsiveControl, grid_cells: int):
    """Node times and the indices of atom nodes.

    Nodes are the base grid, the atom times, the times where alpha or the
    density change value, and atom times shifted by the delays.
    """
    return node_set(spec, control.mu.atom_times, control.breakpoints(), grid_cells)


def node_set(spec: ProblemSpec, atoms: np.ndarray, breaks: np.ndarray, grid_cells: int):
    dt = spec.check_grid(grid_cells)
    T = spec.T
    tol = 1e-9 * dt
    parts = [
        (atoms, 0),
        (np.linspace(0.0, T, grid_cells + 1), 1),
        (breaks, 2),
        (_propagate(atoms, spec.delays[1:], T, tol), 3),
    ]
    times = np.concatenate([p for p, _ in parts])
    prio = np.concatenate([np.full(len(p), k) for p, k in parts])
    order = np.lexsort((prio, times))
    times, prio = times[order], prio[order]
    # clusters of times closer than tol; each is represented by its best-priority member
    cluster = np.concatenate([[0], np.cumsum(np.diff(times) > tol)])
    pick = np.lexsort((times, prio, cluster))
    first = np.concatenate([[True], np.diff(cluster[pick]) != 0])
    nodes = times[pick[first]]
    nodes[0], nodes[-1] = 0.0, T
    atoms = np.asarray(atoms, dtype=float)
    k = np.clip(np.searchsorted(nodes, atoms), 1, len(nodes) - 1)
    atom_nodes = np.where(np.abs(nodes[k - 1] - atoms) <= np.abs(nodes[k] - atoms), k - 1, k).astype(int)
    return nodes, atom_nodes


def primitive_table(spec: ProblemSpec, control: ImpulsiveControl, nodes: np.ndarray, atom_nodes: np.ndarray):
    """Measure primitive on the nodes.

    Returns ``(prim_left, prim_right, D, J)`` where ``D[i]`` is the density
    contribution on ``(nodes[i], nodes[i+1])`` (midpoint rule) and ``J[j]``
    the jump at node j.
    """
    n = spec.n
    M = len(nodes) - 1
    mu = control.mu
    J = np.zeros((M + 1, n))
    if len(mu.atom_times):
        Ga = spec.eval_G(mu.atom_times, control.alpha_lookup(mu.atom_times))
        np.add.at(J, atom_nodes, np.einsum("knm,km->kn", Ga, mu.atom_weights))
    D = np.zeros((M, n))
    if mu.cells:
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        dens = mu.density_at(mids)
        active = np.any(dens != 0, axis=1)
        if np.any(active):
            Gm = spec.eval_G(mids[active], control.alpha_cells(mids[active]))
            D[active] = np.diff(nodes)[active, None] * np.einsum("knm,km->kn", Gm, dens[active])
    cumD = np.vstack([np.zeros((1, n)), np.cumsum(D, axis=0)])
    right = np.cumsum(J, axis=0) + cumD
    left = right - J
    return left, right, D, J


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def simulate(spec: ProblemSpec, control: ImpulsiveControl, xi, grid_cells: int, *,
             guard: bool = True, check: bool = True) -> BVTrajectory:
    """Solve the impulsive delayed system for one control and initial point.

    Parameters
    ----------
    grid_cells : int
        Number of base cells; ``T / grid_cells`` must divide every delay.
    guard : bool
        Raise ``DivergenceError`` when ``|x - x_prim|`` exceeds ten times the
        Gronwall bound (when that bound is finite).
    check : bool
        Validate the control against the cone and the control set first.
    """
    if check:
        control.validate(spec)
    nodes, atom_nodes = build_nodes(spec, control, grid_cells)
    table = primitive_table(spec, control, nodes, atom_nodes)
    return integrate_nodes(spec, nodes, atom_nodes, table, control.alpha_cells, xi, grid_cells,
                           guard=guard, control=control)


def integrate_nodes(spec: ProblemSpec, nodes, atom_nodes, table, alpha_cells: Callable, xi, grid_cells: int,
                    *, guard: bool = True, control=None) -> BVTrajectory:
    """Integrate the shifted delayed equation on prepared nodes and a measure primitive table."""
    xi = np.asarray(xi, dtype=float).reshape(spec.n)
    if not np.all(np.isfinite(xi)):
        raise ConfigurationError("initial point must be finite")
    pl, pr, D, J = table
    M = len(nodes) - 1
    dts = np.diff(nodes)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    aI = alpha_cells(mids)
    n, K = spec.n, spec.N + 1

    if spec.state_free:
        zeros = np.zeros((M, K, n))
        k1 = spec.eval_f(nodes[:-1], zeros, aI)
        k2 = spec.eval_f(nodes[1:], zeros, aI)
        F = np.vstack([np.zeros((1, n)), np.cumsum(0.5 * dts[:, None] * (k1 + k2), axis=0)])
        left, right = xi + F + pl, xi + F + pr
    else:
        left, right = _heun(spec, nodes, dts, aI, D, J, xi)

    traj = BVTrajectory(nodes, left, right, xi.copy(), spec.eval_zeta, spec.delays, int(grid_cells),
                        np.asarray(atom_nodes, dtype=int), pl, pr, control)
    if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
        raise DivergenceError("trajectory is not finite")
    if guard:
        bound = _gronwall_from_tables(spec, xi, pl, pr, warn=False)
        if np.isfinite(bound) and traj.shifted_sup() > BLOWUP_FACTOR * bound * (1 + 1e-9) + 1e-12:
            raise DivergenceError(
                f"|x - x_prim| = {traj.shifted_sup():.6g} exceeds {BLOWUP_FACTOR:g} x Gronwall bound {bound:.6g}")
    return traj


def _heun(spec, nodes, dts, aI, D, J, xi):
    M = len(nodes) - 1
    n, N = spec.n, spec.N
    tol = 1e-9 * spec.T / max(M, 1)
    left = np.zeros((M + 1, n))
    right = np.zeros((M + 1, n))
    left[0] = xi
    right[0] = xi + J[0]
    lags = np.array(spec.delays[1:])
    if N:
        sl = nodes[:-1, None] - lags[None, :]
        sr = nodes[1:, None] - lags[None, :]
        code_l = _encode_reads(nodes, sl, "right", tol)
        code_r = _encode_reads(nodes, sr, "left", tol)
        hist_l = spec.eval_zeta(np.minimum(sl, 0.0))
        hist_r = spec.eval_zeta(np.minimum(sr, 0.0))
    xs = np.zeros((N + 1, n))
    for i in range(M):
        x0 = right[i]
        xs[0] = x0
        if N:
            c = tuple(part[i] for part in code_l)
            xs[1:] = _apply_reads(c, right, left, hist_l[i])
        k1 = spec.eval_f(nodes[i], xs, aI[i])
        y = x0 + dts[i] * k1 + D[i]
        if not np.all(np.abs(y) < MAX_STATE):
            raise DivergenceError(f"state left every bound near t={nodes[i]:.6g}")
        xs[0] = y
        if N:
            c = tuple(part[i] for part in code_r)
            xs[1:] = _apply_reads(c, right, left, hist_r[i])
        k2 = spec.eval_f(nodes[i + 1], xs, aI[i])
        left[i + 1] = x0 + 0.5 * dts[i] * (k1 + k2) + D[i]
        right[i + 1] = left[i + 1] + J[i + 1]
        if not np.all(np.abs(right[i + 1]) < MAX_STATE):
            raise DivergenceError(f"state left every bound near t={nodes[i + 1]:.6g}")
    return left, right


# ---------------------------------------------------------------------------
# growth / Lipschitz probes and the Gronwall bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftProbe:
    """Sampled growth coefficient c(t) and Lipschitz modulus L(t) of the drift."""

    times: np.ndarray
    growth: np.ndarray
    lipschitz: np.ndarray
    growth_by_radius: dict
    lipschitz_by_radius: dict
    growth_flag: bool
    lipschitz_flag: bool

    @staticmethod
    def _upper_integral(times, vals) -> float:
        return float(np.sum(np.diff(times) * np.maximum(vals[:-1], vals[1:])))

    @property
    def growth_integral(self) -> float:
        return self._upper_integral(self.times, self.growth)

    @property
    def lipschitz_integral(self) -> float:
        return self._upper_integral(self.times, self.lipschitz)


RADII = (1.0, 10.0, 100.0, 1000.0)


def _stacked_norm(jac: np.ndarray) -> np.ndarray:
    """Spectral norm of d f / d {x_k} viewed as an n x n(N+1) matrix."""
    K, n = jac.shape[-3], jac.shape[-1]
    mat = np.moveaxis(jac, -3, -2).reshape(jac.shape[:-3] + (n, K * n))
    return np.linalg.norm(mat, ord=2, axis=(-2, -1))


def _control_samples(spec: ProblemSpec, times: np.ndarray, per_dim: int) -> np.ndarray:
    """Control samples per time, shape (len(times), k, q)."""
    return np.stack([spec.control_set.samples(t, per_dim) for t in times])


def probe_drift(spec: ProblemSpec, samples: int = 129, directions: int = 4, seed: int = 0,
                per_dim: int = 9) -> DriftProbe:
    """Estimate c(t) and L(t) for the drift by sampling probe states.

    c(t) is the largest of |f(t, 0, a)|, the Jacobian norm at probes of radius
    at most 10, and |f(t, z, a)| / (1 + |z|) at probes of radius 1..1000.  A
    growth flag is raised when that ratio keeps growing between radius 100 and
    1000; a Lipschitz flag when the Jacobian norm does.
    """
    key = ("probe", samples, directions, seed, per_dim)
    if key in spec._cache:
        return spec._cache[key]
    times = np.linspace(0.0, spec.T, samples)
    A = _control_samples(spec, times, per_dim)  # (S, k, q)
    K, n = spec.N + 1, spec.n
    S, k = A.shape[:2]
    tt = np.broadcast_to(times[:, None], (S, k))
    base = np.linalg.norm(spec.eval_f(tt, np.zeros((S, k, K, n)), A), axis=-1).max(axis=1)
    if spec.state_free:
        zeros = np.zeros(S)
        probe = DriftProbe(times, base, zeros, {r: base for r in RADII}, {r: zeros for r in RADII}, False, False)
        spec._cache[key] = probe
        return probe
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(directions, K, n))
    dirs /= np.linalg.norm(dirs.reshape(directions, -1), axis=1)[:, None, None]
    growth_r, lip_r = {}, {}
    for r in RADII:
        Z = np.broadcast_to(r * dirs, (S, k, directions, K, n))
        vals = spec.eval_f(tt[..., None], Z, A[:, :, None, :])
        growth_r[r] = (np.linalg.norm(vals, axis=-1) / (1.0 + r)).max(axis=(1, 2))
        jac = spec.jac_f(tt[..., None], Z, A[:, :, None, :])
        lip_r[r] = _stacked_norm(jac).max(axis=(1, 2))
    jac0 = spec.jac_f(tt, np.zeros((S, k, K, n)), A)
    lip0 = _stacked_norm(jac0).max(axis=1)
    lip = np.maximum.reduce([lip0, lip_r[1.0], lip_r[10.0]])
    growth = np.maximum.reduce([base, lip, *growth_r.values()])
    gflag = bool(np.any(growth_r[1000.0] > 2.0 * growth_r[100.0] + 1e-12))
    lflag = bool(np.any(lip_r[1000.0] > 2.0 * np.maximum(lip_r[100.0], 1e-12)))
    probe = DriftProbe(times, growth, lip, growth_r, lip_r, gflag, lflag)
    spec._cache[key] = probe
    return probe


@dataclass(frozen=True)
class GronwallReport:
    bound: float
    xi_norm: float
    history_norm: float
    primitive_norm: float
    growth_integral: float
    growth_flag: bool


def _history_norm(spec: ProblemSpec) -> float:
    if "history_norm" not in spec._cache:
        if spec.h > 0:
            s = np.linspace(-spec.h, 0.0, 2049)[:-1]
            val = float(np.linalg.norm(spec.eval_zeta(s), axis=-1).max())
        else:
            val = 0.0
        spec._cache["history_norm"] = val
    return spec._cache["history_norm"]


def _growth_integral(spec: ProblemSpec) -> tuple[float, bool]:
    if spec.growth is not None:
        if "growth_integral" not in spec._cache:
            ts = np.linspace(0.0, spec.T, 1025)
            c = np.broadcast_to(np.asarray(spec.growth(ts), dtype=float), ts.shape)
            spec._cache["growth_integral"] = DriftProbe._upper_integral(ts, c)
        return spec._cache["growth_integral"], False
    probe = probe_drift(spec)
    return probe.growth_integral, probe.growth_flag


def _gronwall(spec, xi, prim_norm, warn=True) -> GronwallReport:
    K = spec.N + 1
    cint, flag = _growth_integral(spec)
    if flag and warn:
        warnings.warn("drift grows faster than linearly on the probes; the Gronwall bound is unreliable",
                      HypothesisWarning, stacklevel=3)
    ct = (1.0 + K * prim_norm) * cint
    hn = _history_norm(spec)
    xn = float(np.linalg.norm(xi))
    with np.errstate(over="ignore"):
        M = (xn + (1.0 + K * hn) * ct) * np.exp(K * ct)
    return GronwallReport(float(M), xn, hn, prim_norm, cint, flag)


def _gronwall_from_tables(spec, xi, pl, pr, warn=True) -> float:
    prim_norm = float(max(np.linalg.norm(pl, axis=1).max(), np.linalg.norm(pr, axis=1).max()))
    return _gronwall(spec, xi, prim_norm, warn).bound


def gronwall_report(spec: ProblemSpec, control: ImpulsiveControl, xi, grid_cells: int = 256) -> GronwallReport:
    nodes, atom_nodes = build_nodes(spec, control, grid_cells)
    pl, pr, _, _ = primitive_table(spec, control, nodes, atom_nodes)
    prim_norm = float(max(np.linalg.norm(pl, axis=1).max(), np.linalg.norm(pr, axis=1).max()))
    return _gronwall(spec, np.asarray(xi, float).reshape(spec.n), prim_norm)


def gronwall_bound(spec: ProblemSpec, control: ImpulsiveControl, xi, grid_cells: int = 256) -> float:
    """A priori bound M on sup |x - x_prim| from the growth coefficient of the drift.

    ``M = [|xi| + (1 + (N+1)|zeta|) C] exp((N+1) C)`` with
    ``C = (1 + (N+1) sup|x_prim|) * int c``.
    """
    return gronwall_report(spec, control, xi, grid_cells).bound


# ---------------------------------------------------------------------------
# checks and exports
# ---------------------------------------------------------------------------

def _drift_one_sided(spec: ProblemSpec, traj: BVTrajectory, control: ImpulsiveControl):
    """Drift at the right limit of each interval start and left limit of each end."""
    nodes = traj.nodes
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    aI = control.alpha_cells(mids)
    xl = traj.delayed_states(nodes[:-1], "right")
    xl[:, 0] = traj.right[:-1]
    xr = traj.delayed_states(nodes[1:], "left")
    xr[:, 0] = traj.left[1:]
    return spec.eval_f(nodes[:-1], xl, aI), spec.eval_f(nodes[1:], xr, aI)


def measure_primitive(spec: ProblemSpec, control: ImpulsiveControl, times: np.ndarray) -> np.ndarray:
    """int_[0,t] G(s, alpha(s)) mu(ds) at each t via atoms plus midpoint pieces."""
    mu = control.mu
    times = np.asarray(times, dtype=float)
    out = np.zeros((len(times), spec.n))
    for tau, w in zip(mu.atom_times, mu.atom_weights):
        jump = spec.eval_G(tau, control.alpha_at(tau)) @ w
        out[times >= tau - TOL] += jump
    if mu.cells:
        breaks = list(times) + list(control.breakpoints())
        lo, hi, mid, dens = piece_table(mu, 0.0, spec.T, breaks)
        Gm = spec.eval_G(mid, control.alpha_lookup(mid))
        contrib = (hi - lo)[:, None] * np.einsum("knm,km->kn", Gm, dens)
        cum = np.vstack([np.zeros((1, spec.n)), np.cumsum(contrib, axis=0)])
        idx = np.searchsorted(hi, times + TOL, side="right")
        out += cum[idx]
    return out


def residual(spec: ProblemSpec, control: ImpulsiveControl, traj: BVTrajectory) -> float:
    """Max over nodes of |x(t) - xi - int_0^t f - int_[0,t] G dmu|.

    The drift integral uses the trapezoid rule on the trajectory's own one-sided
    node values; the measure integral is recomputed from the control.
    """
    k1, k2 = _drift_one_sided(spec, traj, control)
    inc = 0.5 * np.diff(traj.nodes)[:, None] * (k1 + k2)
    F = np.vstack([np.zeros((1, spec.n)), np.cumsum(inc, axis=0)])
    prim = measure_primitive(spec, control, traj.nodes)
    err = traj.right - traj.xi - F - prim
    return float(np.abs(err).max())


def trajectory_differential(traj: BVTrajectory) -> VectorMeasure:
    """dx as a vector measure: jumps become atoms, the rest a density per base cell."""
    cells = traj.grid_cells
    T = traj.T
    base = np.linspace(0.0, T, cells + 1)
    # left limits at the base nodes (xi at 0)
    vals = traj.read(base, "left")
    vals[0] = traj.xi
    vals[-1] = traj.left[-1]
    atoms = [(t, j) for t, j in traj.jumps() if np.any(j != 0)]
    inc = np.diff(vals, axis=0)
    for t, j in atoms:
        if t < T - traj.tol:
            k = min(int(np.searchsorted(base, t + traj.tol, side="right") - 1), cells - 1)
            inc[k] -= j
    return VectorMeasure(traj.n, T, atoms, inc / (T / cells))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def trajectory_csv(traj: BVTrajectory, history: bool = False) -> str:
    """CSV with columns t, left_1..left_n, right_1..right_n."""
    n = traj.n
    buf = io.StringIO()
    header = ["t"] + [f"left_{i + 1}" for i in range(n)] + [f"right_{i + 1}" for i in range(n)]
    buf.write(",".join(header) + "\n")
    if history and traj.h > 0:
        steps = int(round(traj.h / traj.dt))
        for k in range(steps, 0, -1):
            s = -k * traj.dt
            z = np.asarray(traj.history(s), dtype=float).reshape(n)
            buf.write(",".join([_fmt(s)] + [_fmt(v) for v in z] * 2) + "\n")
    for t, lv, rv in zip(traj.nodes, traj.left, traj.right):
        buf.write(",".join([_fmt(t)] + [_fmt(v) for v in lv] + [_fmt(v) for v in rv]) + "\n")
    return buf.getvalue()
