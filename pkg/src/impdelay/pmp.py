"""Adjoint arcs and residual checks of first-order optimality conditions.

The adjoint is integrated backward on the base grid of the reference
trajectory.  Every delay is an integer number of grid steps, so the advance
terms ``p(t + h_j)`` are read from nodes that are already known.  The arc
``p_0`` uses the implicit trapezoid rule; the arcs ``p_k`` (k >= 1) are
trapezoid sums over shifted intervals and vanish identically on their tails.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .dynamics import BVTrajectory
from .errors import ConfigurationError, HypothesisWarning, InfeasibilityError
from .measures import DirectionField, total_variation
from .problem import ImpulsiveControl, ProblemSpec

__all__ = [
    "CONDITIONS",
    "DEFAULT_TOL",
    "AdjointSystem",
    "PMPCertificate",
    "ReferenceData",
    "reference_data",
    "solve_adjoint",
    "adjoint_ode_residual",
    "transversality_residual",
    "drift_maximality_residual",
    "cone_condition_residuals",
    "certify",
    "gradient_crosscheck",
]

CONDITIONS = (
    "adjoint_ode",
    "transversality",
    "drift_maximality",
    "cone_everywhere",
    "cone_complementarity",
    "nontriviality_margin",
)
DEFAULT_TOL = 1e-4
LATTICE = 32
SUPPORT_REL = 1e-9
ETA_DIRECTIONS = 720


# ---------------------------------------------------------------------------
# reference data along the candidate process
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReferenceData:
    """Jacobians and cost gradients of the reference on each grid interval.

    Index ``i`` refers to the interval (t_i, t_{i+1}); ``*_start`` uses right
    limits at t_i and ``*_end`` left limits at t_{i+1}.
    """

    times: np.ndarray
    shifts: tuple
    alpha: np.ndarray
    states_start: np.ndarray
    states_end: np.ndarray
    jac_start: np.ndarray
    jac_end: np.ndarray
    grad_start: np.ndarray
    grad_end: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def cells(self) -> int:
        return len(self.times) - 1


def _unpack(process):
    control, traj = process
    if not isinstance(control, ImpulsiveControl) or not isinstance(traj, BVTrajectory):
        raise ConfigurationError("process must be a (control, trajectory) pair")
    return control, traj


def _needs_fd(spec: ProblemSpec, finite_differences: bool):
    missing = [name for name, g in (("f", spec.grad_f), ("l0", spec.grad_l0)) if g is None]
    if missing and not finite_differences:
        raise ConfigurationError(f"no gradient supplied for {', '.join(missing)} and finite differences are off")
    rough = sorted(set(spec.nonsmooth) & {"f", "l0"})
    if rough:
        warnings.warn(f"{', '.join(rough)} use nonsmooth primitives; gradients are taken as if smooth",
                      HypothesisWarning, stacklevel=3)


def reference_data(spec: ProblemSpec, process, finite_differences: bool = True) -> ReferenceData:
    """Evaluate d f / d x_k and d l0 / d x_k along the reference, interval by interval."""
    control, traj = _unpack(process)
    _needs_fd(spec, finite_differences)
    cached = spec._cache.get("pmp_reference")
    if cached is not None and cached[0] is traj and cached[1] is control:
        return cached[2]
    M = traj.grid_cells
    dt = spec.check_grid(M)
    times = np.linspace(0.0, spec.T, M + 1)
    shifts = tuple(int(round(h / dt)) for h in spec.delays)
    mids = 0.5 * (times[:-1] + times[1:])
    a = control.alpha_cells(mids)
    xs0 = traj.delayed_states(times[:-1], "right")
    xs1 = traj.delayed_states(times[1:], "left")
    J0 = np.array(spec.jac_f(times[:-1], xs0, a))
    J1 = np.array(spec.jac_f(times[1:], xs1, a))
    g0 = np.array(spec.grad_l0_x(times[:-1], xs0, a))
    g1 = np.array(spec.grad_l0_x(times[1:], xs1, a))
    data = ReferenceData(times, shifts, a, xs0, xs1, J0, J1, g0, g1)
    spec._cache["pmp_reference"] = (traj, control, data)
    return data


# ---------------------------------------------------------------------------
# adjoint system
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdjointSystem:
    """Arcs p_k on the grid (shape (N+1, M+1, n)), their sum p and the multiplier."""

    lam: float
    times: np.ndarray
    arcs: np.ndarray
    shifts: tuple
    eta: np.ndarray | None = None
    mode: str = "optimality"

    @property
    def p(self) -> np.ndarray:
        return self.arcs.sum(axis=0)

    @property
    def n(self) -> int:
        return self.arcs.shape[2]

    def at(self, t) -> np.ndarray:
        """p at arbitrary times by linear interpolation (p is absolutely continuous)."""
        t = np.asarray(t, dtype=float)
        p = self.p
        return np.stack([np.interp(t, self.times, p[:, i]) for i in range(self.n)], axis=-1)

    def sup_norm(self) -> float:
        return float(np.abs(self.p).max())

    def tail_violation(self) -> float:
        """max |p_k| over [(T - h_k) v 0, T] for k >= 1; zero by construction."""
        M = len(self.times) - 1
        worst = 0.0
        for k, s in enumerate(self.shifts[1:], start=1):
            start = max(M - s, 0)
            worst = max(worst, float(np.abs(self.arcs[k, start:]).max(initial=0.0)))
        return worst

    def scaled(self, c: float) -> "AdjointSystem":
        if c <= 0:
            raise ConfigurationError("scaling factor must be positive")
        eta = None if self.eta is None else self.eta * c
        return AdjointSystem(self.lam * c, self.times, self.arcs * c, self.shifts, eta, self.mode)

    def to_json(self) -> dict:
        out = {
            "lambda": self.lam,
            "mode": self.mode,
            "times": self.times.tolist(),
            "p": self.p.tolist(),
            "arcs": self.arcs.tolist(),
        }
        if self.eta is not None:
            out["eta"] = self.eta.tolist()
        return out


def _backward(ref: ReferenceData, terminal: np.ndarray, lams: np.ndarray) -> np.ndarray:
    """Integrate several adjoints at once; terminal (n, c), lams (c,) -> arcs (N+1, M+1, n, c)."""
    M, dt = ref.cells, ref.dt
    K = len(ref.shifts)
    n, c = terminal.shape
    arcs = np.zeros((K, M + 1, n, c))
    P = np.zeros((M + 1, n, c))
    arcs[0, M] = terminal
    P[M] = terminal
    # transposed Jacobians: AT[i, k] = (d f / d x_k)^T
    AT0 = np.swapaxes(ref.jac_start, -1, -2)
    AT1 = np.swapaxes(ref.jac_end, -1, -2)
    b0, b1 = ref.grad_start, ref.grad_end
    eye = np.eye(n)

    def interval_term(l, k):
        # trapezoid integral of A_k^T p - lam b_k over interval l, shape (n, c)
        left = AT0[l, k] @ P[l] - b0[l, k][:, None] * lams
        right = AT1[l, k] @ P[l + 1] - b1[l, k][:, None] * lams
        return 0.5 * dt * (left + right)

    running = np.zeros((K, n, c))
    for i in range(M - 1, -1, -1):
        Q = np.zeros((n, c))
        for k in range(1, K):
            l = i + ref.shifts[k]
            if l <= M - 1:
                running[k] += interval_term(l, k)
            arcs[k, i] = running[k]
            Q += running[k]
        rhs = arcs[0, i + 1] + 0.5 * dt * (
            AT0[i, 0] @ Q + AT1[i, 0] @ P[i + 1] - (b0[i, 0] + b1[i, 0])[:, None] * lams
        )
        arcs[0, i] = np.linalg.solve(eye - 0.5 * dt * AT0[i, 0], rhs)
        P[i] = arcs[0, i] + Q
    return arcs


def solve_adjoint(spec: ProblemSpec, process, lam: float, terminal_condition, *,
                  finite_differences: bool = True, eta=None, mode: str = "optimality") -> AdjointSystem:
    """Backward solve of the advance equation with p(T) = terminal_condition."""
    if lam < 0:
        raise ConfigurationError("the cost multiplier must be nonnegative")
    ref = reference_data(spec, process, finite_differences)
    pT = np.asarray(terminal_condition, dtype=float).reshape(spec.n, 1)
    arcs = _backward(ref, pT, np.array([float(lam)]))[..., 0]
    return AdjointSystem(float(lam), ref.times, arcs, ref.shifts,
                         None if eta is None else np.asarray(eta, float), mode)


class _AffineAdjoint:
    """p(.; pi) = particular + basis @ pi, with one backward solve for all columns."""

    def __init__(self, spec: ProblemSpec, ref: ReferenceData, lam: float):
        n = spec.n
        terminal = np.hstack([np.zeros((n, 1)), np.eye(n)])
        lams = np.concatenate([[lam], np.zeros(n)])
        arcs = _backward(ref, terminal, lams)
        self.particular = arcs[..., 0]
        self.basis = arcs[..., 1:]
        self.ref, self.lam = ref, lam

    def build(self, pi, eta=None, mode="optimality") -> AdjointSystem:
        arcs = self.particular + self.basis @ np.asarray(pi, float)
        return AdjointSystem(self.lam, self.ref.times, arcs, self.ref.shifts, eta, mode)


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------

def _advance_rhs(ref: ReferenceData, adj: AdjointSystem) -> tuple[np.ndarray, np.ndarray]:
    """sum_j [A_j^T p - lam b_j](t + h_j) at both ends of each interval, shape (M, n)."""
    M = ref.cells
    P = adj.p
    start = np.zeros((M, adj.n))
    end = np.zeros((M, adj.n))
    idx = np.arange(M)
    for k, s in enumerate(ref.shifts):
        l = idx + s
        ok = l <= M - 1
        lk = l[ok]
        start[ok] += np.einsum("lji,lj->li", ref.jac_start[lk, k], P[lk]) - adj.lam * ref.grad_start[lk, k]
        end[ok] += np.einsum("lji,lj->li", ref.jac_end[lk, k], P[lk + 1]) - adj.lam * ref.grad_end[lk, k]
    return start, end


def adjoint_ode_residual(spec: ProblemSpec, process, adjoint: AdjointSystem) -> float:
    """max over intervals of |(p(t_{i+1}) - p(t_i)) / dt + trapezoid of the advance right side|."""
    ref = reference_data(spec, process)
    start, end = _advance_rhs(ref, adjoint)
    defect = np.diff(adjoint.p, axis=0) / ref.dt + 0.5 * (start + end)
    return float(np.abs(defect).max(initial=0.0))


def _endpoints(process):
    _, traj = _unpack(process)
    return traj.xi.copy(), traj.final()


def transversality_residual(spec: ProblemSpec, process, adjoint: AdjointSystem) -> float:
    """Distance of (p(0), -p(T)) - lam grad Phi to the target's normal cone.

    In boundary mode: the larger of dist(p(0), N_C(x(0))) and
    |p(T) + grad Psi(x(T))^T eta|.
    """
    xi, xT = _endpoints(process)
    p = adjoint.p
    if adjoint.mode == "boundary":
        if not spec.initial_set.contains(xi):
            raise InfeasibilityError("initial point lies outside the initial set")
        r0 = spec.initial_set.normal_distance(p[0], xi)
        rT = float(np.linalg.norm(p[-1] + spec.jac_Psi(xT).T @ adjoint.eta))
        return max(r0, rT)
    spec.target.require(xi, xT)
    v = np.concatenate([p[0], -p[-1]]) - adjoint.lam * spec.grad_Phi_x(xi, xT)
    return spec.target.normal_distance(v, xi, xT)


def _lattice(spec: ProblemSpec, times: np.ndarray, per_dim: int) -> np.ndarray:
    cs = spec.control_set
    if cs.kind == "box" and any(callable(b) for b in list(cs.lo) + list(cs.hi)):
        return np.stack([cs.samples(t, per_dim) for t in times])
    return np.broadcast_to(cs.samples(0.0, per_dim), (len(times),) + cs.samples(0.0, per_dim).shape)


def _hamiltonian(spec, t, xs, a, p, lam):
    return np.einsum("...i,...i->...", spec.eval_f(t, xs, a), p) - lam * spec.eval_l0(t, xs, a)


def _drift_gaps(spec: ProblemSpec, ref: ReferenceData, adj: AdjointSystem, per_dim: int) -> np.ndarray:
    """Per grid interval: max over sampled a of H(a) - H(alpha), at both interval ends."""
    M = ref.cells
    if spec.q == 0:
        return np.zeros(M)
    P = adj.p
    out = np.zeros(M)
    S0 = _lattice(spec, ref.times[:-1], per_dim)
    S1 = _lattice(spec, ref.times[1:], per_dim)
    k = S0.shape[1]
    chunk = max(1, 200000 // max(k, 1))
    for lo in range(0, M, chunk):
        sl = slice(lo, min(lo + chunk, M))
        for t, xs, S, pv in ((ref.times[:-1], ref.states_start, S0, P[:-1]),
                             (ref.times[1:], ref.states_end, S1, P[1:])):
            tt = t[sl]
            ref_h = _hamiltonian(spec, tt, xs[sl], ref.alpha[sl], pv[sl], adj.lam)
            best = _hamiltonian(spec, tt[:, None], xs[sl][:, None], S[sl], pv[sl][:, None], adj.lam).max(axis=1)
            out[sl] = np.maximum(out[sl], best - ref_h)
    return np.maximum(out, 0.0)


def drift_maximality_residual(spec: ProblemSpec, process, adjoint: AdjointSystem,
                              per_dim: int = LATTICE) -> float:
    """Sampled gap between the maximal and the realized Hamiltonian, clipped at 0."""
    ref = reference_data(spec, process)
    return float(_drift_gaps(spec, ref, adjoint, per_dim).max(initial=0.0))


def _switching(spec: ProblemSpec, t, a, p, lam) -> np.ndarray:
    """Q(t, a) = p G(t, a) - lam l1(t, a), shape (..., m)."""
    return np.einsum("...i,...ij->...j", p, spec.eval_G(t, a)) - lam * spec.eval_l1(t, a)


def _support_points(control: ImpulsiveControl, T: float):
    """(times, directions, masses, kinds) where |mu| carries mass above the support threshold."""
    mu = control.mu
    tv = total_variation(mu)
    eps = SUPPORT_REL * tv.mass() / T
    field = DirectionField(mu)
    times, dirs, mass, kinds = [], [], [], []
    for tau, w, d in zip(mu.atom_times, tv.atom_weights[:, 0], field.atom_directions):
        if w > 0:
            times.append(tau), dirs.append(d), mass.append(w), kinds.append("atom")
    if mu.cells:
        edges = mu.cell_edges
        for c, (dens, d) in enumerate(zip(tv.density[:, 0], field.cell_directions)):
            if dens > eps:
                # sample each charged cell at its midpoint and both ends
                for t in (edges[c], 0.5 * (edges[c] + edges[c + 1]), edges[c + 1]):
                    times.append(t), dirs.append(d), mass.append(dens * (edges[c + 1] - edges[c])), kinds.append("cell")
    m = mu.m
    return (np.array(times, float), np.array(dirs, float).reshape(-1, m), np.array(mass, float), kinds)


def _cone_traces(spec: ProblemSpec, control: ImpulsiveControl, adj: AdjointSystem, per_dim: int):
    """Per grid node and atom time: max over sampled a and generators of (Q . g)."""
    extra = control.mu.atom_times
    times = np.concatenate([adj.times, extra])
    S = _lattice(spec, times, per_dim)
    P = adj.at(times)
    Q = _switching(spec, times[:, None], S, P[:, None], adj.lam)
    gens = spec.cone.generators
    vals = np.einsum("tkm,gm->tkg", Q, gens).max(axis=(1, 2))
    return times, vals


def _complementarity(spec: ProblemSpec, control: ImpulsiveControl, adj: AdjointSystem):
    times, dirs, mass, kinds = _support_points(control, spec.T)
    if len(times) == 0:
        return times, np.zeros(0), mass, kinds
    a = np.stack([control.alpha_at(t) for t in times]) if spec.q else np.zeros((len(times), 0))
    Q = _switching(spec, times, a, adj.at(times), adj.lam)
    return times, np.abs(np.einsum("tm,tm->t", Q, dirs)), mass, kinds


def cone_condition_residuals(spec: ProblemSpec, process, adjoint: AdjointSystem,
                             per_dim: int = LATTICE) -> tuple[float, float]:
    """(everywhere, complementarity) residuals of the measure conditions."""
    control, _ = _unpack(process)
    _, vals = _cone_traces(spec, control, adjoint, per_dim)
    _, comp, _, _ = _complementarity(spec, control, adjoint)
    return float(max(vals.max(initial=0.0), 0.0)), float(comp.max(initial=0.0))


# ---------------------------------------------------------------------------
# certificate
# ---------------------------------------------------------------------------

def _tolerances(tol) -> dict:
    if tol is None:
        tol = DEFAULT_TOL
    if isinstance(tol, dict):
        unknown = set(tol) - set(CONDITIONS)
        if unknown:
            raise ConfigurationError(f"unknown conditions in tolerance table: {sorted(unknown)}")
        return {c: float(tol.get(c, DEFAULT_TOL)) for c in CONDITIONS}
    return {c: float(tol) for c in CONDITIONS}


@dataclass(eq=False)
class PMPCertificate:
    """Residuals of every condition plus per-time traces.

    A condition passes when its residual is at most its tolerance; the
    nontriviality margin passes when it exceeds its tolerance.
    """

    lam: float
    mode: str
    residuals: dict
    tolerances: dict
    adjoint: AdjointSystem
    support_report: dict
    traces: dict
    alternatives: list = field(default_factory=list)
    tail_violation: float = 0.0

    @property
    def verdicts(self) -> dict:
        out = {}
        for c in CONDITIONS:
            r, t = self.residuals[c], self.tolerances[c]
            out[c] = r > t if c == "nontriviality_margin" else r <= t
        return out

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    @property
    def first_failure(self) -> str | None:
        for c in CONDITIONS:
            if not self.verdicts[c]:
                return c
        return None

    def score(self) -> float:
        """Largest residual-to-tolerance ratio over the conditions that must be small."""
        ratios = [self.residuals[c] / self.tolerances[c] for c in CONDITIONS[:-1]]
        margin = self.residuals["nontriviality_margin"]
        penalty = 0.0 if margin > self.tolerances["nontriviality_margin"] else np.inf
        return max(ratios) + penalty

    def to_json(self) -> dict:
        out = {
            "lambda": self.lam,
            "mode": self.mode,
            "passed": self.passed,
            "first_failure": self.first_failure,
            "residuals": dict(self.residuals),
            "tolerances": dict(self.tolerances),
            "verdicts": self.verdicts,
            "zero_tail_violation": self.tail_violation,
            "p0": self.adjoint.p[0].tolist(),
            "pT": self.adjoint.p[-1].tolist(),
            "support_report": self.support_report,
        }
        if self.adjoint.eta is not None:
            out["eta"] = self.adjoint.eta.tolist()
        if self.alternatives:
            out["alternatives"] = [
                {"lambda": c.lam, "passed": c.passed, "first_failure": c.first_failure,
                 "residuals": dict(c.residuals)}
                for c in self.alternatives
            ]
        return out

    def trace_csv(self) -> str:
        """Grid trace: t, p_1..p_n, drift gap per interval start, cone value."""
        adj = self.adjoint
        n = adj.n
        buf = io.StringIO()
        buf.write(",".join(["t"] + [f"p_{i + 1}" for i in range(n)] + ["drift_gap", "cone_value"]) + "\n")
        gaps = np.append(self.traces["drift_gap"], 0.0)
        cone = self.traces["cone_value"]
        for t, pv, g, cv in zip(adj.times, adj.p, gaps, cone):
            buf.write(",".join(format(float(v), ".17g") for v in [t, *pv, g, cv]) + "\n")
        return buf.getvalue()


def _assemble(spec, process, adj: AdjointSystem, tols: dict, per_dim: int) -> PMPCertificate:
    control, _ = _unpack(process)
    ref = reference_data(spec, process)
    gaps = _drift_gaps(spec, ref, adj, per_dim)
    ctimes, cvals = _cone_traces(spec, control, adj, per_dim)
    stimes, comp, smass, skinds = _complementarity(spec, control, adj)
    residuals = {
        "adjoint_ode": adjoint_ode_residual(spec, process, adj),
        "transversality": transversality_residual(spec, process, adj),
        "drift_maximality": float(gaps.max(initial=0.0)),
        "cone_everywhere": float(max(cvals.max(initial=0.0), 0.0)),
        "cone_complementarity": float(comp.max(initial=0.0)),
        "nontriviality_margin": adj.sup_norm() + adj.lam,
    }
    active_tol = tols["cone_complementarity"]
    grid = len(adj.times)
    active = ctimes[:grid][cvals[:grid] >= -active_tol]
    support = [
        {"t": float(t), "kind": k, "mass": float(w), "residual": float(r)}
        for t, k, w, r in zip(stimes, skinds, smass, comp)
    ]
    report = {
        "active_tolerance": active_tol,
        "active_times": active.tolist(),
        "support": support,
        "support_outside_active": [s["t"] for s in support if s["residual"] > active_tol],
    }
    traces = {"drift_gap": gaps, "cone_value": cvals[:grid]}
    return PMPCertificate(adj.lam, adj.mode, residuals, tols, adj, report, traces,
                          tail_violation=adj.tail_violation())


def _search_vector(spec, process, adj: AdjointSystem, per_dim: int) -> np.ndarray:
    """Residual vector used to pick free terminal data; every entry is zero at a certificate."""
    control, _ = _unpack(process)
    _, cvals = _cone_traces(spec, control, adj, per_dim)
    _, comp, _, _ = _complementarity(spec, control, adj)
    ref = reference_data(spec, process)
    gaps = _drift_gaps(spec, ref, adj, per_dim)
    return np.concatenate([
        [transversality_residual(spec, process, adj)],
        np.maximum(cvals, 0.0),
        comp,
        gaps,
    ])


def _optimality_candidate(spec, process, lam, tols, per_dim) -> PMPCertificate:
    xi, xT = _endpoints(process)
    spec.target.require(xi, xT)
    ref = reference_data(spec, process)
    aff = _AffineAdjoint(spec, ref, lam)
    n = spec.n
    grad_T = spec.grad_Phi_x(xi, xT)[n:]
    if spec.target.terminal_free:
        return _assemble(spec, process, aff.build(-lam * grad_T), tols, per_dim)
    if lam > 0:
        fun = lambda pi: _search_vector(spec, process, aff.build(pi), per_dim)  # noqa: E731
        sol = least_squares(fun, -lam * grad_T, method="trf", xtol=1e-12, ftol=1e-12, gtol=1e-12)
        cands = [sol.x, -lam * grad_T]
    else:
        # abnormal case: p(T) on the unit sphere so that p is nontrivial
        def fun(u):
            return _search_vector(spec, process, aff.build(u / max(np.linalg.norm(u), 1e-300)), per_dim)
        cands = []
        for j in range(n):
            for sgn in (1.0, -1.0):
                u0 = np.zeros(n)
                u0[j] = sgn
                sol = least_squares(fun, u0, method="trf", xtol=1e-12, ftol=1e-12, gtol=1e-12)
                cands.append(sol.x / max(np.linalg.norm(sol.x), 1e-300))
    certs = [_assemble(spec, process, aff.build(pi), tols, per_dim) for pi in cands]
    return min(certs, key=lambda c: c.score())


def _eta_lattice(l: int) -> np.ndarray:
    if l == 1:
        return np.array([[-1.0], [1.0]])
    if l == 2:
        th = 2 * np.pi * np.arange(ETA_DIRECTIONS) / ETA_DIRECTIONS
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    raise ConfigurationError("boundary mode supports Psi with at most 2 components")


def _boundary_candidate(spec, process, tols, per_dim) -> PMPCertificate:
    if spec.Psi is None:
        raise ConfigurationError("boundary mode needs a map Psi")
    xi, xT = _endpoints(process)
    if not spec.initial_set.contains(xi):
        raise InfeasibilityError("initial point lies outside the initial set")
    ref = reference_data(spec, process)
    aff = _AffineAdjoint(spec, ref, 0.0)
    D = spec.jac_Psi(xT)
    best = None
    for eta in _eta_lattice(spec.l):
        adj = aff.build(-D.T @ eta, eta=eta, mode="boundary")
        cert = _assemble(spec, process, adj, tols, per_dim)
        if best is None or cert.score() < best.score():
            best = cert
    return best


def certify(spec: ProblemSpec, process, lam: float | None = None, mode: str = "optimality",
            tol=None, *, per_dim: int = LATTICE, finite_differences: bool = True) -> PMPCertificate:
    """Build an adjoint from the endpoint conditions and evaluate every condition.

    With ``lam=None`` the normal case lam = 1 is tried first and lam = 0 only
    when some condition fails; the other attempt is kept in ``alternatives``.
    """
    tols = _tolerances(tol)
    control, _ = _unpack(process)
    control.validate(spec)
    reference_data(spec, process, finite_differences)
    if mode == "boundary":
        return _boundary_candidate(spec, process, tols, per_dim)
    if mode != "optimality":
        raise ConfigurationError(f"unknown certificate mode {mode!r}")
    if lam is not None:
        if lam < 0:
            raise ConfigurationError("the cost multiplier must be nonnegative")
        return _optimality_candidate(spec, process, float(lam), tols, per_dim)
    normal = _optimality_candidate(spec, process, 1.0, tols, per_dim)
    if normal.passed:
        return normal
    abnormal = _optimality_candidate(spec, process, 0.0, tols, per_dim)
    chosen, other = (abnormal, normal) if abnormal.passed else (normal, abnormal)
    chosen.alternatives.append(other)
    return chosen


# ---------------------------------------------------------------------------
# gradient cross-check
# ---------------------------------------------------------------------------

def gradient_crosscheck(spec: ProblemSpec, probes: int = 100, seed: int = 0, scale: float = 1.0) -> dict:
    """Largest relative gap between analytic and finite-difference gradients on random probes.

    Probes are drawn with states of size ``scale``; gradients that are not
    supplied are reported as None.
    """
    rng = np.random.default_rng(seed)
    n, K = spec.n, spec.N + 1
    t = rng.uniform(0.0, spec.T, probes)
    xs = scale * rng.normal(size=(probes, K, n))
    if spec.q:
        a = np.stack([spec.control_set.samples(tt, 5)[rng.integers(0, len(spec.control_set.samples(tt, 5)))]
                      for tt in t])
    else:
        a = np.zeros((probes, 0))

    def rel(x, y):
        return float(np.max(np.abs(x - y) / (1.0 + np.abs(y))))

    out = {"f": None, "l0": None, "Phi": None}
    if spec.grad_f is not None:
        out["f"] = rel(np.asarray(spec.jac_f(t, xs, a, True)), spec.jac_f(t, xs, a, False))
    if spec.grad_l0 is not None:
        out["l0"] = rel(np.asarray(spec.grad_l0_x(t, xs, a, True)), spec.grad_l0_x(t, xs, a, False))
    if spec.grad_Phi is not None:
        worst = 0.0
        for xi, xT in zip(xs[:, 0], scale * rng.normal(size=(probes, n))):
            worst = max(worst, rel(spec.grad_Phi_x(xi, xT, True), spec.grad_Phi_x(xi, xT, False)))
        out["Phi"] = worst
    return out
