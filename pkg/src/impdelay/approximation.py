"""Absolutely continuous approximations of impulsive controls and their diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import (BVTrajectory, _encode_reads, build_nodes, primitive_table, probe_drift, simulate,
                       trajectory_differential, _stacked_norm)
from .errors import ConfigurationError
from .measures import TOL, VectorMeasure, aligned_cells, weakstar_gap
from .problem import ControlPath, ImpulsiveControl, ProblemSpec

__all__ = [
    "ApproximationReport",
    "mollify",
    "compare_sequence",
    "density_sequence",
    "switch_pulse_sequence",
    "filippov_bound",
    "filippov_terms",
    "shifted_distance",
    "SIMULATOR_RTOL",
]

SIMULATOR_RTOL = 1e-6


def _blocks(atom_times: np.ndarray, width: float, T: float) -> list[tuple[float, float]]:
    out = []
    for tau in atom_times:
        if tau + width <= T + TOL:
            out.append((tau, min(tau + width, T)))
        else:
            out.append((tau - width, tau))
    for (a0, a1), (b0, b1) in zip(out, out[1:]):
        if b0 < a1 - TOL:
            raise ConfigurationError(f"width {width} makes the blocks at {a0} and {b0} overlap")
    if out and out[0][0] < -TOL:
        raise ConfigurationError(f"width {width} does not fit inside [0, {T}]")
    return out


def mollify(control: ImpulsiveControl, width: float) -> ImpulsiveControl:
    """Spread each atom (tau, w) into the density w / width on [tau, tau + width).

    Blocks that would pass T are placed on [tau - width, tau] instead.  The
    ordinary control is set to alpha(tau) on each block.
    """
    if not width > 0:
        raise ConfigurationError("width must be positive")
    mu = control.mu
    if not len(mu.atom_times):
        return control
    T = mu.T
    blocks = _blocks(mu.atom_times, width, T)
    ends = [p for blk in blocks for p in blk]
    base = mu.cells or 1
    if control.alpha is not None:
        base = math.lcm(base, control.alpha.cells)
    cells = aligned_cells(T, ends, base)
    edges = np.linspace(0.0, T, cells + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    dens = mu.with_cells(cells).density.copy() if mu.cells else np.zeros((cells, mu.m))
    alpha_vals = None if control.alpha is None else np.array(control.alpha(mids))
    for (lo, hi), tau, w in zip(blocks, mu.atom_times, mu.atom_weights):
        inside = (mids > lo) & (mids < hi)
        dens[inside] += w / width
        if alpha_vals is not None:
            alpha_vals[inside] = control.alpha.at(tau)
    new_mu = VectorMeasure(mu.m, T, (), dens, mu.cone)
    alpha = None if control.alpha is None else ControlPath(T, alpha_vals)
    return ImpulsiveControl(new_mu, alpha)


@dataclass
class ApproximationReport:
    """Per-member diagnostics of an approximating sequence against a reference process.

    ``pointwise_errors`` is the largest error over the resolved continuity nodes:
    base-grid nodes that are not atom times of the reference and that lie outside
    the support blocks of the last member.  ``exceptional_nodes`` lists continuity
    nodes whose error at the last member still exceeds the threshold.
    """

    widths: list
    measure_gaps: list
    trajectory_gaps: list
    pointwise_errors: list
    endpoint_errors: list
    verdict: str
    threshold: float
    exceptional_nodes: list
    node_errors: list = field(default_factory=list, repr=False)
    trajectories: list = field(default_factory=list, repr=False)
    reference: BVTrajectory | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "widths": [float(w) for w in self.widths],
            "measure_gaps": [float(v) for v in self.measure_gaps],
            "trajectory_gaps": [float(v) for v in self.trajectory_gaps],
            "pointwise_errors": [float(v) for v in self.pointwise_errors],
            "endpoint_errors": [float(v) for v in self.endpoint_errors],
            "verdict": self.verdict,
            "threshold": float(self.threshold),
            "exceptional_nodes": [float(t) for t in self.exceptional_nodes],
        }


def _nonincreasing(vals: Sequence[float], slack: float) -> bool:
    return all(b <= a + slack for a, b in zip(vals, vals[1:]))


def compare_sequence(spec: ProblemSpec, reference: ImpulsiveControl, xi, members: Sequence[ImpulsiveControl],
                     widths: Sequence[float], grid_cells: int, *, member_xi=None,
                     support: Sequence[Sequence[tuple[float, float]]] | None = None,
                     threshold: float | None = None) -> ApproximationReport:
    """Simulate every member and compare it with the reference process.

    The verdict is ``converging`` when the endpoint error and the resolved
    pointwise error are nonincreasing from the second member on and both end
    below ``threshold`` (default ten times the simulator tolerance
    ``1e-6 (1 + sup|x|)``).
    """
    ref = simulate(spec, reference, xi, grid_cells)
    dref = trajectory_differential(ref)
    base = np.linspace(0.0, spec.T, grid_cells + 1)
    tol = 1e-9 * spec.T / grid_cells
    atoms = reference.mu.atom_times
    cont = np.array([not np.any(np.abs(atoms - t) <= tol) for t in base])
    if support is not None and len(support):
        last = support[-1]
        resolved = cont & np.array([not any(lo - tol <= t < hi - tol for lo, hi in last) for t in base])
    else:
        resolved = cont
    ref_vals = ref.value(base)
    scale = 1.0 + ref.sup_norm()
    thr = 10 * SIMULATOR_RTOL * scale if threshold is None else float(threshold)
    mgaps, tgaps, perr, eerr, nerr, trajs = [], [], [], [], [], []
    xis = [xi] * len(members) if member_xi is None else member_xi
    for ctrl, x0 in zip(members, xis):
        tr = simulate(spec, ctrl, x0, grid_cells)
        trajs.append(tr)
        mgaps.append(weakstar_gap(ctrl.mu, reference.mu))
        tgaps.append(weakstar_gap(trajectory_differential(tr), dref))
        err = np.linalg.norm(tr.value(base) - ref_vals, axis=1)
        nerr.append(err)
        perr.append(float(err[resolved].max()) if np.any(resolved) else 0.0)
        eerr.append(float(np.linalg.norm(tr.final() - ref.final())))
    slack = 1e-12 * scale
    ok = (_nonincreasing(eerr[1:], slack) and _nonincreasing(perr[1:], slack)
          and eerr[-1] < thr and perr[-1] < thr) if members else False
    exceptional = [float(t) for t, e, c in zip(base, nerr[-1], cont) if c and e >= thr] if members else []
    return ApproximationReport(list(widths), mgaps, tgaps, perr, eerr, "converging" if ok else "non-converging",
                               thr, exceptional, nerr, trajs, ref)


def density_sequence(spec: ProblemSpec, control: ImpulsiveControl, xi, widths: Sequence[float],
                     grid_cells: int, *, threshold: float | None = None) -> ApproximationReport:
    """Mollify the control at each width and compare the resulting processes with it."""
    widths = [float(w) for w in widths]
    if any(b >= a for a, b in zip(widths, widths[1:])):
        raise ConfigurationError("widths must be strictly decreasing")
    members = [mollify(control, w) for w in widths]
    support = [_blocks(control.mu.atom_times, w, spec.T) for w in widths]
    return compare_sequence(spec, control, xi, members, widths, grid_cells, support=support, threshold=threshold)


def switch_pulse_sequence(control: ImpulsiveControl, value, widths: Sequence[float],
                          start: float = 0.0) -> list[ImpulsiveControl]:
    """Same measure, ordinary control replaced by ``value`` on [start, start + width)."""
    if control.alpha is None:
        raise ConfigurationError("the control has no ordinary part to switch")
    T = control.mu.T
    out = []
    for w in widths:
        cells = aligned_cells(T, [start, min(start + w, T)], control.alpha.cells)
        edges = np.linspace(0.0, T, cells + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        vals = np.array(control.alpha(mids))
        vals[(mids > start) & (mids < start + w)] = value
        points = {t: np.asarray(value, float) for t in control.mu.atom_times if start <= t < start + w}
        out.append(ImpulsiveControl(control.mu, ControlPath(T, vals, points)))
    return out


# ---------------------------------------------------------------------------
# Filippov-type perturbation bound
# ---------------------------------------------------------------------------

def _read_table(nodes, left, right, s, side, tol, hist_values):
    code = _encode_reads(nodes, s, side, tol)
    hist, jr, wr, jl, wl = code
    val = wr[..., None] * right[jr] + wl[..., None] * left[jl]
    return np.where(hist[..., None], hist_values, val)


def _delayed_table(spec, nodes, left, right, t, side, tol, history=None):
    out = []
    for hk in spec.delays:
        s = t - hk
        hv = np.zeros(s.shape + (spec.n,)) if history is None else spec.eval_zeta(np.minimum(s, 0.0))
        out.append(_read_table(nodes, left, right, s, side, tol, hv))
    return np.stack(out, axis=-2)


@dataclass(frozen=True)
class FilippovTerms:
    xi_gap: float
    beta_integral: float
    lipschitz_integral: float
    bound: float


def filippov_terms(spec: ProblemSpec, base: BVTrajectory, xi, control: ImpulsiveControl) -> FilippovTerms:
    """Ingredients of ``exp((N+1) int L) (|xi - xi_0| + int beta)``."""
    if base.control is None:
        raise ConfigurationError("the base trajectory does not record its control")
    bctrl = base.control
    cells = base.grid_cells
    pnodes, patoms = build_nodes(spec, control, cells)
    ppl, ppr, _, _ = primitive_table(spec, control, pnodes, patoms)
    nodes = np.unique(np.concatenate([base.nodes, pnodes]))
    keep = np.concatenate([[True], np.diff(nodes) > base.tol])
    nodes = nodes[keep]
    tol = base.tol
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    a_bar, a_i = bctrl.alpha_cells(mids), control.alpha_cells(mids)
    beta, lip = [], []
    for t, side in ((nodes[:-1], "right"), (nodes[1:], "left")):
        xbar = base.delayed_states(t, side)
        xbar[..., 0, :] = base.read(t, side)
        pbar = _delayed_table(spec, base.nodes, base.prim_left, base.prim_right, t, side, tol)
        gam = _delayed_table(spec, pnodes, ppl, ppr, t, side, tol)
        z = xbar - pbar + gam
        beta.append(np.linalg.norm(spec.eval_f(t, xbar, a_bar) - spec.eval_f(t, z, a_i), axis=-1))
        if spec.lipschitz is not None:
            lip.append(np.broadcast_to(np.asarray(spec.lipschitz(t), float), t.shape))
        else:
            jn = np.maximum(_stacked_norm(spec.jac_f(t, xbar, a_bar)), _stacked_norm(spec.jac_f(t, z, a_i)))
            jn = np.maximum(jn, _stacked_norm(spec.jac_f(t, 0.5 * (xbar + z), a_i)))
            pr = probe_drift(spec)
            lip.append(np.maximum(jn, np.interp(t, pr.times, pr.lipschitz)))
    dts = np.diff(nodes)
    bint = float(np.sum(0.5 * dts * (beta[0] + beta[1])))
    lint = float(np.sum(dts * np.maximum(lip[0], lip[1])))
    gap = float(np.linalg.norm(np.asarray(xi, float) - base.xi))
    K = spec.N + 1
    with np.errstate(over="ignore"):
        bound = float(np.exp(K * lint) * (gap + bint))
    return FilippovTerms(gap, bint, lint, bound)


def filippov_bound(spec: ProblemSpec, base: BVTrajectory, perturbed):
    """Bound on sup |x_i - x_prim_i - (x_0 - x_prim_0)| for a perturbed input.

    ``perturbed`` is a pair ``(xi, control)`` or a list of such pairs (a list
    of bounds is returned then).
    """
    if isinstance(perturbed, tuple) and len(perturbed) == 2 and isinstance(perturbed[1], ImpulsiveControl):
        return filippov_terms(spec, base, *perturbed).bound
    return [filippov_terms(spec, base, x, c).bound for x, c in perturbed]


def shifted_distance(a: BVTrajectory, b: BVTrajectory) -> float:
    """sup over the union of nodes of |(x_a - x_prim_a) - (x_b - x_prim_b)| (both one-sided limits)."""
    nodes = np.unique(np.concatenate([a.nodes, b.nodes]))
    tol = min(a.tol, b.tol)
    best = 0.0
    for side in ("left", "right"):
        vals = []
        for tr in (a, b):
            sl, sr = tr.shifted()
            hv = np.broadcast_to(tr.xi, nodes.shape + (tr.n,))
            vals.append(_read_table(tr.nodes, sl, sr, nodes, side, tol, hv))
        best = max(best, float(np.linalg.norm(vals[0] - vals[1], axis=1).max()))
    return best
