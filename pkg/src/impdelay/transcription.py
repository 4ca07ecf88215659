"""Direct transcription: piecewise-constant controls, atoms on grid nodes, derivative-free search.

The decision vector is laid out as ``[xi | alpha cells | density cells | atom
weights]``; blocks that do not apply are empty.  Measure blocks hold running
sums of the weights, so one coordinate move shifts mass between neighbouring
slots.  Decoding projects every weight onto the cone and every alpha value
onto A(t), so any vector decodes to an admissible control.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import BVTrajectory, simulate
from .errors import ConfigurationError, DivergenceError, EvaluationError
from .measures import VectorMeasure, integrate
from .pmp import PMPCertificate, certify
from .problem import ControlPath, ImpulsiveControl, ProblemSpec

__all__ = [
    "Transcription",
    "OptimizeResult",
    "running_cost",
    "impulse_cost",
    "evaluate_cost",
    "optimize",
    "optimize_and_certify",
]


# ---------------------------------------------------------------------------
# cost
# ---------------------------------------------------------------------------

def running_cost(spec: ProblemSpec, control: ImpulsiveControl, traj: BVTrajectory) -> float:
    """Trapezoid rule for int l0 dt on the trajectory's node intervals (one-sided values)."""
    if spec._cache.get("zero_l0"):
        return 0.0
    nodes = traj.nodes
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    a = control.alpha_cells(mids)
    xs0 = traj.delayed_states(nodes[:-1], "right")
    xs1 = traj.delayed_states(nodes[1:], "left")
    v0 = spec.eval_l0(nodes[:-1], xs0, a)
    v1 = spec.eval_l0(nodes[1:], xs1, a)
    return float(np.sum(0.5 * np.diff(nodes) * (v0 + v1)))


def impulse_cost(spec: ProblemSpec, control: ImpulsiveControl) -> float:
    """int l1(t, alpha(t)) . mu(dt), atoms included."""
    return float(integrate(lambda t: spec.eval_l1(t, control.alpha_lookup(t)), control.mu,
                           vectorized=True, breaks=control.breakpoints()))


def _cost_parts(spec, control, xi, grid_cells, guard=True):
    traj = simulate(spec, control, xi, grid_cells, guard=guard, check=False)
    end = float(spec.Phi(traj.xi, traj.final()))
    return end + running_cost(spec, control, traj) + impulse_cost(spec, control), traj


def evaluate_cost(spec: ProblemSpec, control: ImpulsiveControl, xi, grid_cells: int) -> float:
    """Phi(x(0), x(T)) + int l0 dt + int l1 dmu for the simulated process."""
    control.validate(spec)
    return _cost_parts(spec, control, xi, grid_cells)[0]


# ---------------------------------------------------------------------------
# decision vector
# ---------------------------------------------------------------------------

@dataclass
class Transcription:
    """Layout of the decision vector.

    ``atom_times=None`` places a candidate atom at every grid node.
    ``density=True`` adds one density value per cell.
    """

    spec: ProblemSpec
    grid_cells: int
    atom_times: np.ndarray | None = None
    density: bool = False
    starts: int = 8
    rounds: int = 5
    weight0: float = 10.0
    step0: float = 0.5
    rel_stop: float = 1e-8
    max_evals: int = 200000
    blocks: dict = field(init=False)

    def __post_init__(self):
        spec = self.spec
        self.spec.check_grid(self.grid_cells)
        if self.atom_times is None:
            self.atom_times = np.linspace(0.0, spec.T, self.grid_cells + 1)
        self.atom_times = np.asarray(self.atom_times, dtype=float)
        if np.any(self.atom_times < 0) or np.any(self.atom_times > spec.T):
            raise ConfigurationError("candidate atom times must lie in [0, T]")
        n, m, q, C = spec.n, spec.m, spec.q, self.grid_cells
        sizes = {
            "xi": 0 if self.fixed_xi is not None else n,
            "alpha": C * q,
            "density": C * m if self.density else 0,
            "atoms": len(self.atom_times) * m,
        }
        self.blocks, start = {}, 0
        for name, size in sizes.items():
            self.blocks[name] = slice(start, start + size)
            start += size
        self.size = start
        self._bounds = self._compute_bounds()

    @property
    def fixed_xi(self) -> np.ndarray | None:
        fixed = self.spec.target.fixed_initial
        if fixed is not None:
            return fixed
        iset = self.spec.initial_set
        if np.all(iset.hi - iset.lo <= 0):
            return iset.lo.copy()
        return None

    @property
    def penalized(self) -> bool:
        """Targets other than a fixed initial point with free terminal point go through a penalty."""
        t = self.spec.target
        if t.kind == "free":
            return False
        if t.kind == "fixed_initial_free_terminal":
            return False
        if t.kind == "box" and t.terminal_free and self.fixed_xi is not None:
            return False
        return True

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self._bounds[0].copy(), self._bounds[1].copy()

    def _compute_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        spec = self.spec
        lo, hi = np.full(self.size, -np.inf), np.full(self.size, np.inf)
        b = self.blocks["xi"]
        if b.stop > b.start:
            lo[b], hi[b] = spec.initial_set.lo, spec.initial_set.hi
        if spec.q and spec.control_set.kind == "box":
            mids = self.cell_mids()
            lows = np.stack([spec.control_set.bounds(t)[0] for t in mids])
            highs = np.stack([spec.control_set.bounds(t)[1] for t in mids])
            lo[self.blocks["alpha"]], hi[self.blocks["alpha"]] = lows.ravel(), highs.ravel()
        return lo, hi

    def cell_mids(self) -> np.ndarray:
        e = np.linspace(0.0, self.spec.T, self.grid_cells + 1)
        return 0.5 * (e[:-1] + e[1:])

    def project(self, v) -> np.ndarray:
        """Map any vector to the admissible set (cone, A(t), initial set)."""
        spec = self.spec
        v = np.array(v, dtype=float)
        v = np.clip(v, *self._bounds)
        if spec.q and spec.control_set.kind == "finite":
            b = self.blocks["alpha"]
            vals = v[b].reshape(-1, spec.q)
            mids = self.cell_mids()
            v[b] = np.stack([spec.control_set.project(t, a) for t, a in zip(mids, vals)]).ravel()
        for name in ("density", "atoms"):
            b = self.blocks[name]
            w = self._weights(v, name)
            if not len(w):
                continue
            if spec.cone.kind == "nonnegative_orthant":
                w = np.maximum(w, 0.0)
            else:
                w = np.stack([spec.cone.project(x) for x in w])
            v[b] = np.cumsum(w, axis=0).ravel()
        return v

    def _weights(self, v, name: str) -> np.ndarray:
        """Measure block of v stored as running sums; returns per-slot weights."""
        U = v[self.blocks[name]].reshape(-1, self.spec.m)
        return np.diff(U, axis=0, prepend=np.zeros((1, self.spec.m)))

    def decode(self, v) -> tuple[ImpulsiveControl, np.ndarray]:
        spec = self.spec
        v = self.project(v)
        xi = self.fixed_xi if self.fixed_xi is not None else v[self.blocks["xi"]]
        alpha = None
        if spec.q:
            alpha = ControlPath(spec.T, v[self.blocks["alpha"]].reshape(self.grid_cells, spec.q))
        dens = self._weights(v, "density") if self.density else None
        w = self._weights(v, "atoms")
        nz = np.flatnonzero(np.any(w != 0, axis=1))
        atoms = [(self.atom_times[k], w[k]) for k in nz]
        mu = VectorMeasure(spec.m, spec.T, atoms, dens, spec.cone)
        return ImpulsiveControl(mu, alpha), np.asarray(xi, dtype=float)

    def encode(self, control: ImpulsiveControl, xi) -> np.ndarray:
        """Inverse of decode for controls that live on this grid and these atom times."""
        spec = self.spec
        v = np.zeros(self.size)
        if self.blocks["xi"].stop > self.blocks["xi"].start:
            v[self.blocks["xi"]] = np.asarray(xi, float)
        if spec.q:
            v[self.blocks["alpha"]] = control.alpha_cells(self.cell_mids()).ravel()
        if self.density and control.mu.cells:
            v[self.blocks["density"]] = np.cumsum(control.mu.density_at(self.cell_mids()), axis=0).ravel()
        w = np.zeros((len(self.atom_times), spec.m))
        for tau, x in zip(control.mu.atom_times, control.mu.atom_weights):
            k = int(np.argmin(np.abs(self.atom_times - tau)))
            if abs(self.atom_times[k] - tau) > 1e-12:
                raise ConfigurationError(f"atom at t={tau} is not a candidate time")
            w[k] += x
        v[self.blocks["atoms"]] = np.cumsum(w, axis=0).ravel()
        return v

    def objective(self, v, weight: float) -> tuple[float, float, float]:
        """(penalized objective, cost, target distance) of a decision vector."""
        control, xi = self.decode(v)
        cost, traj = _cost_parts(self.spec, control, xi, self.grid_cells)
        gap = self.spec.target.distance(traj.xi, traj.final())
        pen = weight * gap ** 2 if self.penalized else 0.0
        return cost + pen, cost, gap

    def random_start(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.bounds()
        v = np.zeros(self.size)
        finite = np.isfinite(lo) & np.isfinite(hi)
        v[finite] = rng.uniform(lo[finite], hi[finite])
        b = self.blocks["xi"]
        xi_free = np.zeros(self.size, bool)
        xi_free[b] = True
        v[xi_free & ~finite] = rng.normal(size=int(np.sum(xi_free & ~finite)))
        for name in ("density", "atoms"):
            b = self.blocks[name]
            size = b.stop - b.start
            if size:
                # sparse nonnegative draws keep the total mass of order one
                draw = rng.exponential(size=size) * (rng.uniform(size=size) < 2.0 / max(size, 1) * self.spec.m)
                v[b] = np.cumsum(draw.reshape(-1, self.spec.m), axis=0).ravel()
        return self.project(v)


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

@dataclass
class OptimizeResult:
    control: ImpulsiveControl
    xi: np.ndarray
    cost: float
    objective: float
    infeasibility: float
    penalty_weight: float
    best_start: int
    vector: np.ndarray
    trace: list
    abandoned: list

    def to_json(self) -> dict:
        return {
            "control": self.control.to_json(),
            "xi": self.xi.tolist(),
            "cost": self.cost,
            "objective": self.objective,
            "target_distance": self.infeasibility,
            "penalty_weight": self.penalty_weight,
            "best_start": self.best_start,
            "abandoned_starts": self.abandoned,
        }

    def trace_csv(self) -> str:
        rows = ["start,round,evaluation,best_objective,step"]
        for r in self.trace:
            rows.append(",".join([str(r[0]), str(r[1]), str(r[2]), format(r[3], ".17g"), format(r[4], ".17g")]))
        return "\n".join(rows) + "\n"


class _Abandon(Exception):
    pass


def _compass(tr: Transcription, v, weight, start, rnd, trace, budget):
    """Coordinate search with one step per coordinate; returns (v, objective).

    A successful move is repeated with a doubled step (a crude line search);
    a coordinate whose two directions both fail has its step halved.  The
    search stops once every step is below ``rel_stop * (1 + |v|_inf)``.
    """

    def f(x):
        budget[0] += 1
        try:
            return tr.objective(x, weight)[0]
        except (DivergenceError, EvaluationError) as exc:
            raise _Abandon(str(exc)) from exc

    v = tr.project(v)
    best = f(v)
    steps = np.full(tr.size, tr.step0 * max(1.0, float(np.max(np.abs(v), initial=0.0))))
    evals = 1
    trace.append((start, rnd, evals, best, float(steps.max(initial=0.0))))

    def floor():
        return tr.rel_stop * (1.0 + float(np.max(np.abs(v), initial=0.0)))

    while np.any(steps > floor()) and budget[0] < tr.max_evals:
        for j in np.flatnonzero(steps > floor()):
            moved = False
            for sgn in (1.0, -1.0):
                while True:
                    trial = v.copy()
                    trial[j] += sgn * steps[j]
                    trial = tr.project(trial)
                    if trial[j] == v[j]:
                        break
                    val = f(trial)
                    evals += 1
                    if not val < best:
                        break
                    v, best, moved = trial, val, True
                    steps[j] *= 2.0
                if moved:
                    steps[j] *= 0.5
                    break
            if not moved:
                steps[j] *= 0.5
        trace.append((start, rnd, evals, best, float(steps.max(initial=0.0))))
    return v, best


def optimize(spec: ProblemSpec, transcription: Transcription | None = None, seed: int = 0, *,
             grid_cells: int = 64, rounds: int | None = None) -> OptimizeResult:
    """Multi-start compass search on the penalized transcribed cost.

    The first start is the zero decision vector (projected); the others are
    drawn from ``numpy.random.default_rng(seed)``.  Ties go to the lower start.
    """
    tr = transcription or Transcription(spec, grid_cells)
    rounds = tr.rounds if rounds is None else rounds
    if rounds < 1:
        raise ConfigurationError("at least one outer round is needed")
    rng = np.random.default_rng(seed)
    starts = [tr.project(np.zeros(tr.size))] + [tr.random_start(rng) for _ in range(tr.starts - 1)]
    outer = rounds if tr.penalized else 1
    trace, abandoned = [], []
    best = None
    for s, v in enumerate(starts):
        budget = [0]
        weight = tr.weight0
        try:
            for r in range(outer):
                v, obj = _compass(tr, v, weight, s, r, trace, budget)
                if r < outer - 1:
                    weight *= 10.0
        except _Abandon as exc:
            abandoned.append({"start": s, "reason": str(exc)})
            continue
        obj, cost, gap = tr.objective(v, weight)
        if best is None or obj < best[0]:
            best = (obj, cost, gap, weight, s, v)
    if best is None:
        raise DivergenceError("every start diverged")
    obj, cost, gap, weight, s, v = best
    control, xi = tr.decode(v)
    return OptimizeResult(control, xi, cost, obj, gap, weight, s, v, trace, abandoned)


def optimize_and_certify(spec: ProblemSpec, transcription: Transcription | None = None, seed: int = 0,
                         lam: float | None = None, tol=None, **kwargs) -> tuple[OptimizeResult, PMPCertificate]:
    """optimize, simulate the winner, and certify it."""
    res = optimize(spec, transcription, seed, **kwargs)
    tr = transcription or Transcription(spec, kwargs.get("grid_cells", 64))
    traj = simulate(spec, res.control, res.xi, tr.grid_cells)
    return res, certify(spec, (res.control, traj), lam, tol=tol)
