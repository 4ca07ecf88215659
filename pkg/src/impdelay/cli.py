"""Command line front end: ``impdelay <command> --scenario PATH [options]``.

Every command writes JSON reports (and CSV traces where there is a trace)
into ``--out``; without ``--out`` the main report goes to stdout.  Exit codes:
0 success, 2 configuration or schema error, 3 evaluation error,
4 infeasibility, 5 divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .approximation import density_sequence
from .auxiliary import AuxiliaryControl, from_auxiliary, g_frak, to_auxiliary
from .dynamics import gronwall_bound, residual, simulate, trajectory_csv
from .errors import ConfigurationError, HypothesisWarning, ImpDelayError
from .measures import integrate
from .pmp import certify
from .problem import ImpulsiveControl, ProblemSpec
from .scenario import builtin_names, builtin_scenario, dump_scenario, initial_point, load_scenario, probe_hypotheses
from .transcription import Transcription, evaluate_cost, optimize

__all__ = ["main", "build_parser", "resolve_scenario"]


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


class _Sink:
    """Collects named outputs; writes them under ``out`` or prints the main one."""

    def __init__(self, out: str | None):
        self.out = Path(out) if out else None
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)

    def emit(self, name: str, text: str, main: bool = False):
        if self.out:
            (self.out / name).write_text(text)
        elif main:
            sys.stdout.write(text)


def resolve_scenario(ref: str) -> ProblemSpec:
    """A scenario path, or the name of a shipped scenario."""
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    if ref in builtin_names():
        return builtin_scenario(ref)
    raise ConfigurationError(f"scenario {ref!r} not found (shipped: {', '.join(builtin_names())})")


def _read_json(path: str, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{what} {path} is not valid JSON: {exc.msg} at line {exc.lineno}") from exc


def _load_control(spec: ProblemSpec, path: str | None) -> tuple[ImpulsiveControl, np.ndarray | None]:
    """Control document ``{"mu": ..., "alpha": ...}``, optionally with ``xi``; zero control if absent."""
    if path is None:
        return spec.zero_control(), None
    doc = _read_json(path, "control")
    if "control" in doc:  # an optimize result
        xi = doc.get("xi")
        doc = doc["control"]
    else:
        xi = doc.get("xi")
    control = ImpulsiveControl.from_json(doc, spec.cone)
    if abs(control.mu.T - spec.T) > 1e-12:
        raise ConfigurationError(f"control horizon {control.mu.T} differs from T = {spec.T}")
    if control.mu.m != spec.m:
        raise ConfigurationError(f"control measure has m = {control.mu.m}, expected {spec.m}")
    return control, None if xi is None else np.asarray(xi, float)


def _xi(spec: ProblemSpec, args, from_control) -> np.ndarray:
    if args.xi is not None:
        try:
            vals = [float(v) for v in args.xi.split(",")]
        except ValueError as exc:
            raise ConfigurationError(f"--xi expects comma separated numbers: {exc}") from exc
        if len(vals) != spec.n:
            raise ConfigurationError(f"--xi has {len(vals)} entries, expected {spec.n}")
        return np.array(vals)
    return initial_point(spec, from_control)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_validate(spec: ProblemSpec, args, sink: _Sink):
    report = {
        "name": spec.name, "n": spec.n, "m": spec.m, "q": spec.q, "N": spec.N, "T": spec.T,
        "delays": list(spec.delays), "state_free": spec.state_free, "nonsmooth": sorted(spec.nonsmooth),
        "analytic_gradients": sorted(k for k, g in (("f", spec.grad_f), ("l0", spec.grad_l0),
                                                     ("Phi", spec.grad_Phi), ("Psi", spec.grad_Psi)) if g),
        "valid": True,
    }
    sink.emit("validate.json", _json_text(report), main=True)
    sink.emit("scenario.json", dump_scenario(spec.source))


def cmd_probe(spec: ProblemSpec, args, sink: _Sink):
    report = probe_hypotheses(spec, args.samples, seed=args.seed)
    sink.emit("probe.json", _json_text(report), main=True)


def cmd_simulate(spec: ProblemSpec, args, sink: _Sink):
    control, cxi = _load_control(spec, args.control)
    xi = _xi(spec, args, cxi)
    traj = simulate(spec, control, xi, args.grid)
    report = {
        "grid": args.grid,
        "xi": xi.tolist(),
        "final": traj.final().tolist(),
        "sup_norm": traj.sup_norm(),
        "residual": residual(spec, control, traj),
        "gronwall_bound": gronwall_bound(spec, control, xi, args.grid),
        "jumps": [{"t": float(t), "jump": j.tolist()} for t, j in traj.jumps()],
        "cost": evaluate_cost(spec, control, xi, args.grid),
    }
    sink.emit("simulate.json", _json_text(report), main=True)
    sink.emit("trajectory.csv", trajectory_csv(traj, history=True))


def cmd_to_aux(spec: ProblemSpec, args, sink: _Sink):
    control, _ = _load_control(spec, args.control)
    control.validate(spec)
    aux = to_auxiliary(control, spec)
    lhs = integrate(lambda t: spec.eval_G(t, control.alpha_lookup(t)), control.mu, vectorized=True,
                    breaks=control.breakpoints())
    rhs = integrate(lambda t: g_frak(spec, t, aux.alpha_cells(t), aux.omega_at(t))[..., None], aux.nu,
                    vectorized=True, breaks=aux.breakpoints())
    report = {"auxiliary": aux.to_json(), "integral_gap": float(np.max(np.abs(np.asarray(lhs) - np.asarray(rhs))))}
    sink.emit("to_aux.json", _json_text(report), main=True)
    sink.emit("aux_control.json", _json_text(aux.to_json()))


def cmd_from_aux(spec: ProblemSpec, args, sink: _Sink):
    if args.control is None:
        raise ConfigurationError("from-aux needs --control with an auxiliary control document")
    doc = _read_json(args.control, "auxiliary control")
    aux = AuxiliaryControl.from_json(doc.get("auxiliary", doc), spec.m)
    control = from_auxiliary(aux, spec)
    sink.emit("control.json", _json_text(control.to_json()), main=True)


def cmd_approx(spec: ProblemSpec, args, sink: _Sink):
    control, cxi = _load_control(spec, args.control)
    xi = _xi(spec, args, cxi)
    lo, hi = args.levels
    widths = [2.0 ** -k for k in range(lo, hi + 1)]
    rep = density_sequence(spec, control, xi, widths, args.grid, threshold=args.tol)
    sink.emit("approx.json", _json_text(rep.to_json()), main=True)
    rows = ["width,measure_gap,trajectory_gap,pointwise_error,endpoint_error"]
    for vals in zip(rep.widths, rep.measure_gaps, rep.trajectory_gaps, rep.pointwise_errors, rep.endpoint_errors):
        rows.append(",".join(format(float(v), ".17g") for v in vals))
    sink.emit("approx.csv", "\n".join(rows) + "\n")


def cmd_check_pmp(spec: ProblemSpec, args, sink: _Sink):
    control, cxi = _load_control(spec, args.control)
    xi = _xi(spec, args, cxi)
    traj = simulate(spec, control, xi, args.grid)
    cert = certify(spec, (control, traj), args.lam, mode=args.mode, tol=args.tol)
    sink.emit("certificate.json", _json_text(cert.to_json()), main=True)
    sink.emit("adjoint.csv", cert.trace_csv())


def cmd_optimize(spec: ProblemSpec, args, sink: _Sink):
    tr = Transcription(spec, args.grid, density=args.density, starts=args.starts)
    res = optimize(spec, tr, args.seed)
    report = res.to_json()
    if args.certify:
        traj = simulate(spec, res.control, res.xi, args.grid)
        cert = certify(spec, (res.control, traj), args.lam, tol=args.tol)
        report["certificate"] = cert.to_json()
        sink.emit("adjoint.csv", cert.trace_csv())
    sink.emit("optimize.json", _json_text(report), main=True)
    sink.emit("control.json", _json_text({**res.control.to_json(), "xi": res.xi.tolist()}))
    sink.emit("optimize_trace.csv", res.trace_csv())


COMMANDS = {
    "simulate": (cmd_simulate, "simulate one impulsive control"),
    "to-aux": (cmd_to_aux, "convert a control to its graph-completion (auxiliary) form"),
    "from-aux": (cmd_from_aux, "convert an auxiliary control back"),
    "approx": (cmd_approx, "approximate the control's atoms by densities of shrinking width"),
    "check-pmp": (cmd_check_pmp, "evaluate the maximum-principle conditions for a process"),
    "optimize": (cmd_optimize, "transcribe and optimize the problem"),
    "validate": (cmd_validate, "validate and canonicalize a scenario"),
    "probe": (cmd_probe, "sample the growth, Lipschitz and continuity hypotheses"),
}


def _levels(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected LO:HI") from exc
    if lo > hi:
        raise argparse.ArgumentTypeError("LO must not exceed HI")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="impdelay", description="Impulsive delayed optimal control toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", required=True, help="scenario JSON file or shipped scenario name")
        p.add_argument("--out", help="output directory (default: main report to stdout)")
        p.add_argument("--grid", type=int, default=64 if name == "optimize" else 256, help="base grid cells")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--control", "--process", dest="control", help="control JSON document")
        p.add_argument("--xi", help="initial point, comma separated")
        if name in ("check-pmp", "optimize"):
            p.add_argument("--lambda", dest="lam", type=float, default=None, help="cost multiplier (0 or 1)")
        if name == "check-pmp":
            p.add_argument("--mode", choices=("optimality", "boundary"), default="optimality")
        if name == "optimize":
            p.add_argument("--certify", action="store_true", help="also certify the optimizer output")
            p.add_argument("--density", action="store_true", help="add a density block to the decision vector")
            p.add_argument("--starts", type=int, default=8)
        if name == "approx":
            p.add_argument("--levels", type=_levels, default=(2, 8), help="widths 2^-LO .. 2^-HI (default 2:8)")
        if name == "probe":
            p.add_argument("--samples", type=int, default=200)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", HypothesisWarning)
            warnings.showwarning = _show_warning
            spec = resolve_scenario(args.scenario)
            handler(spec, args, _Sink(args.out))
    except ImpDelayError as exc:
        print(f"impdelay {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
