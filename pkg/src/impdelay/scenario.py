"""Scenario documents: JSON files whose data are written in the expression language.

Schema (version 1)::

    {"version": 1, "name": str?, "n": int, "m": int, "q": int, "T": float,
     "delays": [0, h1, ...],
     "f": [expr] * n,            variables t, x0..xN, a
     "G": [[expr] * m] * n,      variables t, a
     "l0": expr, "l1": [expr] * m, "Phi": expr (xi, xT), "zeta": [expr] * n (t),
     "cone": {...}, "A": {"kind": "none" | "box" | "finite", ...},
     "target": {...}, "C": {...}?, "Psi": [expr]? (x), "xi": [float]?,
     "gradients": {"f": [[[expr]]], "l0": [[expr]], "Phi": [expr], "Psi": [[expr]]}?,
     "growth": expr?, "lipschitz": expr? (t)}

Errors name the offending field with a JSON pointer such as ``/G/1``.
"""

from __future__ import annotations

import json
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from .auxiliary import hausdorff_probe
from .dynamics import probe_drift
from .errors import ConfigurationError, HypothesisWarning
from .expressions import Expression, parse_expression
from .measures import Cone
from .problem import ControlSet, InitialSet, ProblemSpec, TargetSet

__all__ = [
    "SCHEMA_VERSION",
    "SchemaError",
    "spec_from_dict",
    "load_scenario",
    "builtin_scenario",
    "builtin_names",
    "canonical_document",
    "dump_scenario",
    "initial_point",
    "probe_hypotheses",
]

SCHEMA_VERSION = 1
KINK_OFFSET = 1e-3
REQUIRED = ("n", "m", "q", "T", "delays", "f", "G")
KNOWN = set(REQUIRED) | {"version", "name", "description", "l0", "l1", "Phi", "zeta", "cone", "A", "target",
                         "C", "Psi", "xi", "gradients", "growth", "lipschitz"}


class SchemaError(ConfigurationError):
    """Scenario document violates the schema; ``pointer`` locates the field."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


def _int(doc, key, lo=0) -> int:
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise SchemaError(f"/{key}", f"expected an integer >= {lo}")
    return v


def _list(value, length, pointer, what):
    if not isinstance(value, list):
        raise SchemaError(pointer, f"expected a list of {what}")
    if length is not None and len(value) != length:
        raise SchemaError(pointer, f"{pointer.strip('/').split('/')[0]} has {len(value)} entries, expected {length}")
    return value


def _expr(text, dims, pointer) -> Expression:
    if isinstance(text, bool) or not isinstance(text, (str, int, float)):
        raise SchemaError(pointer, "expected an expression string or number")
    try:
        return parse_expression(str(text), dims)
    except ConfigurationError as exc:
        raise SchemaError(pointer, str(exc)) from exc


def _stack(exprs, env, shape):
    """Evaluate a flat list of expressions and stack them on trailing axes of ``shape``."""
    vals = [np.broadcast_to(np.asarray(e.evaluate(**env), dtype=float), shape) for e in exprs]
    return np.stack(vals, axis=-1) if vals else np.zeros(shape + (0,))


def _env_drift(t, xs, a, N):
    env = {"t": np.asarray(t, dtype=float), "a": np.asarray(a, dtype=float)}
    xs = np.asarray(xs, dtype=float)
    for k in range(N + 1):
        env[f"x{k}"] = xs[..., k, :]
    return env


# ---------------------------------------------------------------------------
# document -> ProblemSpec
# ---------------------------------------------------------------------------

def spec_from_dict(doc: dict, source: str | None = None) -> ProblemSpec:
    """Validate a scenario document and compile it into a :class:`ProblemSpec`."""
    if not isinstance(doc, dict):
        raise SchemaError("", "scenario must be a JSON object")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError("/version", f"unsupported version {version!r}")
    for key in REQUIRED:
        if key not in doc:
            raise SchemaError(f"/{key}", "required field is missing")
    unknown = sorted(set(doc) - KNOWN)
    if unknown:
        raise SchemaError(f"/{unknown[0]}", "unknown field")
    n, m, q = _int(doc, "n", 1), _int(doc, "m", 1), _int(doc, "q", 0)
    T = doc["T"]
    if isinstance(T, bool) or not isinstance(T, (int, float)) or not T > 0:
        raise SchemaError("/T", "expected a positive number")
    delays = _list(doc["delays"], None, "/delays", "numbers")
    if not delays or any(isinstance(h, bool) or not isinstance(h, (int, float)) for h in delays):
        raise SchemaError("/delays", "expected a nonempty list of numbers")
    if delays[0] != 0:
        raise SchemaError("/delays/0", "first delay must be 0")
    if any(b <= a for a, b in zip(delays, delays[1:])):
        raise SchemaError("/delays", "delays must be strictly increasing")
    N = len(delays) - 1

    drift_dims = {"t": 0, **{f"x{k}": n for k in range(N + 1)}}
    if q:
        drift_dims["a"] = q
    fast_dims = {"t": 0, **({"a": q} if q else {})}

    f_ex = [_expr(e, drift_dims, f"/f/{i}") for i, e in enumerate(_list(doc["f"], n, "/f", "expressions"))]
    G_rows = _list(doc["G"], n, "/G", "rows")
    G_ex = [[_expr(e, fast_dims, f"/G/{i}/{j}") for j, e in enumerate(_list(row, m, f"/G/{i}", "expressions"))]
            for i, row in enumerate(G_rows)]
    l0_ex = _expr(doc.get("l0", 0), drift_dims, "/l0")
    l1_ex = [_expr(e, fast_dims, f"/l1/{j}") for j, e in enumerate(_list(doc.get("l1", [0] * m), m, "/l1", "expressions"))]
    Phi_ex = _expr(doc.get("Phi", 0), {"xi": n, "xT": n}, "/Phi")
    zeta_ex = [_expr(e, {"t": 0}, f"/zeta/{i}") for i, e in enumerate(_list(doc.get("zeta", [0] * n), n, "/zeta", "expressions"))]
    Psi_ex = None
    if "Psi" in doc:
        Psi_ex = [_expr(e, {"x": n}, f"/Psi/{i}") for i, e in enumerate(_list(doc["Psi"], None, "/Psi", "expressions"))]
        if not Psi_ex:
            raise SchemaError("/Psi", "Psi needs at least one component")

    nonsmooth = set()
    for name, group in (("f", f_ex), ("G", [e for r in G_ex for e in r]), ("l0", [l0_ex]), ("l1", l1_ex),
                        ("Phi", [Phi_ex]), ("zeta", zeta_ex), ("Psi", Psi_ex or [])):
        if any(e.nonsmooth for e in group):
            nonsmooth.add(name)

    def f(t, xs, a):
        shape = np.broadcast_shapes(np.shape(t), np.shape(xs)[:-2], np.shape(a)[:-1])
        return _stack(f_ex, _env_drift(t, xs, a, N), shape)

    def G(t, a):
        shape = np.broadcast_shapes(np.shape(t), np.shape(a)[:-1])
        env = {"t": np.asarray(t, dtype=float), "a": np.asarray(a, dtype=float)}
        flat = _stack([e for row in G_ex for e in row], env, shape)
        return flat.reshape(shape + (n, m))

    def l0(t, xs, a):
        shape = np.broadcast_shapes(np.shape(t), np.shape(xs)[:-2], np.shape(a)[:-1])
        return np.broadcast_to(np.asarray(l0_ex.evaluate(**_env_drift(t, xs, a, N)), dtype=float), shape)

    def l1(t, a):
        shape = np.broadcast_shapes(np.shape(t), np.shape(a)[:-1])
        return _stack(l1_ex, {"t": np.asarray(t, dtype=float), "a": np.asarray(a, dtype=float)}, shape)

    def Phi(xi, xT):
        xi, xT = np.asarray(xi, dtype=float), np.asarray(xT, dtype=float)
        shape = np.broadcast_shapes(xi.shape[:-1], xT.shape[:-1])
        return np.broadcast_to(np.asarray(Phi_ex.evaluate(xi=xi, xT=xT), dtype=float), shape)

    def zeta(s):
        return _stack(zeta_ex, {"t": np.asarray(s, dtype=float)}, np.shape(s))

    Psi = None
    if Psi_ex is not None:
        def Psi(x):
            x = np.asarray(x, dtype=float)
            return _stack(Psi_ex, {"x": x}, x.shape[:-1])

    grads = _gradients(doc.get("gradients"), n, N, q, len(Psi_ex or []), drift_dims, nonsmooth)

    cone = _cone(doc.get("cone", {"kind": "nonnegative_orthant"}), m)
    control_set = _control_set(doc.get("A", {"kind": "none"}), q)
    target = _target(doc.get("target", {"kind": "free"}), n)
    initial_set = _initial(doc.get("C", {"kind": "free"}), n)
    if "xi" in doc:
        xi = _list(doc["xi"], n, "/xi", "numbers")
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in xi):
            raise SchemaError("/xi", "expected numbers")

    growth = lipschitz = None
    for key in ("growth", "lipschitz"):
        if key in doc:
            ex = _expr(doc[key], {"t": 0}, f"/{key}")
            fn = (lambda e: (lambda t: np.asarray(e.evaluate(t=np.asarray(t, float)), dtype=float)))(ex)
            if key == "growth":
                growth = fn
            else:
                lipschitz = fn

    state_free = not any(e.depends_on(*[f"x{k}" for k in range(N + 1)]) for e in f_ex)
    try:
        spec = ProblemSpec(
            T=float(T), delays=tuple(float(h) for h in delays), n=n, m=m, q=q,
            f=f, G=G, l0=l0 if "l0" in doc else None, l1=l1, Phi=Phi, zeta=zeta,
            cone=cone, control_set=control_set, target=target, Psi=Psi, initial_set=initial_set,
            grad_f=grads.get("f"), grad_l0=grads.get("l0"), grad_Phi=grads.get("Phi"), grad_Psi=grads.get("Psi"),
            growth=growth, lipschitz=lipschitz, state_free=state_free, nonsmooth=frozenset(nonsmooth),
            source=doc, name=str(doc.get("name", source or "")),
        )
    except SchemaError:
        raise
    except ConfigurationError as exc:
        raise SchemaError("", str(exc)) from exc
    return spec


def _gradients(block, n, N, q, l, drift_dims, nonsmooth) -> dict:
    if block is None:
        return {}
    if not isinstance(block, dict):
        raise SchemaError("/gradients", "expected an object")
    out = {}
    unknown = sorted(set(block) - {"f", "l0", "Phi", "Psi"})
    if unknown:
        raise SchemaError(f"/gradients/{unknown[0]}", "unknown gradient")
    if "f" in block:
        rows = _list(block["f"], N + 1, "/gradients/f", "delay blocks")
        ex = [[[_expr(e, drift_dims, f"/gradients/f/{k}/{i}/{j}")
                for j, e in enumerate(_list(r, n, f"/gradients/f/{k}/{i}", "expressions"))]
               for i, r in enumerate(_list(blk, n, f"/gradients/f/{k}", "rows"))]
              for k, blk in enumerate(rows)]
        flat = [e for blk in ex for r in blk for e in r]

        def grad_f(t, xs, a):
            shape = np.broadcast_shapes(np.shape(t), np.shape(xs)[:-2], np.shape(a)[:-1])
            return _stack(flat, _env_drift(t, xs, a, N), shape).reshape(shape + (N + 1, n, n))

        out["f"] = grad_f
    if "l0" in block:
        ex = [[_expr(e, drift_dims, f"/gradients/l0/{k}/{j}")
               for j, e in enumerate(_list(r, n, f"/gradients/l0/{k}", "expressions"))]
              for k, r in enumerate(_list(block["l0"], N + 1, "/gradients/l0", "rows"))]
        flat = [e for r in ex for e in r]

        def grad_l0(t, xs, a):
            shape = np.broadcast_shapes(np.shape(t), np.shape(xs)[:-2], np.shape(a)[:-1])
            return _stack(flat, _env_drift(t, xs, a, N), shape).reshape(shape + (N + 1, n))

        out["l0"] = grad_l0
    if "Phi" in block:
        ex = [_expr(e, {"xi": n, "xT": n}, f"/gradients/Phi/{j}")
              for j, e in enumerate(_list(block["Phi"], 2 * n, "/gradients/Phi", "expressions"))]

        def grad_Phi(xi, xT):
            xi, xT = np.asarray(xi, float), np.asarray(xT, float)
            return _stack(ex, {"xi": xi, "xT": xT}, np.broadcast_shapes(xi.shape[:-1], xT.shape[:-1]))

        out["Phi"] = grad_Phi
    if "Psi" in block:
        ex = [[_expr(e, {"x": n}, f"/gradients/Psi/{i}/{j}")
               for j, e in enumerate(_list(r, n, f"/gradients/Psi/{i}", "expressions"))]
              for i, r in enumerate(_list(block["Psi"], l, "/gradients/Psi", "rows"))]
        flat = [e for r in ex for e in r]

        def grad_Psi(x):
            x = np.asarray(x, float)
            return _stack(flat, {"x": x}, x.shape[:-1]).reshape(x.shape[:-1] + (l, n))

        out["Psi"] = grad_Psi
    dropped = sorted(set(out) & nonsmooth)
    if dropped:
        warnings.warn(f"analytic gradients of nonsmooth data ignored: {', '.join(dropped)}", HypothesisWarning,
                      stacklevel=3)
        for k in dropped:
            del out[k]
    return out


def _cone(block, m) -> Cone:
    if not isinstance(block, dict):
        raise SchemaError("/cone", "expected an object")
    try:
        return Cone.from_json(block, m)
    except (ConfigurationError, KeyError, ValueError) as exc:
        raise SchemaError("/cone", str(exc)) from exc


def _control_set(block, q) -> ControlSet:
    if not isinstance(block, dict):
        raise SchemaError("/A", "expected an object")
    kind = block.get("kind", "none")
    if kind == "none":
        if q:
            raise SchemaError("/A/kind", f"q = {q} needs a box or finite control set")
        return ControlSet.none()
    if kind == "box":
        bounds = []
        for key in ("lo", "hi"):
            vals = _list(block.get(key), q, f"/A/{key}", "bounds")
            fns = []
            for j, v in enumerate(vals):
                if isinstance(v, (int, float)) and not isinstance(v, bool):
                    fns.append(float(v))
                else:
                    ex = _expr(v, {"t": 0}, f"/A/{key}/{j}")
                    fns.append((lambda e: (lambda t: float(e.evaluate(t=float(t)))))(ex))
            bounds.append(fns)
        try:
            return ControlSet.box(*bounds)
        except ConfigurationError as exc:
            raise SchemaError("/A", str(exc)) from exc
    if kind == "finite":
        pts = _list(block.get("points"), None, "/A/points", "points")
        try:
            cs = ControlSet.finite(pts)
        except (ConfigurationError, ValueError) as exc:
            raise SchemaError("/A/points", str(exc)) from exc
        if cs.q != q:
            raise SchemaError("/A/points", f"points have {cs.q} entries, expected {q}")
        return cs
    raise SchemaError("/A/kind", f"unsupported control set kind {kind!r} (box or finite list only)")


def _target(block, n) -> TargetSet:
    if not isinstance(block, dict):
        raise SchemaError("/target", "expected an object")
    try:
        return TargetSet.from_json(block, n)
    except (ConfigurationError, ValueError, TypeError) as exc:
        raise SchemaError("/target", str(exc)) from exc


def _initial(block, n) -> InitialSet:
    if not isinstance(block, dict):
        raise SchemaError("/C", "expected an object")
    try:
        return InitialSet.from_json(block, n)
    except (ConfigurationError, KeyError, ValueError, TypeError) as exc:
        raise SchemaError("/C", str(exc)) from exc


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def load_scenario(path) -> ProblemSpec:
    """Read and compile a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return spec_from_dict(doc, source=path.stem)


def builtin_names() -> list[str]:
    root = resources.files("impdelay") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def builtin_scenario(name: str) -> ProblemSpec:
    """Load one of the scenario files shipped with the package."""
    root = resources.files("impdelay") / "scenarios"
    res = root / f"{name}.json"
    if not res.is_file():
        raise ConfigurationError(f"no builtin scenario {name!r}; available: {', '.join(builtin_names())}")
    return spec_from_dict(json.loads(res.read_text()), source=name)


def canonical_document(doc: dict) -> dict:
    """Fill defaults and normalize numbers so that documents compare by value."""
    spec = spec_from_dict(doc)
    n, m = spec.n, spec.m
    out = {
        "version": SCHEMA_VERSION,
        "name": spec.name,
        "n": n, "m": m, "q": spec.q,
        "T": spec.T,
        "delays": list(spec.delays),
        "f": [str(e) for e in doc["f"]],
        "G": [[str(e) for e in row] for row in doc["G"]],
        "l0": str(doc.get("l0", 0)),
        "l1": [str(e) for e in doc.get("l1", [0] * m)],
        "Phi": str(doc.get("Phi", 0)),
        "zeta": [str(e) for e in doc.get("zeta", [0] * n)],
        "cone": spec.cone.to_json(),
        "A": _control_set_json(doc.get("A", {"kind": "none"})),
        "target": spec.target.to_json(),
        "C": spec.initial_set.to_json(),
    }
    for key in ("Psi",):
        if key in doc:
            out[key] = [str(e) for e in doc[key]]
    if "xi" in doc:
        out["xi"] = [float(v) for v in doc["xi"]]
    if "gradients" in doc:
        out["gradients"] = json.loads(json.dumps(doc["gradients"], default=str), parse_int=str, parse_float=str)
    for key in ("growth", "lipschitz"):
        if key in doc:
            out[key] = str(doc[key])
    if "description" in doc:
        out["description"] = str(doc["description"])
    return out


def _control_set_json(block: dict) -> dict:
    out = {"kind": block.get("kind", "none")}
    if out["kind"] == "box":
        conv = lambda v: float(v) if isinstance(v, (int, float)) else str(v)  # noqa: E731
        out["lo"] = [conv(v) for v in block["lo"]]
        out["hi"] = [conv(v) for v in block["hi"]]
    if out["kind"] == "finite":
        out["points"] = [[float(v) for v in p] for p in block["points"]]
    return out


def dump_scenario(doc: dict) -> str:
    """Deterministic JSON text of the canonical document."""
    return json.dumps(canonical_document(doc), indent=2, sort_keys=True) + "\n"


def initial_point(spec: ProblemSpec, override=None) -> np.ndarray:
    """xi from an explicit override, the scenario's ``xi``, a fixed initial target, or zero."""
    if override is not None:
        return np.asarray(override, dtype=float).reshape(spec.n)
    if spec.source and "xi" in spec.source:
        return np.asarray(spec.source["xi"], dtype=float).reshape(spec.n)
    fixed = spec.target.fixed_initial
    if fixed is not None:
        return fixed
    iset = spec.initial_set
    return np.clip(np.zeros(spec.n), iset.lo, iset.hi)


# ---------------------------------------------------------------------------
# hypothesis probes
# ---------------------------------------------------------------------------

def _pair_lipschitz(spec: ProblemSpec, rng, samples: int, radius: float) -> float:
    """max |f(t, z + d, a) - f(t, z, a)| / |d| over random pairs with |z| ~ radius and |d| = 1e-3.

    Pairs of finite size keep the estimate meaningful across kinks of
    nonsmooth data, where finite-difference Jacobians are unreliable.
    """
    K, n = spec.N + 1, spec.n
    t = rng.uniform(0.0, spec.T, samples)
    if spec.q:
        A = np.stack([(lambda P: P[rng.integers(len(P))])(spec.control_set.samples(tt, 5)) for tt in t])
    else:
        A = np.zeros((samples, 0))
    z = rng.normal(size=(samples, K, n))
    z *= radius / np.linalg.norm(z.reshape(samples, -1), axis=1)[:, None, None]
    dz = rng.normal(size=(samples, K, n))
    dz *= KINK_OFFSET / np.linalg.norm(dz.reshape(samples, -1), axis=1)[:, None, None]
    num = np.linalg.norm(spec.eval_f(t, z + dz, A) - spec.eval_f(t, z, A), axis=-1)
    return float(np.max(num) / KINK_OFFSET)


def probe_hypotheses(spec: ProblemSpec, samples: int = 200, seed: int = 0) -> dict:
    """Sampled surrogates of the standing hypotheses on the data.

    Reports a pairwise Lipschitz estimate of f in the delayed states, the
    growth coefficient sup |f| / (1 + |z|), and the Hausdorff distance between
    compactified fast-dynamics sets at consecutive times.  Flags are warnings,
    never errors.
    """
    if samples < 100:
        warnings.warn("fewer than 100 samples requested; using 100", HypothesisWarning, stacklevel=2)
        samples = 100
    rng = np.random.default_rng(seed)
    pairs = {r: _pair_lipschitz(spec, rng, samples, r) for r in (1.0, 10.0, 100.0, 1000.0)}
    probe = probe_drift(spec, samples=max(65, samples // 2 + 1), seed=seed)
    growth_by_r = {r: float(v.max()) for r, v in probe.growth_by_radius.items()}
    jac_by_r = {r: float(v.max()) for r, v in probe.lipschitz_by_radius.items()}
    lip_by_r = {r: max(pairs[r], jac_by_r.get(r, 0.0)) for r in pairs}
    lip = max(float(probe.lipschitz.max()), pairs[1.0], pairs[10.0])
    lip_flag = bool(probe.lipschitz_flag) or lip_by_r[1000.0] > 2.0 * max(lip_by_r[100.0], 1e-12)
    coarse = hausdorff_probe(spec, np.linspace(0.0, spec.T, 65), seed=seed)
    fine = hausdorff_probe(spec, np.linspace(0.0, spec.T, 129), seed=seed)
    haus = float(fine.max(initial=0.0))
    haus_flag = bool(haus > 1e-6 and haus > 0.75 * float(coarse.max(initial=0.0)))
    report = {
        "samples": samples,
        "lipschitz": lip,
        "lipschitz_by_radius": {str(r): v for r, v in lip_by_r.items()},
        "lipschitz_flag": bool(lip_flag),
        "growth": float(probe.growth.max()),
        "growth_by_radius": {str(r): v for r, v in growth_by_r.items()},
        "growth_flag": bool(probe.growth_flag),
        "hausdorff_max": haus,
        "hausdorff_flag": haus_flag,
        "nonsmooth": sorted(spec.nonsmooth),
        "state_free": spec.state_free,
    }
    for key, msg in (("lipschitz_flag", "Lipschitz estimate grows with the probe radius"),
                     ("growth_flag", "drift grows faster than linearly"),
                     ("hausdorff_flag", "fast dynamics set jumps in time")):
        if report[key]:
            warnings.warn(msg, HypothesisWarning, stacklevel=2)
    return report
