"""Command-line front end.

Every report is canonical JSON: sorted keys, floats as 17-significant-digit
strings, and a header with the version, seed, tolerances, precision and the
SHA-256 of the inputs.  Exit codes: 0 verdict, 2 input error, 3 tolerance
escalation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from fractions import Fraction
from importlib import resources
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import mpmath
import numpy as np

from . import __version__
from .curve_model import Covering, standard_cycle_covering
from .flat_bundles import FlatCocycle, classify, classify_angle
from .jets import LaurentPoly, SplitFunction

EXIT_OK, EXIT_INPUT, EXIT_ESCALATION = 0, 2, 3
GOLDEN = "golden"


class InputError(ValueError):
    pass


class EscalationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Canonical output
# ---------------------------------------------------------------------------


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def canonical(obj):
    """Replace floats by pinned decimal strings; complex numbers become ``[re, im]``."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [fmt(obj.real), fmt(obj.imag)]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, mpmath.mpf):
        return mpmath.nstr(obj, 17)
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [canonical(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(canonical(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def header(args: argparse.Namespace, digest: str, tolerances: Dict[str, float]) -> dict:
    return {"tool": "uedalab", "version": __version__, "command": args.command, "seed": args.seed,
            "precision": args.precision, "tolerances": {k: tolerances[k] for k in sorted(tolerances)},
            "inputSha256": digest}


def _digest(blobs: Sequence[bytes], args: argparse.Namespace) -> str:
    h = hashlib.sha256()
    for b in blobs:
        h.update(hashlib.sha256(b).digest())
    skip = {"out", "csv", "func", "config", "points", "cubic", "bundle"}
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    h.update(json.dumps(canonical(opts), sort_keys=True).encode())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Input helpers
# ---------------------------------------------------------------------------


def _read(path: str) -> Tuple[bytes, object]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    try:
        return raw, json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _bundled(name: str) -> Tuple[bytes, object]:
    raw = resources.files("uedalab").joinpath("data", name).read_bytes()
    return raw, json.loads(raw.decode("utf-8"))


def _field(data, key: str, where: str):
    if not isinstance(data, dict) or key not in data:
        raise InputError(f"{where}: missing field {key!r}")
    return data[key]


def _parse_angle(v, where: str):
    if isinstance(v, str):
        if v == GOLDEN:
            return (math.sqrt(5) - 1) / 2
        try:
            return Fraction(v)
        except ValueError as exc:
            raise InputError(f"{where}: bad angle {v!r}") from exc
    if isinstance(v, dict):
        return Fraction(int(_field(v, "p", where)), int(_field(v, "q", where)))
    if isinstance(v, (int, float)):
        return float(v)
    raise InputError(f"{where}: bad angle {v!r}")


def _covering(data: dict, where: str) -> Covering:
    if "covering" in data:
        return Covering.from_json(data["covering"])
    return standard_cycle_covering(int(data.get("N", 1)))[1]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ueda_type(args) -> Tuple[dict, List[bytes], Dict[str, float]]:
    from .models import model_from_spec
    from .ueda import RankDeficient, compute_type

    raw, spec = _read(args.config) if args.config else _bundled("product_model.json")
    if not isinstance(spec, dict):
        raise InputError("model config must be an object")
    try:
        system = model_from_spec({"seed": args.seed, **spec})
    except (KeyError, TypeError) as exc:
        raise InputError(f"model config: {exc}") from exc
    try:
        rep = compute_type(system, args.n_max, args.tol)
    except RankDeficient as exc:
        raise EscalationError(str(exc)) from exc
    out = rep.to_json()
    out["ledger"] = {"model": spec.get("model", "product"), "nMax": args.n_max, "jetOrder": system.order,
                     "worstResidual": max((s.residual for s in rep.steps), default=0.0)}
    return out, [raw], {"tol": args.tol}


def cmd_classify_bundle(args):
    blobs: List[bytes] = []
    if args.bundle:
        raw, data = _read(args.bundle)
        blobs.append(raw)
        if not isinstance(data, dict):
            raise InputError("bundle file must be an object")
        if "edges" in data:
            L = FlatCocycle.from_json(_covering(data, args.bundle), data)
            res = classify(L, args.depth, args.torsion_bound)
            return {"classification": res.to_json(), "bundle": L.to_json()}, blobs, {}
        angle = _parse_angle(_field(data, "angle", args.bundle), args.bundle)
    elif args.angle is not None:
        angle = _parse_angle(args.angle, "--angle")
    else:
        raise InputError("give --bundle or --angle")
    res = classify_angle(angle, args.depth, args.torsion_bound)
    return {"classification": res.to_json(), "angle": angle if isinstance(angle, Fraction) else float(angle)}, \
        blobs, {}


def cmd_majorant(args):
    from .majorant import distance_sequence, exact_radius, majorant_a, majorant_siegel, siegel_conditions

    if args.angle is None:
        series = majorant_a(args.M0, args.R0, args.n_max, dps=args.precision)
        extra = {"exactRadius": exact_radius(args.M0, args.R0),
                 "A2EqualsM0": bool(series.n_max < 2 or series[2] == mpmath.mpf(args.M0))}
    else:
        angle = _parse_angle(args.angle, "--angle")
        d = distance_sequence(angle, args.n_max)
        series = majorant_siegel(args.M0, args.M5, args.R0, d, args.n_max, dps=args.precision)
        extra = {"siegel": siegel_conditions(args.M0, args.M5, d, min(args.n_max, 200)).to_json()}
    out = series.to_json()
    out.update(extra)
    out["allNonnegative"] = all(c >= 0 for c in series.coeffs)
    out["residual"] = series.residual()
    return out, [], {"tol": args.tol}


def _split(d: dict) -> SplitFunction:
    return SplitFunction(complex(d.get("constant", 0)), tuple(complex(v) for v in d.get("plus", ())),
                         tuple(complex(v) for v in d.get("minus", ())))


def _psh_model(spec: dict):
    from .psh_lab import CycleModel, FiniteTypeModel

    kind = spec.get("model", "finite")
    if kind == "finite":
        chart = spec.get("chart", "node")
        if chart == "node":
            g = _split(spec.get("g", {"plus": [1], "minus": [1]}))
        else:
            g = LaurentPoly.from_dict({int(k): complex(v) for k, v in spec.get("g", {"1": 1}).items()})
        return FiniteTypeModel(int(spec.get("n", 2)), g, chart), None
    if kind == "cycle":
        m = CycleModel(int(spec.get("N", 2)), float(spec.get("alpha", 1.5)), c=float(spec.get("c", 0.0)))
        return m, spec.get("chart", "K1")
    raise InputError(f"unknown psh model {kind!r}")


def cmd_psh_verify(args):
    from .psh_lab import (ChartPoint, FiniteTypeModel, cycle_prefactor, default_grid, hessian_analytic_cycle,
                          hessian_analytic_finite_type, phi_lambda_cycle, phi_lambda_finite, relative_det_errors,
                          sign_profile)

    raw, spec = _read(args.config) if args.config else (b"", {})
    if not isinstance(spec, dict):
        raise InputError("psh config must be an object")
    model, chart = _psh_model(spec)
    lam = float(spec.get("lambda", args.lam))
    eps = float(spec.get("epsilon", 0.0))
    shape = tuple(int(v) for v in spec.get("shape", (args.grid, args.grid)))
    grid = default_grid(model, chart, shape)
    prof = sign_profile(model, lam, grid, eps)
    rng = np.random.default_rng(args.seed)
    pts = []
    for _ in range(args.checks):
        w = 1e-3 * np.exp(2j * np.pi * rng.random())
        if isinstance(model, FiniteTypeModel):
            z = 0.3 * np.exp(2j * np.pi * rng.random()) if model.chart == "node" else np.exp(2j * np.pi * rng.random())
        else:
            lo, hi = (0.01, 0.55) if chart.startswith("K") else (0.35, 2.8)
            z = np.exp(2j * np.pi * rng.random()) * np.exp(rng.uniform(np.log(lo), np.log(hi)))
        pts.append((complex(w), complex(z)))
    if isinstance(model, FiniteTypeModel):
        f = phi_lambda_finite(model, lam, eps)
        lead: Callable = lambda w, z: hessian_analytic_finite_type(model, w, z, lam)[1]
        scale: Callable = lambda w, z: 1.0
    else:
        f = phi_lambda_cycle(model, chart, lam, eps)
        lead = lambda w, z: hessian_analytic_cycle(model, ChartPoint(chart, w, z), lam)[1]
        scale = lambda w, z: cycle_prefactor(model, ChartPoint(chart, w, z), lam)
    errs = relative_det_errors(f, pts, lead, scale, dps=args.precision) if pts else np.zeros(0)
    if not np.all(np.isfinite(errs)):
        raise EscalationError("finite-difference Hessian did not produce finite values")
    out = {"profile": prof.to_json(), "detRelativeErrors": list(errs),
           "maxDetRelativeError": float(errs.max()) if errs.size else 0.0, "lambda": lam}
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(prof.to_csv())
    return out, [raw], {"tol": args.tol}


def cmd_classify_nine_points(args):
    from .nine_points import PlaneConfig, classify_anticanonical

    raw, data = _read(args.points)
    blobs = [raw]
    if isinstance(data, list):
        data = {"points": data}
    if not isinstance(data, dict):
        raise InputError("points file must be an object or a list of triples")
    data = dict(data)
    if args.cubic:
        craw, cub = _read(args.cubic)
        blobs.append(craw)
        data["cubic"] = cub["cubic"] if isinstance(cub, dict) else cub
    opts = dict(data.get("options", {}))
    for flag, key in (("depth", "depth"), ("torsion_bound", "torsionBound"), ("e1_depth", "e1Depth")):
        v = getattr(args, flag)
        if v is not None:
            opts[key] = v
    opts["seed"] = args.seed
    data["options"] = opts
    _field(data, "points", args.points)
    cfg = PlaneConfig.from_json(data)
    rep = classify_anticanonical(cfg)
    return rep.to_json(), blobs, {"holonomy": 1e-9}


def cmd_cover_data(args):
    from .nine_points import RESOLUTIONS, cover_data, cover_data_from_lattice

    if args.case:
        if args.case not in RESOLUTIONS:
            raise InputError(f"no resolution for case {args.case}; choose from {sorted(RESOLUTIONS)}")
        cd = cover_data_from_lattice(RESOLUTIONS[args.case](), args.type_n)
    else:
        if args.a is None or not args.a_nu:
            raise InputError("give --case or --a with --a-nu")
        cd = cover_data(args.a, args.a_nu, type_n=args.type_n)
    return cd.to_json(), [], {}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-9, help="solver tolerance")
    common.add_argument("--n-max", type=int, default=8, help="highest order examined")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--precision", type=int, default=40, help="mpmath decimal digits where used")
    common.add_argument("--out", help="write the report here instead of stdout")

    p = argparse.ArgumentParser(prog="uedalab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ueda-type", parents=[common], help="type of a transition-function model")
    s.add_argument("--config", help="model JSON (default: bundled product model)")
    s.set_defaults(func=cmd_ueda_type)

    s = sub.add_parser("classify-bundle", parents=[common], help="torsion / E1 verdict of a flat bundle")
    s.add_argument("--bundle", help="bundle JSON with edges, or {angle}")
    s.add_argument("--angle", help="p/q, a float, or 'golden'")
    s.add_argument("--depth", type=int, default=10_000)
    s.add_argument("--torsion-bound", type=int, default=1000)
    s.set_defaults(func=cmd_classify_bundle)

    s = sub.add_parser("majorant", parents=[common], help="majorant series coefficients")
    s.add_argument("--M0", type=float, required=True)
    s.add_argument("--R0", type=float, required=True)
    s.add_argument("--M5", type=float, default=1.0)
    s.add_argument("--angle", help="holonomy angle for the small-divisor variant")
    s.set_defaults(func=cmd_majorant)

    s = sub.add_parser("psh-verify", parents=[common], help="Hessian checks and sign profiles")
    s.add_argument("--config", help="model JSON (default: finite-type node model, n = 2)")
    s.add_argument("--lam", type=float, default=1.5)
    s.add_argument("--grid", type=int, default=100)
    s.add_argument("--checks", type=int, default=5, help="finite-difference spot checks at |w| = 1e-3")
    s.add_argument("--csv", help="write the grid here")
    s.set_defaults(func=cmd_psh_verify)

    s = sub.add_parser("classify-nine-points", parents=[common], help="anti-canonical verdict for nine points")
    s.add_argument("--points", required=True)
    s.add_argument("--cubic")
    s.add_argument("--depth", type=int)
    s.add_argument("--torsion-bound", type=int)
    s.add_argument("--e1-depth", type=int)
    s.set_defaults(func=cmd_classify_nine_points)

    s = sub.add_parser("cover-data", parents=[common], help="cyclic-cover numbers of a resolution divisor")
    s.add_argument("--case", help="cuspidal, line_conic_tangent or concurrent_lines")
    s.add_argument("--a", type=int)
    s.add_argument("--a-nu", type=int, nargs="*")
    s.add_argument("--type-n", type=int, help="type of the cover, for the rate rescale n/a")
    s.set_defaults(func=cmd_cover_data)
    return p


def run(argv: Optional[Sequence[str]] = None) -> Tuple[int, str]:
    from .nine_points import NinePointError, PrecisionEscalation

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with mpmath.workdps(args.precision):
            report, blobs, tols = args.func(args)
    except (EscalationError, PrecisionEscalation) as exc:
        return EXIT_ESCALATION, f"uedalab: tolerance escalation failed: {exc}\n"
    except (InputError, NinePointError, ValueError, KeyError, TypeError) as exc:
        return EXIT_INPUT, f"uedalab: input error: {exc}\n"
    text = dumps({"header": header(args, _digest(blobs, args), tols), "report": report})
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
        return EXIT_OK, ""
    return EXIT_OK, text


def main(argv: Optional[Sequence[str]] = None) -> int:
    code, text = run(argv)
    (sys.stdout if code == EXIT_OK else sys.stderr).write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
