"""Command-line front end.

    toruscert classify systems/example1.json --out report.json

Exit status: 0 when the check passes or the search finds something, 2 when it
does not; usage and input errors exit with 1.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import certify, constructions, flow, search
from . import exprlang as el
from .fourier import Grid2
from .geometry import FiberedSystem, GeometryError, OneForm2, VectorField2, VolumeForm2

EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 1, 2

_FIELD = {"type": "object", "required": ["dx", "dy"],
          "properties": {"dx": {"type": "string"}, "dy": {"type": "string"}},
          "additionalProperties": False}

SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["X"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "m": {"type": "integer", "minimum": 0},
        "U": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                         "minItems": 2, "maxItems": 2}},
        "X": _FIELD,
        "first_integrals": {"type": "array", "items": {"type": "string"}},
        "volume_density": {"type": "string"},
        "claims": {
            "type": "object",
            "properties": {
                "symmetries": {"type": "array", "items": _FIELD},
                "one_form": _FIELD,
                "Y": _FIELD,
                "g": {"type": "string"},
                "h": {"type": "string"},
                "lambda": {"type": "string"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["command", "system", "verdict", "exit_code", "hypotheses", "residuals",
                 "kernel_reports", "rotation", "sections", "classification"],
    "properties": {
        "command": {"type": "string"},
        "system": {"type": "string"},
        "verdict": {"enum": ["pass", "fail", "found", "not-found", "error"]},
        "exit_code": {"enum": [0, 2]},
        "options": {"type": "object"},
        "hypotheses": {"type": "object"},
        "residuals": {"type": "object"},
        "kernel_reports": {"type": "object"},
        "rotation": {"type": ["array", "null"]},
        "sections": {"type": ["object", "null"]},
        "classification": {"type": ["object", "null"]},
        "messages": {"type": "array", "items": {"type": "string"}},
    },
}


class InputError(Exception):
    pass


@dataclass
class SystemFile:
    path: str
    system: FiberedSystem
    claims: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def claim_field(self, key: str) -> VectorField2 | None:
        v = self.claims.get(key)
        return None if v is None else _field(v, self.system.variables, f"claims.{key}")

    def claim_expr(self, key: str) -> el.Expr | None:
        v = self.claims.get(key)
        return None if v is None else _expr(v, self.system.variables, f"claims.{key}")

    @property
    def symmetries(self) -> list[VectorField2]:
        return [_field(v, self.system.variables, f"claims.symmetries[{i}]")
                for i, v in enumerate(self.claims.get("symmetries", []))]


def _expr(src: str, variables, where: str) -> el.Expr:
    try:
        return el.parse(src, variables)
    except el.ParseError as exc:
        caret = " " * (getattr(exc, "position", 0) or 0) + "^"
        raise InputError(f"{where}: {exc}\n  {src}\n  {caret}") from exc


def _field(d: dict, variables, where: str) -> VectorField2:
    return VectorField2(_expr(d["dx"], variables, f"{where}.dx"), _expr(d["dy"], variables, f"{where}.dy"))


def load_system(path: str) -> SystemFile:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        jsonschema.validate(raw, SYSTEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "(root)"
        raise InputError(f"{path}: {loc}: {exc.message}") from exc
    m = int(raw.get("m", 0))
    U = raw.get("U", [])
    if len(U) != m:
        raise InputError(f"{path}: U has {len(U)} intervals but m = {m}")
    variables = el.fiber_variables(m)
    X = _field(raw["X"], variables, "X")
    fis = [_expr(s, variables, f"first_integrals[{i}]") for i, s in enumerate(raw.get("first_integrals", []))]
    vol = raw.get("volume_density")
    volume = VolumeForm2(_expr(vol, variables, "volume_density")) if vol is not None else None
    name = raw.get("name", Path(path).stem)
    try:
        system = FiberedSystem(X, m, tuple(tuple(u) for u in U), fis, volume, name)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return SystemFile(str(path), system, raw.get("claims", {}), raw)


# ------------------------------------------------------------------ reporting


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(u) for k, u in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(u) for u in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(v, el.Expr):
        return el.to_string(v)
    return v


def new_report(command: str, sf: SystemFile, args) -> dict:
    return {
        "command": command,
        "system": sf.system.name,
        "verdict": "error",
        "exit_code": EXIT_FAIL,
        "options": {"grid": args.grid, "band": args.band, "tol": args.tol, "horizon": args.horizon,
                    "seeds": args.seeds, "fiber": list(args.fiber) if args.fiber is not None else None},
        "hypotheses": {},
        "residuals": {},
        "kernel_reports": {},
        "rotation": None,
        "sections": None,
        "classification": None,
        "messages": [certify.SAMPLING_NOTE],
    }


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path: str) -> None:
    text = dumps_report(report)
    jsonschema.validate(json.loads(text), REPORT_SCHEMA)
    Path(path).write_text(text)


def _finish(report: dict, ok: bool, yes: str, no: str) -> int:
    report["verdict"] = yes if ok else no
    report["exit_code"] = EXIT_OK if ok else EXIT_FAIL
    return report["exit_code"]


# ------------------------------------------------------------------- commands


def _grid(args) -> Grid2:
    return Grid2(args.grid)


def _fiber(sf: SystemFile, args) -> tuple:
    if args.fiber is None:
        return sf.system.default_fiber()
    if len(args.fiber) != sf.system.m:
        raise InputError(f"--fiber has {len(args.fiber)} values but m = {sf.system.m}")
    return tuple(args.fiber)


def cmd_check_ej(sf, args, report):
    cert = certify.check_ej(sf.system, None, _grid(args), args.tol, args.fiber)
    report["hypotheses"] = cert.to_dict()
    report["residuals"] = {k: v.residual for k, v in cert.verdicts.items()}
    return _finish(report, cert.passed, "pass", "fail")


def cmd_check_b(sf, args, report):
    cert = certify.check_b(sf.system, sf.symmetries, _grid(args), args.tol, args.fiber)
    report["hypotheses"] = cert.to_dict()
    report["residuals"] = {k: v.residual for k, v in cert.verdicts.items()}
    return _finish(report, cert.passed, "pass", "fail")


def _options(args) -> certify.ClassifyOptions:
    return certify.ClassifyOptions(grid=_grid(args), band=args.band, threshold=args.threshold, tol=args.tol,
                                   horizon=args.horizon, seeds=args.seeds)


def cmd_classify(sf, args, report):
    c = certify.classify(sf.system, _options(args), args.fiber)
    ev = c.evidence
    report["classification"] = {"tag": c.tag, "per_fiber": c.per_fiber, "flags": c.flags}
    report["kernel_reports"] = {"fibers": ev["kernel_reports"]}
    report["hypotheses"] = {"fibers": ev["hypotheses"]}
    report["sections"] = {"fibers": ev["sections"]}
    report["rotation"] = ev["rotation"]
    report["residuals"] = {
        "symmetry_candidates": [[cd["residual"] for cd in k["symmetry"]["candidates"]]
                                for k in ev["kernel_reports"]],
    }
    return _finish(report, c.tag != certify.TAG_INCONCLUSIVE, "pass", "fail")


def _search(fn, sf, args, report, key, **kw):
    res = fn(sf.system.X, _fiber(sf, args), _grid(args), args.band, args.threshold, **kw)
    report["kernel_reports"] = {key: res.to_dict()}
    report["residuals"] = {key: [c.residual for c in res.candidates]}
    return _finish(report, res.found, "found", "not-found")


def cmd_find_symmetry(sf, args, report):
    return _search(search.find_symmetries, sf, args, report, "symmetry")


def cmd_find_integral(sf, args, report):
    return _search(search.find_first_integrals, sf, args, report, "first_integral",
                   horizon=min(args.horizon, search.DEFAULT_VALIDATION_HORIZON))


def cmd_find_density(sf, args, report):
    return _search(search.find_invariant_density, sf, args, report, "density")


def cmd_rotation(sf, args, report):
    fp = _fiber(sf, args)
    seeds = flow.seed_points(args.seeds) if args.seeds > 1 else np.zeros((1, 2))
    ests = flow.rotation_vector(sf.system.X, fp, seeds, args.horizon, args.integrator_tol)
    report["rotation"] = [e.to_dict() for e in ests]
    if args.csv:
        flow.integrate(sf.system.X, fp, seeds[0], args.horizon, args.integrator_tol).to_csv(args.csv)
    ok = all(e.ratio is not None or e.inverse_ratio is not None for e in ests)
    return _finish(report, ok, "pass", "fail")


def cmd_poincare(sf, args, report):
    fp = _fiber(sf, args)
    try:
        sd = flow.poincare_section(sf.system.X, fp, args.level, args.returns, args.axis,
                                   tol=args.integrator_tol)
    except flow.NonTransversalError as exc:
        report["sections"] = {"error": str(exc)}
        report["messages"].append(str(exc))
        return _finish(report, False, "pass", "fail")
    test = flow.constant_return_time_test(sd)
    report["sections"] = {"summary": sd.summary(), "constant_return_time": test}
    if args.csv:
        sd.to_csv(args.csv)
    return _finish(report, True, "pass", "fail")


def cmd_construct(sf, args, report):
    grid, s, kind = _grid(args), sf.system, args.kind
    mu = s.volume or VolumeForm2()
    fibers = s.sample_fibers(args.fiber)

    def need(key, value):
        if value is None:
            raise InputError(f"construct {kind} needs claims.{key} in the system file")
        return value

    if kind == "volume":
        Y = sf.claim_field("Y") or (sf.symmetries[0] if sf.symmetries else None)
        out = constructions.volume_from_frame(s, need("Y", Y), grid, args.tol, args.fiber)
    elif kind == "symmetry-from-form":
        a = need("one_form", sf.claims.get("one_form"))
        alpha = OneForm2(_expr(a["dx"], s.variables, "claims.one_form.dx"),
                         _expr(a["dy"], s.variables, "claims.one_form.dy"))
        out = constructions.symmetry_from_one_form(s, alpha, mu, grid, args.tol, args.fiber)
        out.notes["condition_ii"] = constructions.check_condition_ii(s, alpha, grid, args.fiber)
    elif kind in ("lie-point-i", "lie-point-ii"):
        fn = constructions.lie_point_combine_i if kind == "lie-point-i" else constructions.lie_point_combine_ii
        out = fn(s.X, need("Y", sf.claim_field("Y")), need("g", sf.claim_expr("g")),
                 need("h", sf.claim_expr("h")), grid, fibers, args.tol)
    else:
        out = constructions.first_integral_from_pair(s, need("Y", sf.claim_field("Y")), mu,
                                                     sf.claim_expr("lambda"), grid, args.tol, args.fiber)
    d = out.to_dict()
    report["hypotheses"] = {"construction": d}
    report["residuals"] = {k: r["value"] for k, r in {**d["hypotheses"], **d["conclusions"]}.items()}
    report["classification"] = {"tag": out.tag}
    return _finish(report, out.ok, "pass", "fail")


COMMANDS = {
    "check-ej": cmd_check_ej,
    "check-b": cmd_check_b,
    "classify": cmd_classify,
    "find-symmetry": cmd_find_symmetry,
    "find-integral": cmd_find_integral,
    "find-density": cmd_find_density,
    "rotation": cmd_rotation,
    "poincare": cmd_poincare,
    "construct": cmd_construct,
}


def _fiber_arg(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"fiber point must be comma-separated numbers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=int, default=64, help="collocation grid size N (power of two)")
    common.add_argument("--band", type=int, default=None, help="Fourier band K (default N/4)")
    common.add_argument("--tol", type=float, default=1e-8, help="hypothesis tolerance")
    common.add_argument("--threshold", type=float, default=search.DEFAULT_THRESHOLD,
                        help="relative singular value threshold for kernels")
    common.add_argument("--integrator-tol", type=float, default=flow.DEFAULT_TOL)
    common.add_argument("--horizon", type=float, default=flow.DEFAULT_ROTATION_HORIZON)
    common.add_argument("--seeds", type=int, default=1, help="number of initial conditions")
    common.add_argument("--fiber", type=_fiber_arg, default=None, help="fiber point c1,c2,...")
    common.add_argument("--out", default="report.json", help="report path")
    common.add_argument("--csv", default=None, help="optional CSV output (trajectory or section)")

    p = argparse.ArgumentParser(prog="toruscert", description="Integrability certificates on U x T^2.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "construct":
            sp.add_argument("kind", choices=["volume", "symmetry-from-form", "lie-point-i", "lie-point-ii",
                                             "integral-from-pair"])
        sp.add_argument("system", help="system file (JSON)")
        if name == "poincare":
            sp.add_argument("--axis", choices=["x", "y"], default="y")
            sp.add_argument("--level", type=float, default=0.0)
            sp.add_argument("--returns", type=int, default=flow.DEFAULT_RETURNS)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        if args.grid < 8 or args.grid & (args.grid - 1):
            raise InputError(f"--grid must be a power of two >= 8, got {args.grid}")
        sf = load_system(args.system)
        if args.fiber is not None:
            _fiber(sf, args)
        report = new_report(args.command, sf, args)
        try:
            code = COMMANDS[args.command](sf, args, report)
        except (GeometryError, flow.IntegrationError, search.SearchError, el.EvaluationError) as exc:
            report["messages"].append(f"{type(exc).__name__}: {exc}")
            code = _finish(report, False, "pass", "fail")
            print(f"toruscert: {exc}", file=sys.stderr)
        write_report(report, args.out)
    except InputError as exc:
        print(f"toruscert: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"{args.command}: {report['verdict']} (report: {args.out})")
    return code


if __name__ == "__main__":
    sys.exit(main())
