"""Command-line interface: ``crisk <command> --scenario FILE ...``.

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 property-check failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .diagnostics import PERTURBATIONS, PerturbationSpec, fatou_lebesgue_harness, james_check, \
    james_perturbed_check, simons_check
from .duality import attainment_check, conjugate, represent
from .errors import ConvergenceError, CriskError, InfeasibleError, UnknownNameError
from .risk import AXIOM_TOLERANCES, check_axioms
from .scenario import jsonable, load_scenario

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4

DEFAULT_TOL = 1e-9
# every check tolerance is --tol times one of these
TOL_MULTIPLIERS = {
    "represent_gap": 100.0,
    "attainment": 10.0,
    "monotonicity": 1e-3,
    "cash_invariance": 1e-3,
    "convexity": 0.1,
    "conditional_convexity": 0.1,
    "locality": 1e-3,
    "lipschitz": 0.1,
    "fatou": 1.0,
    "lebesgue": 100.0,
    "simons": 1e-3,
}


def tolerances(tol: float) -> dict:
    return {k: float(f"{tol * v:.12g}") for k, v in TOL_MULTIPLIERS.items()}


class PropertyFailure(Exception):
    pass


def _axiom_tols(tols):
    return {k: tols[k] for k in AXIOM_TOLERANCES}


def _measure_position(sc, args):
    if not args.measure or not args.position:
        raise UnknownNameError("argument", "--measure/--position", ["--measure", "--position"])
    return sc.get("measures", args.measure), sc.get("positions", args.position)


def cmd_eval(sc, args, tols):
    rho, x = _measure_position(sc, args)
    return {"value": rho(x)}, True


def cmd_conjugate(sc, args, tols):
    rho, y = _measure_position(sc, args)
    return {"value": conjugate(rho, y)}, True


def cmd_represent(sc, args, tols):
    rho, x = _measure_position(sc, args)
    rep = represent(rho, x)
    ok = bool(np.all(rep.gap <= tols["represent_gap"]))
    return dict(rep.to_json(), gap_tolerance=tols["represent_gap"], gap_ok=ok), ok


def cmd_attain(sc, args, tols):
    rho, x = _measure_position(sc, args)
    res = attainment_check(rho, x, tol=tols["attainment"])
    return dict(res.to_json(), tolerance=tols["attainment"]), bool(res.attained.all())


def cmd_axioms(sc, args, tols):
    if not args.measure:
        raise UnknownNameError("argument", "--measure", ["--measure"])
    rho = sc.get("measures", args.measure)
    rep = check_axioms(rho, args.trials, args.seed, _axiom_tols(tols))
    return rep.to_json(), rep.passed


def _functionals(sc, args, total):
    if args.functionals:
        F = np.array([sc.get("positions", name) for name in args.functionals.split(",")])
    else:
        F = np.random.default_rng(args.seed).normal(size=(args.count, total))
    return F


def cmd_james(sc, args, tols):
    if not args.polytope:
        raise UnknownNameError("argument", "--polytope", ["--polytope"])
    K = sc.get("polytopes", args.polytope)
    F = _functionals(sc, args, sum(b.dim for b in K.blocks))
    rep = james_check(K, F)
    return rep.to_json(), not rep.discrepancies


def cmd_james_perturbed(sc, args, tols):
    if not args.function:
        raise UnknownNameError("argument", "--function", ["--function"])
    f = sc.get("functions", args.function)
    F = _functionals(sc, args, sum(f.dims))
    rep = james_perturbed_check(f, F)
    return rep.to_json(), rep.consistent


def cmd_simons(sc, args, tols):
    if not args.sequence:
        raise UnknownNameError("argument", "--sequence", ["--sequence"])
    inst = sc.get("sequences", args.sequence)
    rep = simons_check(inst.sequence, inst.subset, tol=tols["simons"])
    return rep.to_json(), rep.verdict != "theorem_violation"


def cmd_fatou(sc, args, tols):
    rho, x = _measure_position(sc, args)
    spec = PerturbationSpec(kind=args.perturbation, seed=args.seed)
    rep = fatou_lebesgue_harness(rho, x, spec, fatou_tol=tols["fatou"], lebesgue_tol=tols["lebesgue"])
    return rep.to_json(), rep.passed


def _report_item(sc, mname, pname, args, tols):
    rho, x = sc.measures[mname], sc.positions[pname]
    item = {"measure": mname, "position": pname}
    try:
        item["eval"] = {"value": rho(x)}
        rep = represent(rho, x)
        item["represent"] = dict(rep.to_json(), gap_ok=bool(np.all(rep.gap <= tols["represent_gap"])))
        att = attainment_check(rho, x, tol=tols["attainment"])
        item["attain"] = att.to_json()
        ax = check_axioms(rho, args.trials, args.seed, _axiom_tols(tols))
        item["axioms"] = ax.to_json()
        item["ok"] = bool(item["represent"]["gap_ok"] and att.attained.all() and ax.passed)
    except CriskError as exc:
        item["error"] = {"type": type(exc).__name__, "message": str(exc)}
        item["ok"] = False
    except Exception as exc:  # a user-supplied evaluator may raise anything
        item["error"] = {"type": type(exc).__name__, "message": str(exc)}
        item["ok"] = False
    return item


def cmd_report(sc, args, tols):
    pairs = [(m, p) for m in sc.measures for p in sc.positions]
    threads = max(1, int(os.environ.get("CRISK_THREADS", "1") or 1))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        items = list(pool.map(lambda mp: _report_item(sc, mp[0], mp[1], args, tols), pairs))
    summary = {"items": len(items), "errors": sum("error" in it for it in items),
               "ok": sum(it["ok"] for it in items)}
    return {"summary": summary, "items": items}, True


COMMANDS = {
    "eval": cmd_eval,
    "conjugate": cmd_conjugate,
    "represent": cmd_represent,
    "attain": cmd_attain,
    "axioms": cmd_axioms,
    "james": cmd_james,
    "james-perturbed": cmd_james_perturbed,
    "simons": cmd_simons,
    "fatou": cmd_fatou,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON file")
    common.add_argument("--measure", help="risk measure name")
    common.add_argument("--position", help="position name (the dual variable for 'conjugate')")
    common.add_argument("--out", default="-", help="output path, '-' for stdout")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=DEFAULT_TOL,
                        help="base tolerance; per-check multipliers are listed in the report")
    common.add_argument("--format", choices=("json", "table"), default="json")
    common.add_argument("--trials", type=int, default=1000, help="random trials for axiom checks")
    common.add_argument("--polytope")
    common.add_argument("--function")
    common.add_argument("--sequence")
    common.add_argument("--functionals", help="comma-separated position names; random if omitted")
    common.add_argument("--count", type=int, default=100, help="number of random functionals")
    common.add_argument("--perturbation", choices=PERTURBATIONS, default="harmonic")

    parser = argparse.ArgumentParser(prog="crisk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"crisk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _table(result, prefix="") -> list[str]:
    lines = []
    for key, val in result.items():
        label = f"{prefix}{key}"
        if isinstance(val, dict):
            lines.extend(_table(val, label + "."))
        elif isinstance(val, list) and val and isinstance(val[0], dict):
            lines.append(f"{label:<40} [{len(val)} entries]")
        else:
            lines.append(f"{label:<40} {val}")
    return lines


def run(argv=None) -> tuple[int, dict]:
    args = build_parser().parse_args(argv)
    tols = tolerances(args.tol)
    started = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat()
    doc = {
        "command": {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "format")},
        "seed": args.seed,
        "tolerances": {"base": args.tol, "multipliers": TOL_MULTIPLIERS, "effective": tols},
    }
    try:
        sc = load_scenario(args.scenario)
        result, ok = COMMANDS[args.command](sc, args, tols)
        doc["status"] = "ok" if ok else "property_failure"
        doc["result"] = result
        code = EXIT_OK if ok else EXIT_PROPERTY
    except (ConvergenceError, InfeasibleError) as exc:
        doc["status"] = "solver_failure"
        doc["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code = EXIT_SOLVER
    except (CriskError, OSError) as exc:
        doc["status"] = "validation_error"
        doc["error"] = {"type": type(exc).__name__, "message": str(exc),
                        "field": getattr(exc, "field", None)}
        code = EXIT_VALIDATION
    # wall time is nondeterministic, so it lives with the timestamp
    doc["timestamp"] = {"utc": stamp, "wall_time_s": time.perf_counter() - started}
    return code, jsonable(doc)


def main(argv=None) -> int:
    code, doc = run(argv)
    fmt = "json"
    if argv is None:
        argv = sys.argv[1:]
    if "--format" in argv:
        fmt = argv[argv.index("--format") + 1]
    out = next((argv[i + 1] for i, a in enumerate(argv) if a == "--out"), "-")
    if fmt == "table":
        body = "\n".join(_table({k: v for k, v in doc.items() if k != "command"})) + "\n"
    else:
        body = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out == "-":
        sys.stdout.write(body)
    else:
        with open(out, "w") as fh:
            fh.write(body)
    if code == EXIT_VALIDATION and "error" in doc:
        print(f"crisk: {doc['error']['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
