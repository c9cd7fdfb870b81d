"""Command-line front end.

Exit codes: 0 success, 1 demo self-check failure, 2 invalid input, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .classical_cmp import ClassicalScenario, classical_local_compatibility, classical_robustness
from .cmp_sdp import build_primal, robustness
from .conic import SolverOptions, export_sdpa
from .demos import DEMOS, run_demo
from .errors import ChoiMargError, LocallyIncompatible, NoAdvantagePossible, NotWellDefined, SolverError, \
    ValidationError
from .marginals import MarginalScenario
from .witness_tasks import (build_discrimination_task, channel_form_witness, compatible_success_max,
                            success_probability)

EXIT_OK, EXIT_DEMO, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3
SIG_DIGITS = 12
COMPAT_TOL = 1e-5


def _round(obj):
    """Floats to 12 significant digits; numpy scalars and arrays to plain JSON."""
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        if not math.isfinite(val):
            return str(val)
        val = float(f"{val:.{SIG_DIGITS}g}")
        return 0.0 if val == 0 else val
    return obj


def _text(obj, indent=0) -> str:
    pad = "  " * indent
    lines = []
    for key, val in obj.items():
        if isinstance(val, dict):
            lines.append(f"{pad}{key}:")
            lines.append(_text(val, indent + 1))
        elif isinstance(val, list) and val and isinstance(val[0], (dict, list)):
            lines.append(f"{pad}{key}: [{len(val)} entries]")
        else:
            lines.append(f"{pad}{key}: {val}")
    return "\n".join(lines)


def _emit(result: dict, args) -> None:
    result = _round(result)
    if args.format == "json":
        out = json.dumps(result, indent=2, sort_keys=True) + "\n"
    else:
        out = _text(result) + "\n"
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc


def _load_scenario(path) -> MarginalScenario:
    data = _load_json(path)
    if isinstance(data, dict) and data.get("kind") == "classical":
        return ClassicalScenario.from_json(data).to_quantum()
    if not isinstance(data, dict):
        raise ValidationError("scenario JSON must be an object")
    return MarginalScenario.from_json(data)


def _options(args) -> SolverOptions:
    return SolverOptions(tol_feas=args.tol_feas, tol_gap=args.tol_gap, max_iter=args.max_iter)


def cmd_solve(args):
    sc = _load_scenario(args.scenario)
    rep = robustness(sc, _options(args))
    sol = rep.solution
    result = {
        "command": "solve",
        "R": rep.R,
        "verdict": "compatible" if rep.is_compatible(COMPAT_TOL) else "incompatible",
        "primal_objective": sol.primal_objective,
        "dual_objective": sol.dual_objective,
        "primal_dual_gap": rep.primal_dual_gap,
        "iterations": sol.iterations,
        "status": sol.status,
    }
    if args.full:
        result["report"] = rep.to_json()
    return result


def cmd_witness(args):
    sc = _load_scenario(args.scenario)
    wit = channel_form_witness(sc, robustness(sc, _options(args)), _options(args))
    return {"command": "witness", **wit.to_json()}


def cmd_discriminate(args):
    sc = _load_scenario(args.scenario)
    opts = _options(args)
    try:
        task = build_discrimination_task(sc, eps=args.eps, opts=opts)
    except NoAdvantagePossible as exc:
        return {"command": "discriminate", "advantage": False, "reason": str(exc)}
    p_e = success_probability(task, sc)
    p_c = compatible_success_max(task, sc, opts)
    return {
        "command": "discriminate",
        "advantage": p_e > p_c,
        "success_probability": p_e,
        "compatible_max": p_c,
        "gap": p_e - p_c,
        "strictly_positive": task.strictly_positive,
        "task": task.to_json(),
    }


def cmd_classical(args):
    data = _load_json(args.scenario)
    if not isinstance(data, dict):
        raise ValidationError("scenario JSON must be an object")
    sc = ClassicalScenario.from_json(data)
    local = classical_local_compatibility(sc)
    r = classical_robustness(sc, _options(args))
    return {
        "command": "classical",
        "robustness": r,
        "pairwise_compatible": local.compatible,
        "verdict": "compatible" if r >= 1 - COMPAT_TOL else "incompatible",
    }


def cmd_export_sdpa(args):
    sc = _load_scenario(args.scenario)
    prog = build_primal(sc)
    export_sdpa(prog, args.target)
    return {"command": "export-sdpa", "path": str(args.target), "constraints": prog.m,
            "blocks": [[b.name, b.size, b.kind] for b in prog.blocks]}


def cmd_demo(args):
    ok, res = run_demo(args.name, _options(args))
    return {"command": "demo", "demo": args.name, "passed": ok, **res}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="choimarg", description="Quantum channel marginal problems.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-gap", type=float, default=1e-8, help="relative duality gap target")
    common.add_argument("--tol-feas", type=float, default=1e-8, help="relative infeasibility target")
    common.add_argument("--max-iter", type=int, default=200, help="interior-point iteration cap")
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("--out", help="write the report to this file instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="incompatibility robustness of a scenario")
    p.add_argument("scenario")
    p.add_argument("--full", action="store_true", help="include global Choi, noise and witness")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("witness", parents=[common], help="channel-form incompatibility witness")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("discriminate", parents=[common], help="discrimination task with an advantage")
    p.add_argument("scenario")
    p.add_argument("--eps", type=float, default=None, help="weight of the padding state")
    p.set_defaults(func=cmd_discriminate)

    p = sub.add_parser("classical", parents=[common], help="robustness of a stochastic-matrix scenario")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_classical)

    p = sub.add_parser("export-sdpa", parents=[common], help="write the robustness program as SDPA")
    p.add_argument("scenario")
    p.add_argument("target")
    p.set_defaults(func=cmd_export_sdpa)

    p = sub.add_parser("demo", parents=[common], help="reproduce a named example")
    p.add_argument("name", choices=sorted(DEMOS))
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
    except (ValidationError, NotWellDefined, LocallyIncompatible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ChoiMargError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _emit(result, args)
    if args.command == "demo" and not result["passed"]:
        print(f"demo {args.name!r} did not reproduce its expected outcome", file=sys.stderr)
        return EXIT_DEMO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
