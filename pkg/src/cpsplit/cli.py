"""Command-line front end for drift runs, convergence and scaling studies.

Exit codes: 0 success, 1 invalid arguments or configuration, 2 numerical
failure (partial output plus a failure marker is written when possible).
CSV bodies are deterministic: fixed evaluation order and 17-significant-
digit scientific notation, which round-trips binary64 exactly.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    DegenerateFieldError,
    FieldDomainError,
    FixedPointDivergedError,
    InvalidParameterError,
    MaxStepsExceededError,
    NumericalBlowupError,
    StiffnessSuspectedError,
    UnknownProblemError,
)
from .fields import PROBLEM_NAMES, ProblemSpec, builtin_problem, load_problem
from .harness import (
    ExperimentPlan,
    conservation_preconditions,
    default_t_end,
    drift_scaling_table,
    run_convergence_study,
    run_drift_experiment,
    run_drift_scaling,
    theorem_coverage,
)
from .integrators import METHODS, IntegratorConfig, resolve_quad_nodes

__all__ = ["main"]

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

_CSV_COLUMNS = ("energy", "modified_energy", "momentum", "magnetic_moment")
_CSV_HEADER = "t,e_H,e_Hh,e_M,e_I"

_INVALID_ERRORS = (InvalidParameterError, UnknownProblemError, ConfigError)
_NUMERICAL_ERRORS = (
    FixedPointDivergedError,
    NumericalBlowupError,
    FieldDomainError,
    DegenerateFieldError,
    MaxStepsExceededError,
    StiffnessSuspectedError,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the contract reserves 2
    # for numerical failures, so remap argument errors to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _add_problem_flags(sub):
    sub.add_argument("--problem", help="built-in problem name")
    sub.add_argument("--problem-file", help="TOML problem description")
    sub.add_argument(
        "--eps", action="append", type=float,
        help="field scaling parameter; repeatable (default 1)",
    )
    sub.add_argument("--out-dir", default=".", help="output directory")


def _add_stepper_flags(sub):
    sub.add_argument(
        "--method", action="append", required=True,
        help=f"integration method, one of {', '.join(METHODS)}; repeatable",
    )
    sub.add_argument("--stride", type=int, default=10, help="sampling stride")
    sub.add_argument("--quad-nodes", type=int, default=None,
                     help="Gauss-Legendre node count for the implicit method")
    sub.add_argument("--fp-tol", type=float, default=1e-16,
                     help="fixed-point stop tolerance")
    sub.add_argument("--fp-max-iter", type=int, default=50,
                     help="fixed-point iteration cap")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpsplit",
                     description="splitting integrators for charged particles")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="long-time drift run", add_help=True)
    _add_problem_flags(run)
    _add_stepper_flags(run)
    run.add_argument("--h", type=float, default=0.01, help="step size")
    run.add_argument("--t-end", type=float, default=None,
                     help="horizon (default 1000, or 10000 under CPD_FULL_HORIZON)")

    conv = subs.add_parser("converge", help="global-error convergence study")
    _add_problem_flags(conv)
    conv.add_argument(
        "--method", action="append",
        help="method to study; repeatable (default: all)",
    )
    conv.add_argument("--k", default="6..12",
                      help="step-size exponents, e.g. 6..12 for h = 2^-k")
    conv.add_argument("--t-end", type=float, default=1.0, help="horizon")

    scal = subs.add_parser("scaling", help="drift-scaling exponent study")
    _add_problem_flags(scal)
    scal.add_argument(
        "--method", action="append", required=True, help="method; repeatable"
    )
    scal.add_argument(
        "--h", action="append", type=float,
        help="step size; repeat for the fit grid (default 0.04 0.02 0.01)",
    )
    scal.add_argument("--t-end", type=float, default=None, help="horizon")
    scal.add_argument(
        "--channel", action="append", choices=("H", "M", "I"),
        help="invariant channel; repeatable (default: all three)",
    )
    scal.add_argument("--stride", type=int, default=10, help="sampling stride")
    scal.add_argument("--quad-nodes", type=int, default=None,
                      help="Gauss-Legendre node count for the implicit method")

    subs.add_parser("list", help="list problems, methods, theorem coverage")
    return parser


def _resolve_problem(args) -> ProblemSpec:
    if args.problem and args.problem_file:
        raise InvalidParameterError("give either --problem or --problem-file, not both")
    if args.problem:
        return builtin_problem(args.problem)
    if args.problem_file:
        return load_problem(args.problem_file)
    raise InvalidParameterError("one of --problem or --problem-file is required")


def _parse_k_range(spec: str):
    match = re.fullmatch(r"(\d+)\.\.(\d+)", spec.strip())
    if match:
        lo, hi = int(match.group(1)), int(match.group(2))
        if hi < lo:
            raise InvalidParameterError(f"empty k range {spec!r}")
        return range(lo, hi + 1)
    if spec.strip().isdigit():
        k = int(spec)
        return range(k, k + 1)
    raise InvalidParameterError(f"cannot parse k range {spec!r}; expected e.g. 6..12")


def _cell_stem(problem_name: str, method: str, epsilon: float) -> str:
    return f"{problem_name}_{method}_eps{epsilon:g}"


def _format_row(values) -> str:
    return ",".join("%.16e" % v for v in values)


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        fh.write("\n".join(_format_row(row) for row in rows))
        if len(rows):
            fh.write("\n")


def _write_json(path: Path, payload) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_run(args) -> int:
    problem = _resolve_problem(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t_end = args.t_end if args.t_end is not None else default_t_end()
    plan = ExperimentPlan(
        problem=problem,
        methods=tuple(args.method),
        h=args.h,
        t_end=t_end,
        sample_stride=args.stride,
        epsilons=tuple(args.eps) if args.eps else (1.0,),
        quad_nodes=args.quad_nodes,
        fp_tol=args.fp_tol,
        fp_max_iter=args.fp_max_iter,
    )
    started = time.perf_counter()
    result = run_drift_experiment(plan)

    cells_meta = []
    any_failed = False
    for cell in result.cells:
        stem = _cell_stem(problem.name, cell.method, cell.epsilon)
        csv_name = stem + ".csv"
        if cell.drift is not None:
            d = cell.drift
            rows = np.column_stack(
                [d.times] + [getattr(d, col) for col in _CSV_COLUMNS]
            )
        else:
            rows = np.empty((0, 5))
        _write_csv(out_dir / csv_name, _CSV_HEADER, rows)
        if cell.failed:
            any_failed = True
            (out_dir / (stem + ".failed.txt")).write_text(cell.error + "\n")
        cells_meta.append(
            {
                "method": cell.method,
                "epsilon": cell.epsilon,
                "csv": csv_name,
                "failed": cell.failed,
                "error": cell.error,
                "max_drift": cell.max_drift,
                "step_count": cell.step_count,
                "fp_total_iterations": cell.fp_total_iterations,
                "fp_max_iterations": cell.fp_max_iterations,
                "wall_time": cell.duration,
            }
        )

    cfg = IntegratorConfig(method=plan.methods[0], h=plan.h,
                           quad_nodes=plan.quad_nodes)
    _write_json(
        out_dir / "summary.json",
        {
            "version": __version__,
            "problem": problem.name,
            "h": plan.h,
            "t_end": plan.t_end,
            "sample_stride": plan.sample_stride,
            "quad_nodes": resolve_quad_nodes(cfg, problem.field),
            "methods": list(plan.methods),
            "epsilons": list(plan.epsilons),
            "wall_time": time.perf_counter() - started,
            "cells": cells_meta,
        },
    )
    return EXIT_NUMERICAL if any_failed else EXIT_OK


def cmd_converge(args) -> int:
    problem = _resolve_problem(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = tuple(args.method) if args.method else METHODS
    ks = _parse_k_range(args.k)
    epsilons = tuple(args.eps) if args.eps else (1.0,)

    blocks = {}
    for eps in epsilons:
        study = run_convergence_study(
            problem.with_epsilon(eps), methods, ks, args.t_end
        )
        rows = np.column_stack(
            [study.ks, study.hs] + [study.errors[m] for m in study.slopes]
        )
        header = "k,h," + ",".join(f"err_{m}" for m in study.slopes)
        _write_csv(
            out_dir / f"{problem.name}_converge_eps{eps:g}.csv", header, rows
        )
        blocks[f"{eps:g}"] = {
            "slopes": study.slopes,
            "errors": {m: list(e) for m, e in study.errors.items()},
        }

    _write_json(
        out_dir / "converge.json",
        {
            "version": __version__,
            "problem": problem.name,
            "t_end": args.t_end,
            "ks": list(ks),
            "epsilons": blocks,
        },
    )
    return EXIT_OK


def cmd_scaling(args) -> int:
    problem = _resolve_problem(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    epsilons = tuple(args.eps) if args.eps else (1.0,)
    if len(epsilons) != 1:
        raise InvalidParameterError("scaling takes a single --eps")
    problem = problem.with_epsilon(epsilons[0])
    hs = tuple(args.h) if args.h else (0.04, 0.02, 0.01)
    t_end = args.t_end if args.t_end is not None else default_t_end()
    channels = tuple(args.channel) if args.channel else ("H", "M", "I")

    report = conservation_preconditions(problem)
    results = []
    for method in args.method:
        # one trajectory per h serves every requested channel
        table = drift_scaling_table(
            problem, method, hs, t_end,
            sample_stride=args.stride, quad_nodes=args.quad_nodes,
        )
        for channel in channels:
            scaling = run_drift_scaling(
                problem, method, hs, t_end, channel,
                table=table, sample_stride=args.stride,
                quad_nodes=args.quad_nodes,
            )
            results.append(
                {
                    "method": scaling.method,
                    "channel": scaling.channel,
                    "hs": list(scaling.hs),
                    "max_drifts": list(scaling.max_drifts),
                    "exponent": scaling.exponent,
                    "covered": channel in report.covered_channels,
                }
            )
    _write_json(
        out_dir / "scaling.json",
        {
            "version": __version__,
            "problem": problem.name,
            "epsilon": problem.epsilon,
            "t_end": t_end,
            "preconditions": {
                "checks": report.checks,
                "residuals": report.residuals,
                "covered_channels": list(report.covered_channels),
            },
            "results": results,
        },
    )
    return EXIT_OK


def cmd_list(args) -> int:
    print("methods: " + " ".join(METHODS))
    print("problems (theorem-covered drift channels):")
    coverage = theorem_coverage()
    for name in PROBLEM_NAMES:
        print(f"  {name}  {' '.join(coverage[name])}")
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "converge": cmd_converge,
    "scaling": cmd_scaling,
    "list": cmd_list,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _INVALID_ERRORS as exc:
        print(f"cpsplit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except _NUMERICAL_ERRORS as exc:
        print(f"cpsplit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
