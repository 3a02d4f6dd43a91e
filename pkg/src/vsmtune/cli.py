"""Command-line interface.

Subcommands: ``optimize``, ``analyze``, ``norms``, ``simulate`` and
``trace-export``.  Exit codes: 0 success, 2 infeasible/stalled
optimization, 3 input error.  All output is deterministic: identical
invocations produce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from .allocation import allocation_from_case
from .caseio import (
    BUILTIN_CASES,
    builtin_case_path,
    bundle_from_result,
    compute_metrics,
    export_bundle,
    load_case,
    trace_header,
    trace_row_values,
    write_spectrum_csv,
)
from .errors import VsmtuneError
from .grid import linearize
from .loop import run_multistep, run_uniform
from .modal import decompose
from .norms import norm_report
from .sim import step_response, write_trajectory_csv

EXIT_OK = 0
EXIT_STALLED = 2
EXIT_INPUT = 3


def _resolve_case(value: str) -> Path:
    if value in BUILTIN_CASES:
        return builtin_case_path(value)
    return Path(value)


def _add_case_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--case",
        required=True,
        help="case file path, or a builtin name: " + ", ".join(sorted(BUILTIN_CASES)),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vsmtune",
        description="Allocate virtual inertia and damping gains by iterative "
        "eigensensitivity optimization.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log INFO to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run the gain allocation and export results")
    _add_case_arg(p)
    p.add_argument("--method", choices=("uniform", "multistep"), default="uniform")
    p.add_argument("--no-freq-constraints", action="store_true",
                   help="drop the RoCoF/nadir limit rows")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("analyze", help="spectrum and metrics of the as-given allocation")
    _add_case_arg(p)
    p.add_argument("--out", help="optional output directory")

    p = sub.add_parser("norms", help="H2/H-infinity norms of the as-given allocation")
    _add_case_arg(p)
    p.add_argument("--tol", type=float, default=1e-6, help="H-infinity bisection tolerance")

    p = sub.add_parser("simulate", help="time-domain step-disturbance response")
    _add_case_arg(p)
    p.add_argument("--dP", dest="dp", type=float, required=True,
                   help="lost generation, MW")
    p.add_argument("--horizon", type=float, required=True, help="duration, s")
    p.add_argument("--dt", type=float, default=1e-3, help="integration step, s")
    p.add_argument("--out", required=True, help="trajectory CSV path")

    p = sub.add_parser("trace-export", help="run the optimization, streaming the trace")
    _add_case_arg(p)
    p.add_argument("--method", choices=("uniform", "multistep"), default="uniform")
    p.add_argument("--no-freq-constraints", action="store_true")
    p.add_argument("--out", required=True, help="trace CSV path")

    return parser


def _json_out(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_method(args, case, config, costs):
    alloc0 = allocation_from_case(case)
    runner = run_uniform if args.method == "uniform" else run_multistep
    return runner(case, alloc0, config, costs,
                  freq_constraints=not args.no_freq_constraints)


def _cmd_optimize(args) -> int:
    case, config, costs = load_case(_resolve_case(args.case))
    result = _run_method(args, case, config, costs)
    bundle = bundle_from_result(case, config, costs, result)
    export_bundle(bundle, args.out)
    _json_out(bundle.metrics)
    if not result.converged:
        print(f"optimization {result.status}: {result.reason}", file=sys.stderr)
        return EXIT_STALLED
    return EXIT_OK


def _cmd_analyze(args) -> int:
    case, config, costs = load_case(_resolve_case(args.case))
    alloc = allocation_from_case(case)
    metrics = compute_metrics(case, alloc, config)
    if metrics["zeta_min"] < config.zeta_floor:
        print(
            f"worst-case damping ratio {metrics['zeta_min']:.6g} is below "
            f"the floor {config.zeta_floor:.6g}",
            file=sys.stderr,
        )
    _json_out(metrics)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        model = linearize(case, alloc, config.disturbance_bus)
        write_spectrum_csv(out / "spectrum_asgiven.csv", decompose(model).lambdas)
        (out / "metrics.json").write_text(
            json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def _cmd_norms(args) -> int:
    case, config, _ = load_case(_resolve_case(args.case))
    alloc = allocation_from_case(case)
    model = linearize(case, alloc, config.disturbance_bus)
    report = norm_report(model, tol=args.tol)
    _json_out(
        {
            "h2": report.h2 if math.isfinite(report.h2) else None,
            "hinf": report.hinf if math.isfinite(report.hinf) else None,
            "hinf_bracket": [
                v if math.isfinite(v) else None for v in report.hinf_bracket
            ],
            "stable": report.stable,
        }
    )
    return EXIT_OK


def _cmd_simulate(args) -> int:
    case, config, _ = load_case(_resolve_case(args.case))
    alloc = allocation_from_case(case)
    model = linearize(case, alloc, config.disturbance_bus)
    # A generation loss of dP MW is a negative power injection.
    t, y = step_response(model, -args.dp / case.base_power, args.horizon, args.dt)
    freq_hz = y * case.f0
    names = [f"f[{u.uid}]_hz" for u in case.units]
    write_trajectory_csv(args.out, t, freq_hz, names)
    _json_out(
        {
            "min_deviation_hz": float(freq_hz.min()),
            "max_deviation_hz": float(freq_hz.max()),
            "samples": int(len(t)),
        }
    )
    return EXIT_OK


def _cmd_trace_export(args) -> int:
    case, config, costs = load_case(_resolve_case(args.case))
    alloc0 = allocation_from_case(case)
    runner = run_uniform if args.method == "uniform" else run_multistep
    with open(args.out, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header_written = False

        def sink(row):
            nonlocal header_written
            if not header_written:
                writer.writerow(trace_header(alloc0.controllable_ids))
                header_written = True
            writer.writerow(trace_row_values(row))

        result = runner(case, alloc0, config, costs, sink=sink,
                        freq_constraints=not args.no_freq_constraints)
    if not result.converged:
        print(f"optimization {result.status}: {result.reason}", file=sys.stderr)
        return EXIT_STALLED
    return EXIT_OK


_COMMANDS = {
    "optimize": _cmd_optimize,
    "analyze": _cmd_analyze,
    "norms": _cmd_norms,
    "simulate": _cmd_simulate,
    "trace-export": _cmd_trace_export,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (VsmtuneError, OSError, json.JSONDecodeError) as exc:
        if isinstance(exc, json.JSONDecodeError):
            print(f"case parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                  file=sys.stderr)
        else:
            print(str(exc), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
