"""Command-line runner: load a scenario file, simulate, and emit artifacts.

Exit codes are part of the interface: 0 for a clean completed run, 1 when
the run completed but a safety monitor tripped, 2 for usage or scenario
validation problems, 3 when the integrator hit non-finite numbers. Errors
print one machine-readable line on stderr: `rcbfsim: <category>: <detail>`.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

from .engine import (
    MODE_CENTRALIZED,
    MODE_DISTRIBUTED,
    EngineError,
    MonitorReport,
    NumericalAbort,
    run,
    safety_violated,
)
from .scenario import Scenario, ScenarioError, load_bundled, load_scenario
from .trace import record_to_row, trace_columns, write_trace

EXIT_CLEAN = 0
EXIT_SAFETY_VIOLATION = 1
EXIT_USAGE = 2
EXIT_NUMERICAL_ABORT = 3

_MODE_FLAGS = {
    "distributed": MODE_DISTRIBUTED,
    "centralized-baseline": MODE_CENTRALIZED,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcbfsim",
        description=(
            "Simulate a multi-agent scenario under distributed safety "
            "filtering and write the step trace and summary report."
        ),
    )
    parser.add_argument(
        "scenario",
        help="path to a scenario file, or the bare name of a bundled scenario",
    )
    parser.add_argument("--trace", metavar="PATH", help="write the CSV step trace here")
    parser.add_argument(
        "--report", metavar="PATH", help="write the summary report here as well"
    )
    parser.add_argument(
        "--dt", type=float, default=None, help="override the scenario time step"
    )
    parser.add_argument(
        "--horizon", type=float, default=None, help="override the scenario horizon"
    )
    parser.add_argument(
        "--mode",
        choices=sorted(_MODE_FLAGS),
        default="distributed",
        help="distributed per-agent filters or the centralized joint baseline",
    )
    parser.add_argument(
        "--backend",
        choices=("auto", "py", "cy"),
        default=None,
        help="integration kernel implementation (default: RCBFSIM_BACKEND or auto)",
    )
    return parser


def _format_goal_time(value: Optional[float]) -> str:
    return "not reached" if value is None else "%.2f" % value


def format_report(scenario: Scenario, mode: str, steps: int, report: MonitorReport) -> str:
    """Summary as one `key: value` per line, agent-indexed values 1-based."""
    lines = [
        f"scenario: {scenario.name}",
        f"mode: {mode}",
        f"steps: {steps}",
        "min_h_true: " + " ".join("%.6g" % v for v in report.min_h_true),
        "min_h_hat: " + " ".join("%.6g" % v for v in report.min_h_hat),
        f"funnel_violations: {report.funnel_violations}",
        f"relaxations: {report.relaxations}",
        "min_separation: %.6g" % report.min_separation,
        "goal_times: "
        + "; ".join(
            f"agent {k + 1}: {_format_goal_time(t)}"
            for k, t in enumerate(report.goal_times)
            if scenario.agents[k].goal is not None
        ),
        f"safety_violation: {'yes' if safety_violated(report) else 'no'}",
    ]
    return "\n".join(lines) + "\n"


def _fail(category: str, detail: str, code: int) -> int:
    print(f"rcbfsim: {category}: {detail}", file=sys.stderr)
    return code


def _load(arg: str) -> Scenario:
    """Treat the argument as a path; a bare name (no separator, no suffix)
    that names no file falls back to the scenarios bundled in the package."""
    if os.path.exists(arg) or os.sep in arg or os.path.splitext(arg)[1]:
        return load_scenario(arg)
    try:
        return load_bundled(arg)
    except ScenarioError:
        raise ScenarioError(
            f"scenario file not found: {arg} (and no bundled scenario has that name)"
        ) from None


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    try:
        scenario = _load(args.scenario)
    except OSError as exc:
        return _fail("usage", f"cannot read scenario: {exc}", EXIT_USAGE)
    except ScenarioError as exc:
        return _fail("validation", str(exc), EXIT_USAGE)

    mode = _MODE_FLAGS[args.mode]
    try:
        records, report = run(
            scenario,
            mode=mode,
            dt=args.dt,
            horizon=args.horizon,
            backend_name=args.backend,
        )
    except NumericalAbort as exc:
        if exc.last_record is not None:
            row = record_to_row(exc.last_record)
            cols = trace_columns(scenario.n_total, scenario.n_controllable)
            dump = " ".join(f"{c}={v}" for c, v in zip(cols, row))
            print(f"rcbfsim: last-step: {dump}", file=sys.stderr)
        return _fail("numerical-abort", str(exc), EXIT_NUMERICAL_ABORT)
    except (EngineError, ScenarioError, ValueError) as exc:
        return _fail("validation", str(exc), EXIT_USAGE)

    if args.trace:
        try:
            write_trace(
                records,
                args.trace,
                n_total=scenario.n_total,
                n_controllable=scenario.n_controllable,
            )
        except OSError as exc:
            return _fail("usage", f"cannot write trace: {exc}", EXIT_USAGE)

    text = format_report(scenario, args.mode, len(records), report)
    if args.report:
        try:
            with open(args.report, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            return _fail("usage", f"cannot write report: {exc}", EXIT_USAGE)
    sys.stdout.write(text)

    if safety_violated(report):
        return _fail(
            "safety-violation",
            "a barrier or funnel monitor tripped; see the report",
            EXIT_SAFETY_VIOLATION,
        )
    return EXIT_CLEAN


if __name__ == "__main__":
    raise SystemExit(main())
