"""Command-line front end.

Exit codes (``run`` and ``check``)::

    0  converged and every check passed
    3  validity violated
    4  no convergence within the round budget
    5  configuration error (bad file, unknown adversary, invalid values)
    6  run aborted (trimming emptied V, or the adversary broke the fault model)
    7  a lemma checker reported a violation
    8  I/O failure while writing artifacts

``sweep`` exits 0 once every cell is recorded, whatever the cell verdicts.
``accept`` exits 0 when every selected criterion passes and 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from .config import ConfigError, load_config
from .harness import RunResult, ScenarioError, run

EXIT_OK = 0
EXIT_INVALID = 3
EXIT_NON_CONVERGED = 4
EXIT_CONFIG = 5
EXIT_FAILED = 6
EXIT_LEMMA = 7
EXIT_IO = 8

VERDICT_EXIT = {
    "ok": EXIT_OK,
    "invalid": EXIT_INVALID,
    "failed": EXIT_FAILED,
    "lemma_violation": EXIT_LEMMA,
    "non_converged": EXIT_NON_CONVERGED,
}


def exit_code(result: RunResult) -> int:
    return VERDICT_EXIT[result.verdict]


def _default_out(config) -> Path:
    label = config.name or config.adversary
    return Path("runs") / f"{label}-seed{config.seed}"


def cmd_run(args) -> int:
    from .traceio import write_phases_csv, write_trace

    overrides = {"seed": args.seed}
    if args.allow_below_threshold:
        overrides["allow_below_threshold"] = True
    if args.adversary:
        overrides["adversary"] = args.adversary
    try:
        config = load_config(args.scenario, **overrides)
        result = run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    out = Path(args.out) if args.out else Path(config.out) if config.out else _default_out(config)
    try:
        write_trace(result.trace, out / "trace.jsonl")
        write_phases_csv(result.trace, out / "phases.csv")
    except OSError as exc:
        print(f"cannot write artifacts to {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    phases = result.trace.phases
    print(f"scenario {config.name or args.scenario}: n={config.n} f={config.f} adversary={config.adversary} seed={config.seed}")
    print(f"phases run: {len(phases)}, converged at: {result.convergence_phase}")
    if result.failure:
        print(f"failure: {result.failure}")
    for report in result.reports.values():
        print(f"  {report.summary()}")
    print(f"verdict: {result.verdict}")
    print(f"artifacts: {out}")
    return exit_code(result)


def cmd_check(args) -> int:
    from .checks import run_all_checks
    from .traceio import read_trace

    try:
        trace = read_trace(args.trace)
    except OSError as exc:
        print(f"cannot read {args.trace}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"malformed trace: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    reports = run_all_checks(trace)
    for report in reports.values():
        print(report.summary())
        for line in report.violations[: args.max_violations]:
            print(f"  {line}")
    if not reports["validity"]:
        return EXIT_INVALID
    if not all(reports.values()):
        return EXIT_LEMMA
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sweep import ROW_COLUMNS, load_grid, run_grid
    from .traceio import write_rows_csv

    try:
        grid = load_grid(args.grid)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = run_grid(grid, workers=args.workers)
    try:
        text = write_rows_csv(rows, ROW_COLUMNS, args.out)
    except OSError as exc:
        print(f"cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.out is None:
        sys.stdout.write(text)
    else:
        print(f"{len(rows)} cells written to {args.out}")
    return EXIT_OK


def cmd_accept(args) -> int:
    from .acceptance import CRITERIA, run_criteria

    numbers = args.criterion or sorted(CRITERIA)
    results = run_criteria(numbers, runs=args.runs)
    for result in results:
        print(result.line(), flush=True)
        if args.verbose:
            for line in result.failures:
                print(f"    {line}")
    if args.json:
        payload = [
            {"criterion": r.number, "title": r.title, "passed": r.passed, "detail": r.detail, "failures": r.failures}
            for r in results
        ]
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobile-consensus", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write its trace")
    p.add_argument("scenario", help="scenario JSON file or bundled name (canonical, theorem2, minimal_f1, fixedpoint)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory for trace.jsonl and phases.csv")
    p.add_argument("--allow-below-threshold", action="store_true")
    p.add_argument("--adversary", default=None, help="override the scenario's adversary")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter grid and emit one CSV row per cell")
    p.add_argument("grid")
    p.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="re-run every lemma checker on a stored trace")
    p.add_argument("trace")
    p.add_argument("--max-violations", type=int, default=5)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("accept", help="run the acceptance criteria")
    p.add_argument("--criterion", type=int, action="append", choices=range(1, 9))
    p.add_argument("--runs", type=int, default=1000, help="randomized runs per configuration")
    p.add_argument("--json", default=None, help="also write results as JSON")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_accept)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)
