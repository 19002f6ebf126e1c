"""Command-line interface: ``oocalc prove|run|alias|difftest``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import oracle as O
from .driver import alias_query, prove, run
from .lang import LangError, parse_file

EXIT_OK, EXIT_FAILED, EXIT_RESIDUAL, EXIT_USAGE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oocalc", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    pr = sub.add_parser("prove", help="prove a routine's loop correct")
    pr.add_argument("file", type=Path)
    pr.add_argument("--routine", required=True)
    pr.add_argument("--trace", type=Path, help="write the proof trace here instead of stdout")

    rn = sub.add_parser("run", help="execute a routine on a heap with contract checking")
    rn.add_argument("file", type=Path)
    rn.add_argument("--routine", required=True)
    rn.add_argument("--heap", required=True, type=Path)

    al = sub.add_parser("alias", help="query the alias analysis at a label")
    al.add_argument("file", type=Path)
    al.add_argument("--routine", required=True)
    al.add_argument("--at", required=True, dest="label")
    al.add_argument("--query", required=True)

    dt = sub.add_parser("difftest", help="randomized differential testing of the rules")
    dt.add_argument("--rules", default="all", help="'all' or a comma-separated list of rule names")
    dt.add_argument("--seed", type=int, default=1)
    dt.add_argument("--cases", type=int, default=10_000)
    dt.add_argument("--max-objects", type=int, default=10)
    dt.add_argument("--report-dir", type=Path, help="write summary.csv and summary.png here")
    return p


def _prove(args) -> int:
    v = prove(parse_file(args.file), args.routine)
    text = v.trace.format()
    if args.trace:
        args.trace.write_text(text)
        print(f"VERDICT: {v.line}")
    else:
        sys.stdout.write(text)
    for ob in v.obligations:
        print(f"OBLIGATION: {ob}")
    return v.exit_code


def _run(args) -> int:
    unit = parse_file(args.file)
    h, env = O.read_heap(args.heap)
    rep = run(unit, args.routine, h, env)
    for viol in rep.violations:
        print(viol)
    print(O.format_heap(rep.heap, rep.env), end="")
    print("RESULT: " + ("all assertions hold" if rep.ok else f"{len(rep.violations)} violation(s)"))
    return EXIT_OK if rep.ok else EXIT_FAILED


def _alias(args) -> int:
    print(alias_query(parse_file(args.file), args.routine, args.label, args.query))
    return EXIT_OK


def _difftest(args) -> int:
    from .difftest import difftest

    rules = None if args.rules == "all" else [r.strip() for r in args.rules.split(",") if r.strip()]
    s = difftest(args.seed, args.cases, args.max_objects, rules)
    print(s.format())
    if args.report_dir:
        from .report import write_report

        csv_path, png_path = write_report(s, args.report_dir)
        print(f"wrote {csv_path} and {png_path}")
    return EXIT_OK if s.ok else EXIT_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"prove": _prove, "run": _run, "alias": _alias, "difftest": _difftest}[args.cmd]
    try:
        return handler(args)
    except (LangError, KeyError, ValueError, O.OracleError, OSError) as exc:
        print(f"oocalc: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
