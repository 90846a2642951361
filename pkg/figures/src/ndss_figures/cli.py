"""Command-line front end: one figure per invocation.

Exit codes: 0 ok, 2 schema mismatch or empty CSV, 4 IO error.
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, EmptyCsvError, FigureJob, SchemaMismatchError, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ndss-figures")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render one figure from a CSV")
    r.add_argument("--csv", required=True)
    r.add_argument("--kind", choices=list(KINDS), required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--log-x", action="store_true", default=None, dest="log_x")
    r.add_argument("--log-y", action="store_true", default=None, dest="log_y")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = FigureJob(csv_path=args.csv, kind=args.kind, out_path=args.out,
                    log_x=args.log_x, log_y=args.log_y)
    try:
        path = render(job)
    except (SchemaMismatchError, EmptyCsvError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
