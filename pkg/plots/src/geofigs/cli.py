"""geofigs render --kind K --in PATH --out PATH

Exit codes: 0 on success, 1 on schema mismatch or unknown kind.
"""

from __future__ import annotations

import argparse
import sys

from .render import RENDERERS, FigureJob, render
from .schemas import SchemaMismatch


def build_parser():
    parser = argparse.ArgumentParser(prog="geofigs")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render")
    p.add_argument("--kind", required=True, choices=sorted(RENDERERS))
    p.add_argument("--in", dest="input_path", required=True)
    p.add_argument("--out", dest="output_path", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    job = FigureJob(kind=args.kind, input_path=args.input_path, output_path=args.output_path)
    try:
        render(job)
    except SchemaMismatch as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
