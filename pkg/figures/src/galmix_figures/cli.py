"""Command line: galmix-render --in FILE --kind KIND --out FILE."""

from __future__ import annotations

import argparse
import sys

from .plots import render
from .series import KINDS, SchemaError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="galmix-render",
                                description="Render galmix series files")
    p.add_argument("--in", dest="infile", required=True,
                   help="delimited series file")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--out", required=True,
                   help="output image (.svg or .png)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        meta = render(args.infile, args.kind, args.out)
    except SchemaError as exc:
        print(f"galmix-render: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out} ({meta['annotation']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
