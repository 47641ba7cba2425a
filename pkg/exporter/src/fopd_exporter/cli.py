"""Command line: fopd-export INPUT.jsonl --out DATA.fopd [--encoder NAME]."""

from __future__ import annotations

import argparse
import logging
import sys

from .encoder import DEFAULT_ENCODER
from .errors import ExporterError
from .export import export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fopd-export", description=__doc__)
    parser.add_argument("input", help="line-delimited JSON opinion records")
    parser.add_argument("--out", required=True, help="output FOPD path")
    parser.add_argument("--encoder", default=DEFAULT_ENCODER,
                        help=f"encoder name or local path (default: {DEFAULT_ENCODER})")
    parser.add_argument("--max-tokens", type=int, default=128,
                        help="deterministic truncation length (default: 128)")
    parser.add_argument("--batch-size", type=int, default=8,
                        help="encoder batch size; affects speed only (default: 8)")
    parser.add_argument("--device", default="cpu", help="torch device (default: cpu)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress logging")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        count = export_embeddings(
            args.input, args.out,
            encoder=args.encoder, max_tokens=args.max_tokens,
            batch_size=args.batch_size, device=args.device,
        )
    except (ExporterError, OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    print(f"exported {count} companies to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
