"""Command line front end for the extractor."""

from __future__ import annotations

import argparse
import sys

from .errors import ExtractionError
from .extract import ExtractionConfig, extract


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embextract",
        description="Dump per-layer occurrence embeddings to .ceb shards.",
    )
    parser.add_argument("--model", required=True, help="checkpoint directory or hub id")
    parser.add_argument("--corpus", required=True, help="one pre-tokenized sentence per line")
    parser.add_argument("--vocab", required=True, help="one target word per line")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--max-per-word", type=int, default=200,
                        help="sentence cap per target word (default 200)")
    parser.add_argument("--layers", type=int, nargs="+", default=[0],
                        help="hidden-state indices to dump (default: 0)")
    parser.add_argument("--seed", type=int, default=0, help="sampling seed")
    parser.add_argument("--quiet", action="store_true", help="suppress the summary line")
    return parser


def run(argv: list[str]) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = ExtractionConfig(
            model=args.model,
            corpus=args.corpus,
            vocabulary=args.vocab,
            out_dir=args.out,
            max_per_word=args.max_per_word,
            layers=tuple(args.layers),
            seed=args.seed,
        )
        result = extract(cfg)
    except (ExtractionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        n_found = sum(1 for row in result.coverage if row.n_found)
        print(
            f"wrote {len(result.shard_paths)} shard(s), {result.n_records} record(s), "
            f"{n_found}/{len(result.coverage)} word(s) found, "
            f"{result.n_truncated} truncated sentence(s)"
        )
    return 0


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    raise SystemExit(main())
