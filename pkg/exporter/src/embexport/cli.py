"""Command line for the embedding exporter.

    embexport export --corpus x.tsv --encoder bert-base-uncased \
        --max-len 512 --out emb.bin
    embexport export-random --corpus x.tsv --d 768 --seed 7 --out emb.bin
"""

from __future__ import annotations

import argparse
import sys

from .exporter import (
    DEFAULT_ENCODER,
    DEFAULT_MAX_LEN,
    EncoderResolutionError,
    ExportError,
    export_embeddings,
    export_random,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embexport", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode a corpus with a pretrained encoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--encoder", default=DEFAULT_ENCODER)
    p.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--id-column", default="essay_id")
    p.add_argument("--text-column", default="essay")
    p.add_argument("--out", required=True)

    p = sub.add_parser("export-random", help="seeded random rows in the same format")
    p.add_argument("--corpus", required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--id-column", default="essay_id")
    p.add_argument("--text-column", default="essay")
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            info = export_embeddings(
                args.corpus,
                args.out,
                encoder_id=args.encoder,
                max_len=args.max_len,
                batch_size=args.batch_size,
                id_column=args.id_column,
                text_column=args.text_column,
            )
        else:
            info = export_random(
                args.corpus,
                args.out,
                d=args.d,
                seed=args.seed,
                id_column=args.id_column,
                text_column=args.text_column,
            )
    except EncoderResolutionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"{args.command}: {info['n']} essays x {info['d']} dims "
        f"({info['encoder_id']}) -> {args.out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
