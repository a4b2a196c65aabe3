"""`embed-export`: the export command.

embed-export --manifest M --encoder E --pooling P --out F --batch-size B
"""

import argparse
import sys
from pathlib import Path

from .exporter import POOLINGS, ExportError, ExportJob, SetupError, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Embed every example of a dataset manifest with a pretrained "
        "encoder and write a WSEB embedding file plus JSON sidecar.",
    )
    parser.add_argument("--manifest", required=True, help="dataset manifest (JSONL)")
    parser.add_argument("--encoder", required=True, help="model name or local path")
    parser.add_argument("--pooling", choices=list(POOLINGS), default="mean_tokens")
    parser.add_argument("--out", required=True, help="WSEB output path")
    parser.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            manifest_path=Path(args.manifest),
            encoder_name=args.encoder,
            out_path=Path(args.out),
            pooling=args.pooling,
            batch_size=args.batch_size,
        )
        path = export(job)
    except SetupError as err:
        print(f"setup error: {err}", file=sys.stderr)
        return 1
    except ExportError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
