"""CLI: export sentence embeddings to an SNLS-EMB v1 table, or verify one."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, POOLINGS, export_table, verify_table


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snls-export",
                                     description="sentence embedding table exporter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="embed a sentence list into a table file")
    p.add_argument("--model", required=True, help="hub model name or local model directory")
    p.add_argument("--sentences", required=True, help="input file, one sentence per line")
    p.add_argument("--out", required=True)
    p.add_argument("--pooling", choices=POOLINGS, default="cls_token")
    p.add_argument("--batch-size", type=int, default=16)

    p = sub.add_parser("verify", help="validate a table file")
    p.add_argument("path")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "export":
        try:
            job = ExportJob(model_name=args.model, sentences_file=args.sentences,
                            output_file=args.out, pooling=args.pooling,
                            batch_size=args.batch_size)
            summary = export_table(job)
        except (ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"wrote {summary['output_file']}: {summary['sentences']} sentences, "
              f"dim {summary['dim']}, pooling {summary['pooling']}")
        return 0
    report = verify_table(args.path)
    if report.ok:
        print(f"ok: {report.count} entries, dim {report.dim}")
        return 0
    print(f"invalid: {report.errors[0]}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
