"""Command-line driver: ``cmsf-export``."""

from __future__ import annotations

import argparse
import sys

from .export import ALL_CAPABILITIES, ExportError, ExportJob, run_export
from .media import MediaError
from .models import available_model_sets


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmsf-export",
        description="Run foundation models over a dataset and emit an interchange bundle.",
    )
    parser.add_argument("--dataset", required=True, help="dataset root directory")
    parser.add_argument("--split", required=True, help="dataset split, e.g. S4 or MS3")
    parser.add_argument("--out", required=True, help="bundle output directory")
    parser.add_argument(
        "--models",
        default="analytic",
        choices=available_model_sets(),
        help="which registered model set to run",
    )
    parser.add_argument(
        "--capabilities",
        default=",".join(ALL_CAPABILITIES),
        help="comma-separated subset of: " + ", ".join(ALL_CAPABILITIES),
    )
    parser.add_argument("--grid-size", type=int, default=16)
    parser.add_argument("--top-k-phrases", type=int, default=8)
    parser.add_argument("--embedding-dim", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument(
        "--dry-run",
        action="store_true",
        help="validate the dataset layout without running any model",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_call:
        return int(exit_call.code or 0)
    try:
        job = ExportJob(
            dataset_root=args.dataset,
            split=args.split,
            out_dir=args.out,
            capabilities=tuple(c for c in args.capabilities.split(",") if c),
            model_set=args.models,
            grid_size=args.grid_size,
            top_k_phrases=args.top_k_phrases,
            embedding_dim=args.embedding_dim,
            device=args.device,
            dry_run=args.dry_run,
        )
        report = run_export(job)
    except (ExportError, MediaError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    if args.dry_run:
        print(f"layout ok: {report.frames_exported} frames ready to export")
        return 0
    print(f"exported {report.frames_exported} frames to {report.bundle_dir}")
    if report.errors:
        print(f"{len(report.errors)} frame(s) failed; bundle marked incomplete")
        return 1
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
