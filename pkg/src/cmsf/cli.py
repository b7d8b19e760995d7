"""Command-line entry points.

Subcommands: ``run`` (pipeline over a bundle), ``eval`` (score predictions
against ground truth), ``render`` (overlay a mask on an image), and
``make-fixtures`` (generate the synthetic fixture tree). Exit codes: 0 on
success, 1 on runtime or data errors, 2 on usage errors. Every write lands
under the given --out directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import bundle_hash, load_bundle, load_dataset, load_gt_mask
from .errors import AlignmentError, CmsfError
from .evaluation import DEFAULT_BETA_SQ, evaluate_sequence, report_json, report_table
from .fixtures import make_fixtures
from .geometry import BinaryMask
from .pipelines import VARIANTS, PipelineConfig, run_sequence_traced

OVERLAY_COLOR = (255, 32, 32)
OVERLAY_ALPHA = 0.5


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return PipelineConfig.from_json_dict(data)


def _prepare_out(path) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()):
        raise CmsfError(f"output directory {out} exists and is not empty")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    try:
        config = _load_config(args.config)
        backend = load_bundle(args.bundle)
        index = load_dataset(args.dataset, args.split, require_gt=False)

        # Compute everything before touching --out so a failed run leaves no
        # partial output tree behind.
        video_runs = [
            (video, run_sequence_traced(video.frames, config, backend, args.variant))
            for video in index.videos
        ]

        out = _prepare_out(args.out)
        frame_entries = []
        for video, runs in video_runs:
            mask_dir = out / "masks" / video.video_id
            mask_dir.mkdir(parents=True, exist_ok=True)
            for run in runs:
                png_rel = f"masks/{video.video_id}/{run.t}.png"
                rle_rel = f"masks/{video.video_id}/{run.t}.rle.json"
                (out / png_rel).write_bytes(run.mask.to_png_bytes())
                (out / rle_rel).write_text(
                    json.dumps(run.mask.to_json_dict(), sort_keys=True) + "\n",
                    encoding="utf-8",
                )
                frame_entries.append(
                    {
                        "frame_id": run.frame_id,
                        "video_id": video.video_id,
                        "t": run.t,
                        "mask_png": png_rel,
                        "mask_rle": rle_rel,
                        "stage_counts": run.trace.counts,
                    }
                )
        manifest = {
            "variant": args.variant,
            "split": args.split,
            "bundle": str(args.bundle),
            "dataset": str(args.dataset),
            "bundle_hash": bundle_hash(args.bundle),
            "config": config.to_json_dict(),
            "frames": frame_entries,
        }
        (out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except (CmsfError, OSError, json.JSONDecodeError, ValueError) as err:
        return _fail(str(err))
    print(f"wrote {len(frame_entries)} masks under {args.out}")
    return 0


def _load_pred_mask(pred_root: Path, video_id: str, t: int) -> BinaryMask:
    base = pred_root / "masks" if (pred_root / "masks").is_dir() else pred_root
    rle_path = base / video_id / f"{t}.rle.json"
    png_path = base / video_id / f"{t}.png"
    if rle_path.is_file():
        return BinaryMask.from_json_dict(
            json.loads(rle_path.read_text(encoding="utf-8"))
        )
    if png_path.is_file():
        return BinaryMask.from_png_bytes(png_path.read_bytes())
    raise AlignmentError(f"no prediction for {video_id}/{t} under {base}")


def cmd_eval(args) -> int:
    try:
        index = load_dataset(args.dataset, args.split, require_gt=True)
        pred_root = Path(args.pred)
        variant = "predictions"
        run_manifest = pred_root / "manifest.json"
        if run_manifest.is_file():
            variant = json.loads(run_manifest.read_text(encoding="utf-8")).get(
                "variant", variant
            )

        preds, gts, frame_ids, problems = [], [], [], []
        for video in index.videos:
            for frame, gt_path in zip(video.frames, video.gt_paths):
                try:
                    preds.append(_load_pred_mask(pred_root, video.video_id, frame.t))
                    gts.append(load_gt_mask(gt_path))
                    frame_ids.append(frame.frame_id)
                except (CmsfError, OSError, ValueError) as err:
                    problems.append(f"{video.video_id}: {err}")
        if problems:
            for problem in problems:
                print(f"error: {problem}", file=sys.stderr)
            return 1

        result = evaluate_sequence(preds, gts, args.beta_sq, frame_ids)
        out = _prepare_out(args.out)
        results = {variant: {args.split: result}}
        (out / "report.json").write_text(
            json.dumps(report_json(results), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        table = report_table(results, splits=(args.split,))
        (out / "report.txt").write_text(table, encoding="utf-8")
    except (CmsfError, OSError, json.JSONDecodeError, ValueError) as err:
        return _fail(str(err))
    print(table, end="")
    print(f"m_iou={result.m_iou:.4f} f_score={result.f_score:.4f}")
    return 0


def _read_mask_arg(path: Path) -> BinaryMask:
    if path.suffix == ".json" or path.name.endswith(".rle.json"):
        return BinaryMask.from_json_dict(json.loads(path.read_text(encoding="utf-8")))
    return BinaryMask.from_png_bytes(path.read_bytes())


def cmd_render(args) -> int:
    try:
        image = np.asarray(Image.open(args.image).convert("RGB"))
        mask = _read_mask_arg(Path(args.mask))
        if (mask.height, mask.width) != image.shape[:2]:
            return _fail(
                f"mask is {mask.width}x{mask.height} but image is "
                f"{image.shape[1]}x{image.shape[0]}"
            )
        fg = mask.to_array()[:, :, None]
        tint = np.array(OVERLAY_COLOR, dtype=np.float64)
        blended = np.where(
            fg, image * (1.0 - OVERLAY_ALPHA) + tint * OVERLAY_ALPHA, image
        )
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.round(blended).astype(np.uint8)).save(out)
    except (CmsfError, OSError, ValueError) as err:
        return _fail(str(err))
    return 0


def cmd_make_fixtures(args) -> int:
    try:
        paths = make_fixtures(args.out, args.seed)
    except (CmsfError, OSError) as err:
        return _fail(str(err))
    print(f"dataset: {paths.dataset_dir}")
    print(f"bundle:  {paths.bundle_dir}")
    print(f"config:  {paths.config_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmsf",
        description="Training-free audio-visual segmentation over recorded model outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a pipeline variant over a bundle")
    run.add_argument("--bundle", required=True, help="interchange bundle directory")
    run.add_argument("--dataset", required=True, help="dataset root directory")
    run.add_argument("--split", required=True, help="dataset split, e.g. S4 or MS3")
    run.add_argument("--variant", required=True, choices=VARIANTS)
    run.add_argument("--config", help="JSON file with pipeline config overrides")
    run.add_argument("--out", required=True, help="output directory (must be empty)")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--pred", required=True, help="prediction directory (run output)")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--split", required=True)
    ev.add_argument("--beta-sq", type=float, default=DEFAULT_BETA_SQ)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)

    render = sub.add_parser("render", help="alpha-blend a mask over its frame")
    render.add_argument("--image", required=True)
    render.add_argument("--mask", required=True, help="mask PNG or RLE JSON")
    render.add_argument("--out", required=True)
    render.set_defaults(func=cmd_render)

    fixtures = sub.add_parser(
        "make-fixtures", help="generate the synthetic dataset and bundle"
    )
    fixtures.add_argument("--out", required=True)
    fixtures.add_argument("--seed", type=int, default=0)
    fixtures.set_defaults(func=cmd_make_fixtures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_call:
        return int(exit_call.code or 0)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
