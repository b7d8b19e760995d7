"""Mask-sequence evaluation: mean IoU, F-score, and report rendering.

Both metrics average per frame (never pooled over pixels). Silent frames
get explicit conventions so no frame ever contributes NaN: an empty
prediction against empty ground truth is a perfect frame; a one-sided empty
gives precision or recall 1 by convention and F = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import AlignmentError, ShapeMismatchError
from .geometry import BinaryMask, mask_iou

__all__ = [
    "DEFAULT_BETA_SQ",
    "FrameMetrics",
    "EvalResult",
    "frame_fscore",
    "evaluate_sequence",
    "report_table",
    "report_json",
    "report_from_json",
]

# Weight on precision in the F-measure, the convention of the benchmark
# this engine evaluates against.
DEFAULT_BETA_SQ = 0.3


@dataclass(frozen=True)
class FrameMetrics:
    frame_id: str
    iou: float
    precision: float
    recall: float
    f: float


@dataclass(frozen=True)
class EvalResult:
    """Sequence-level metrics plus the per-frame breakdown behind them.

    per_frame may be empty for display-only results (e.g. quoting published
    numbers); when present, the aggregate means must match it.
    """

    m_iou: float
    f_score: float
    beta_sq: float
    per_frame: tuple[FrameMetrics, ...] = ()

    def __post_init__(self):
        for name, value in (("m_iou", self.m_iou), ("f_score", self.f_score)):
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {value!r}")
        for metrics in self.per_frame:
            for name in ("iou", "precision", "recall", "f"):
                value = getattr(metrics, name)
                if not (0.0 <= value <= 1.0):
                    raise ValueError(
                        f"frame '{metrics.frame_id}' {name} out of range: {value!r}"
                    )
        if self.per_frame:
            mean_iou = math.fsum(m.iou for m in self.per_frame) / len(self.per_frame)
            mean_f = math.fsum(m.f for m in self.per_frame) / len(self.per_frame)
            if abs(mean_iou - self.m_iou) > 1e-9 or abs(mean_f - self.f_score) > 1e-9:
                raise ValueError("aggregate metrics do not match per-frame values")


def frame_fscore(
    pred: BinaryMask, gt: BinaryMask, beta_sq: float = DEFAULT_BETA_SQ
) -> tuple[float, float, float]:
    """(precision, recall, F) of one predicted mask against ground truth.

    F = (1 + b) * P * R / (b * P + R) with b = beta_sq. Degenerate cases:
    an empty denominator side scores 1 by convention (empty prediction has
    precision 1, empty ground truth has recall 1), and F is 0 whenever
    there are no true positives but some error pixels.
    """
    if pred.width != gt.width or pred.height != gt.height:
        raise ShapeMismatchError(
            f"mask shapes differ: {pred.width}x{pred.height} vs {gt.width}x{gt.height}"
        )
    if not (math.isfinite(beta_sq) and beta_sq > 0):
        raise ValueError(f"beta_sq must be positive, got {beta_sq!r}")
    p = pred.to_array()
    g = gt.to_array()
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    denom = beta_sq * precision + recall
    f = 0.0 if denom == 0.0 else (1.0 + beta_sq) * precision * recall / denom
    return precision, recall, f


def evaluate_sequence(
    preds: Sequence[BinaryMask],
    gts: Sequence[BinaryMask],
    beta_sq: float = DEFAULT_BETA_SQ,
    frame_ids: Optional[Sequence[str]] = None,
) -> EvalResult:
    """Per-frame IoU and F over aligned sequences, averaged unweighted."""
    if len(preds) != len(gts):
        raise AlignmentError(
            f"{len(preds)} predictions cannot align with {len(gts)} ground-truth masks"
        )
    if frame_ids is None:
        frame_ids = [str(i + 1) for i in range(len(preds))]
    elif len(frame_ids) != len(preds):
        raise AlignmentError(
            f"{len(frame_ids)} frame ids for {len(preds)} predictions"
        )
    per_frame = []
    for frame_id, pred, gt in zip(frame_ids, preds, gts):
        iou = mask_iou(pred, gt)
        precision, recall, f = frame_fscore(pred, gt, beta_sq)
        per_frame.append(FrameMetrics(frame_id, iou, precision, recall, f))
    if not per_frame:
        raise AlignmentError("cannot evaluate an empty sequence")
    m_iou = math.fsum(m.iou for m in per_frame) / len(per_frame)
    f_score = math.fsum(m.f for m in per_frame) / len(per_frame)
    return EvalResult(m_iou, f_score, float(beta_sq), tuple(per_frame))


def _format_cell(result: Optional[EvalResult]) -> tuple[str, str]:
    if result is None:
        return "-", "-"
    return f"{result.m_iou:.2f}", f"{result.f_score:.2f}"


def report_table(
    results: Mapping[str, Mapping[str, EvalResult]],
    splits: Sequence[str] = ("S4", "MS3"),
) -> str:
    """Fixed-width comparison table: one row per variant, (M_IOU, F_score)
    column pair per split. Values display rounded to 2 decimals; use
    :func:`report_json` for full precision."""
    name_width = max([len("Approach")] + [len(v) for v in results])
    header_top = f"{'Approach':<{name_width}}"
    header_sub = f"{'':<{name_width}}"
    for split in splits:
        header_top += f"  {split:^16}"
        header_sub += f"  {'M_IOU':>7} {'F_score':>8}"
    lines = [header_top, header_sub, "-" * len(header_sub)]
    for variant, by_split in results.items():
        row = f"{variant:<{name_width}}"
        for split in splits:
            miou, f = _format_cell(by_split.get(split))
            row += f"  {miou:>7} {f:>8}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def report_json(
    results: Mapping[str, Mapping[str, EvalResult]],
    splits: Optional[Sequence[str]] = None,
) -> list[dict]:
    """Full-precision report entries, one per (variant, split)."""
    entries = []
    for variant, by_split in results.items():
        split_names = splits if splits is not None else list(by_split)
        for split in split_names:
            result = by_split.get(split)
            if result is None:
                continue
            entries.append(
                {
                    "variant": variant,
                    "split": split,
                    "m_iou": result.m_iou,
                    "f_score": result.f_score,
                    "beta_sq": result.beta_sq,
                    "per_frame": [
                        {
                            "frame_id": m.frame_id,
                            "iou": m.iou,
                            "precision": m.precision,
                            "recall": m.recall,
                            "f": m.f,
                        }
                        for m in result.per_frame
                    ],
                }
            )
    return entries


def report_from_json(entries: Sequence[dict]) -> dict[str, dict[str, EvalResult]]:
    """Inverse of :func:`report_json`."""
    results: dict[str, dict[str, EvalResult]] = {}
    for entry in entries:
        per_frame = tuple(
            FrameMetrics(
                m["frame_id"], m["iou"], m["precision"], m["recall"], m["f"]
            )
            for m in entry["per_frame"]
        )
        result = EvalResult(
            entry["m_iou"], entry["f_score"], entry["beta_sq"], per_frame
        )
        results.setdefault(entry["variant"], {})[entry["split"]] = result
    return results
