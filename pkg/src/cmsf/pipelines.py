"""The three cross-modality filtering pipelines.

Each variant maps one frame plus a backend to one binary mask. Every stage
is a filter followed by a union, so raising any threshold can only shrink
the output foreground. All functions are pure: identical inputs produce
identical masks, and frames may be processed concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .backends import Backend, MaskCandidate
from .embedding import rank_by_similarity, threshold_filter
from .errors import CmsfError, SequenceError, StageError
from .geometry import BinaryMask, ScoredBox, mask_union, nms_indices, rasterize_box, tight_bbox

__all__ = [
    "VARIANTS",
    "FramePair",
    "PipelineConfig",
    "StageTrace",
    "FrameRun",
    "run_at_gdino_sam",
    "run_owod_bind",
    "run_sam_bind",
    "run_frame",
    "run_sequence",
    "run_sequence_traced",
    "grid_points",
]

VARIANTS = ("at-gdino-sam", "owod-bind", "sam-bind")

OWOD_MASK_MODES = ("rasterize_boxes", "segment_boxes")


@dataclass(frozen=True)
class FramePair:
    """One image frame aligned with its audio segment.

    The dataset harness emits frames already resized to 224x224; dimensions
    stay explicit here so geometry never has to assume them.
    """

    frame_id: str
    width: int
    height: int
    t: int
    image_ref: Optional[str] = None
    audio_ref: Optional[str] = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(
                f"frame dimensions must be positive, got {self.width}x{self.height}"
            )
        if self.t < 1:
            raise ValueError(f"frame index must be >= 1, got {self.t}")


def _check_unit(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class PipelineConfig:
    """All thresholds and mode switches, with the evaluated defaults."""

    tau_at: float = 0.5
    tau_bb: float = 0.5
    tau_bind: float = 0.7
    nms_iou: float = 0.5
    quality_floor: float = 0.88
    grid_size: int = 16
    owod_mask_mode: str = "rasterize_boxes"

    def __post_init__(self):
        _check_unit("tau_at", self.tau_at)
        _check_unit("tau_bb", self.tau_bb)
        _check_unit("nms_iou", self.nms_iou)
        _check_unit("quality_floor", self.quality_floor)
        if not (math.isfinite(self.tau_bind) and -1.0 <= self.tau_bind <= 1.0):
            raise ValueError(f"tau_bind must be in [-1, 1], got {self.tau_bind!r}")
        if self.grid_size < 1:
            raise ValueError(f"grid_size must be positive, got {self.grid_size!r}")
        if self.owod_mask_mode not in OWOD_MASK_MODES:
            raise ValueError(
                f"owod_mask_mode must be one of {OWOD_MASK_MODES}, "
                f"got {self.owod_mask_mode!r}"
            )

    def to_json_dict(self) -> dict:
        return {
            "tau_at": self.tau_at,
            "tau_bb": self.tau_bb,
            "tau_bind": self.tau_bind,
            "nms_iou": self.nms_iou,
            "quality_floor": self.quality_floor,
            "grid_size": self.grid_size,
            "owod_mask_mode": self.owod_mask_mode,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PipelineConfig":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**known)


@dataclass
class StageTrace:
    """Ordered record of how many items survived each stage."""

    counts: dict[str, int] = field(default_factory=dict)

    def record(self, stage: str, count: int) -> None:
        self.counts[stage] = int(count)


@dataclass(frozen=True)
class FrameRun:
    """Result of running one pipeline variant on one frame."""

    frame_id: str
    t: int
    mask: BinaryMask
    trace: StageTrace


def _trace(trace: Optional[StageTrace], stage: str, count: int) -> None:
    if trace is not None:
        trace.record(stage, count)


def _stage(stage: str, frame: FramePair, call: Callable):
    try:
        return call()
    except CmsfError as err:
        raise StageError(stage, frame.frame_id, err) from err


def _quality_filtered(
    candidates: Sequence[MaskCandidate], floor: float
) -> list[MaskCandidate]:
    return [c for c in candidates if c.quality > floor]


def grid_points(width: int, height: int, grid_size: int) -> list[tuple[float, float]]:
    """Cell-center point prompts of a regular grid_size x grid_size grid.

    Row-major order. A fixed grid replaces any notion of random placement so
    runs are reproducible.
    """
    points = []
    for gy in range(grid_size):
        for gx in range(grid_size):
            points.append(
                ((gx + 0.5) * width / grid_size, (gy + 0.5) * height / grid_size)
            )
    return points


def run_at_gdino_sam(
    frame: FramePair,
    cfg: PipelineConfig,
    backends: Backend,
    trace: Optional[StageTrace] = None,
) -> BinaryMask:
    """Audio-cue pipeline: tags -> grounded boxes -> segmenter -> union.

    Tags above tau_at ground one detection query each; the resulting boxes
    prompt the segmenter, and candidates above the quality floor are
    unioned. Any empty stage short-circuits to the empty mask.
    """
    empty = BinaryMask.empty(frame.width, frame.height)
    tags = _stage("tag_audio", frame, lambda: backends.tag_audio(frame.frame_id))
    _trace(trace, "audio_tags", len(tags))
    kept_tags = [t for t in tags if t.probability > cfg.tau_at]
    _trace(trace, "kept_tags", len(kept_tags))
    if not kept_tags:
        return empty

    boxes: list[ScoredBox] = []
    for tag in kept_tags:
        boxes.extend(
            _stage(
                "detect_grounded",
                frame,
                lambda label=tag.label: backends.detect_grounded(frame.frame_id, [label]),
            )
        )
    _trace(trace, "grounded_boxes", len(boxes))
    if not boxes:
        return empty

    candidates = _stage(
        "segment",
        frame,
        lambda: backends.segment(frame.frame_id, [b.box for b in boxes]),
    )
    _trace(trace, "mask_candidates", len(candidates))
    kept = _quality_filtered(candidates, cfg.quality_floor)
    _trace(trace, "kept_candidates", len(kept))
    if not kept:
        return empty
    return mask_union([c.mask for c in kept])


def run_owod_bind(
    frame: FramePair,
    cfg: PipelineConfig,
    backends: Backend,
    trace: Optional[StageTrace] = None,
) -> BinaryMask:
    """Visual-cue pipeline: proposals -> objectness filter -> audio-similarity filter.

    Proposals above tau_bb are embedded (frame cropped to each box) and kept
    when their cosine similarity with the audio embedding exceeds tau_bind.
    Survivors become the mask either by direct rasterization (default) or by
    prompting the segmenter with the surviving boxes.
    """
    empty = BinaryMask.empty(frame.width, frame.height)
    proposals = _stage(
        "propose_class_agnostic",
        frame,
        lambda: backends.propose_class_agnostic(frame.frame_id),
    )
    _trace(trace, "proposals", len(proposals))
    kept = [p for p in proposals if p.score > cfg.tau_bb]
    _trace(trace, "kept_proposals", len(kept))
    if not kept:
        return empty

    audio_emb = _stage(
        "embed_audio", frame, lambda: backends.embed_audio(frame.frame_id)
    )
    crop_embs = [
        _stage(
            "embed_image_crop",
            frame,
            lambda box=p.box: backends.embed_image_crop(frame.frame_id, box),
        )
        for p in kept
    ]
    ranked = rank_by_similarity(audio_emb, crop_embs)
    survivors = [kept[s.proposal_index] for s in threshold_filter(ranked, cfg.tau_bind)]
    _trace(trace, "kept_bind", len(survivors))
    if not survivors:
        return empty

    if cfg.owod_mask_mode == "rasterize_boxes":
        return mask_union(
            [rasterize_box(p.box, frame.width, frame.height) for p in survivors]
        )
    candidates = _stage(
        "segment",
        frame,
        lambda: backends.segment(frame.frame_id, [p.box for p in survivors]),
    )
    _trace(trace, "mask_candidates", len(candidates))
    kept_candidates = _quality_filtered(candidates, cfg.quality_floor)
    _trace(trace, "kept_candidates", len(kept_candidates))
    if not kept_candidates:
        return empty
    return mask_union([c.mask for c in kept_candidates])


def run_sam_bind(
    frame: FramePair,
    cfg: PipelineConfig,
    backends: Backend,
    trace: Optional[StageTrace] = None,
) -> BinaryMask:
    """Grid-prompt pipeline: point grid -> quality filter -> NMS -> audio filter.

    The segmenter is prompted at every cell center of a regular grid.
    Candidates above the quality floor are deduplicated with greedy NMS over
    their tight boxes (quality as score), then each survivor's tight-box
    crop is embedded and kept when its similarity with the audio embedding
    exceeds tau_bind.
    """
    empty = BinaryMask.empty(frame.width, frame.height)
    points = grid_points(frame.width, frame.height, cfg.grid_size)
    candidates = _stage(
        "segment", frame, lambda: backends.segment(frame.frame_id, points)
    )
    _trace(trace, "mask_candidates", len(candidates))
    kept = _quality_filtered(candidates, cfg.quality_floor)
    _trace(trace, "kept_candidates", len(kept))

    # Empty masks have no tight box and can never contribute foreground.
    kept = [c for c in kept if not c.mask.is_empty]
    boxes = [ScoredBox(tight_bbox(c.mask), c.quality) for c in kept]
    survivors = [kept[i] for i in nms_indices(boxes, cfg.nms_iou)]
    _trace(trace, "kept_nms", len(survivors))
    if not survivors:
        return empty

    audio_emb = _stage(
        "embed_audio", frame, lambda: backends.embed_audio(frame.frame_id)
    )
    crop_embs = [
        _stage(
            "embed_image_crop",
            frame,
            lambda box=tight_bbox(c.mask): backends.embed_image_crop(
                frame.frame_id, box
            ),
        )
        for c in survivors
    ]
    ranked = rank_by_similarity(audio_emb, crop_embs)
    final = [survivors[s.proposal_index] for s in threshold_filter(ranked, cfg.tau_bind)]
    _trace(trace, "kept_bind", len(final))
    if not final:
        return empty
    return mask_union([c.mask for c in final])


_RUNNERS = {
    "at-gdino-sam": run_at_gdino_sam,
    "owod-bind": run_owod_bind,
    "sam-bind": run_sam_bind,
}


def run_frame(
    frame: FramePair,
    cfg: PipelineConfig,
    backends: Backend,
    variant: str,
) -> FrameRun:
    """Run one variant on one frame, capturing the stage trace."""
    if variant not in _RUNNERS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    trace = StageTrace()
    mask = _RUNNERS[variant](frame, cfg, backends, trace)
    return FrameRun(frame.frame_id, frame.t, mask, trace)


def run_sequence_traced(
    frames: Sequence[FramePair],
    cfg: PipelineConfig,
    backends: Backend,
    variant: str,
) -> list[FrameRun]:
    """Per-frame runs over a sequence; failures are aggregated per frame.

    Frames are independent (no temporal state), so the result for a frame
    never depends on processing order.
    """
    runs: list[FrameRun] = []
    failures: list[tuple[str, CmsfError]] = []
    for frame in frames:
        try:
            runs.append(run_frame(frame, cfg, backends, variant))
        except CmsfError as err:
            failures.append((frame.frame_id, err))
    if failures:
        raise SequenceError(failures)
    return runs


def run_sequence(
    frames: Sequence[FramePair],
    cfg: PipelineConfig,
    backends: Backend,
    variant: str,
) -> list[BinaryMask]:
    """Masks for a frame sequence, one per frame in input order."""
    return [run.mask for run in run_sequence_traced(frames, cfg, backends, variant)]
