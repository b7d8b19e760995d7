"""Bounding-box and binary-mask arithmetic.

Boxes live in continuous pixel coordinates with the origin at the top-left
corner. Masks are stored run-length encoded in row-major scan order and
decode lazily to boolean arrays, so all values here are immutable and safe
to share across workers.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .errors import ShapeMismatchError

__all__ = [
    "BoundingBox",
    "ScoredBox",
    "BinaryMask",
    "box_iou",
    "mask_iou",
    "nms",
    "nms_indices",
    "rasterize_box",
    "mask_union",
    "tight_bbox",
]

# Grayscale values below this decode to background; our own PNGs use {0, 255}.
PNG_FOREGROUND_THRESHOLD = 128


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with strictly positive area.

    Coordinates are kept as-is (they may stick out of a frame); clipping
    happens at rasterization time. Boxes stored in bundles must additionally
    be non-negative, which the bundle loader enforces.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        for name, value in zip(("x_min", "y_min", "x_max", "y_max"), coords):
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"box must have positive area, got {coords}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def is_non_negative(self) -> bool:
        return self.x_min >= 0 and self.y_min >= 0


@dataclass(frozen=True)
class ScoredBox:
    """A box plus a confidence/objectness score in [0, 1]."""

    box: BoundingBox
    score: float

    def __post_init__(self):
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score!r}")


@dataclass(frozen=True)
class BinaryMask:
    """Binary pixel labels for a height x width frame, run-length encoded.

    Runs alternate background/foreground in row-major scan order and always
    start with a background run, whose length is 0 when pixel (0, 0) is
    foreground. The encoding is canonical (no other zero-length runs), so
    value equality coincides with pixel equality.
    """

    width: int
    height: int
    runs: tuple[int, ...]
    _decoded: Optional[np.ndarray] = field(
        default=None, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(
                f"mask dimensions must be positive, got {self.width}x{self.height}"
            )
        runs = tuple(int(r) for r in self.runs)
        object.__setattr__(self, "runs", runs)
        if not runs:
            raise ValueError("runs may not be empty")
        if runs[0] < 0 or any(r <= 0 for r in runs[1:]):
            raise ValueError(
                "only the leading background run may be zero and none may be negative"
            )
        total = sum(runs)
        if total != self.width * self.height:
            raise ValueError(
                f"run lengths sum to {total}, expected {self.width * self.height}"
            )

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(width, height, (width * height,))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(width, height, (0, width * height))

    @classmethod
    def from_array(cls, array) -> "BinaryMask":
        arr = np.asarray(array)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-d array, got shape {arr.shape}")
        flat = arr.astype(bool).ravel()
        edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate(([0], edges, [flat.size]))
        runs = np.diff(bounds).tolist()
        if flat[0]:
            runs.insert(0, 0)
        return cls(arr.shape[1], arr.shape[0], tuple(int(r) for r in runs))

    def to_array(self) -> np.ndarray:
        """Decode to a read-only (height, width) boolean array."""
        if self._decoded is None:
            flat = np.zeros(self.width * self.height, dtype=bool)
            pos = 0
            foreground = False
            for run in self.runs:
                if foreground:
                    flat[pos : pos + run] = True
                pos += run
                foreground = not foreground
            decoded = flat.reshape(self.height, self.width)
            decoded.setflags(write=False)
            object.__setattr__(self, "_decoded", decoded)
        return self._decoded

    @property
    def foreground_count(self) -> int:
        return sum(self.runs[1::2])

    @property
    def is_empty(self) -> bool:
        return self.foreground_count == 0

    # --- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "runs": list(self.runs)}

    @classmethod
    def from_json_dict(cls, data: dict) -> "BinaryMask":
        return cls(int(data["width"]), int(data["height"]), tuple(data["runs"]))

    def to_png_bytes(self) -> bytes:
        img = Image.fromarray(
            np.where(self.to_array(), 255, 0).astype(np.uint8), mode="L"
        )
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "BinaryMask":
        img = Image.open(io.BytesIO(data)).convert("L")
        arr = np.asarray(img) >= PNG_FOREGROUND_THRESHOLD
        return cls.from_array(arr)


def _require_same_shape(a: BinaryMask, b: BinaryMask) -> None:
    if a.width != b.width or a.height != b.height:
        raise ShapeMismatchError(
            f"mask shapes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when they are disjoint."""
    inter_w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    inter_h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    return inter / (a.area + b.area - inter)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """|a AND b| / |a OR b|; two empty masks count as a perfect match (1.0)."""
    _require_same_shape(a, b)
    pa = a.to_array()
    pb = b.to_array()
    union = int(np.count_nonzero(pa | pb))
    if union == 0:
        return 1.0
    inter = int(np.count_nonzero(pa & pb))
    return inter / union


def nms_indices(boxes: Sequence[ScoredBox], iou_threshold: float) -> list[int]:
    """Greedy non-maximal suppression, returning kept indices.

    Indices come back ordered by descending score; equal scores keep the
    earlier input index first, so results are deterministic. A remaining box
    is suppressed when its IoU with an already-kept box strictly exceeds the
    threshold.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold!r}")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[int] = []
    for i in order:
        if all(box_iou(boxes[i].box, boxes[k].box) <= iou_threshold for k in kept):
            kept.append(i)
    return kept


def nms(boxes: Sequence[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Greedy NMS over scored boxes; see :func:`nms_indices`."""
    return [boxes[i] for i in nms_indices(boxes, iou_threshold)]


def rasterize_box(box: BoundingBox, width: int, height: int) -> BinaryMask:
    """Paint a box onto a width x height frame.

    Pixel (x, y) is foreground iff x_min <= x < x_max and y_min <= y < y_max,
    i.e. the half-open integer interval [ceil(min), ceil(max)) per axis,
    clamped to the frame. Boxes entirely outside yield the empty mask.
    """
    if width < 1 or height < 1:
        raise ValueError(f"frame dimensions must be positive, got {width}x{height}")
    x0 = max(0, math.ceil(box.x_min))
    x1 = min(width, math.ceil(box.x_max))
    y0 = max(0, math.ceil(box.y_min))
    y1 = min(height, math.ceil(box.y_max))
    if x0 >= x1 or y0 >= y1:
        return BinaryMask.empty(width, height)
    arr = np.zeros((height, width), dtype=bool)
    arr[y0:y1, x0:x1] = True
    return BinaryMask.from_array(arr)


def mask_union(
    masks: Sequence[BinaryMask],
    width: Optional[int] = None,
    height: Optional[int] = None,
) -> BinaryMask:
    """Pixelwise OR of masks; an empty list needs explicit dimensions."""
    if not masks:
        if width is None or height is None:
            raise ValueError("mask_union of an empty list requires width and height")
        return BinaryMask.empty(width, height)
    first = masks[0]
    acc = np.array(first.to_array())
    for m in masks[1:]:
        _require_same_shape(first, m)
        acc |= m.to_array()
    return BinaryMask.from_array(acc)


def tight_bbox(mask: BinaryMask) -> Optional[BoundingBox]:
    """Smallest box covering all foreground pixels; None for an empty mask.

    Follows the half-open convention: a lone pixel at (x, y) yields
    box(x, y, x + 1, y + 1).
    """
    arr = mask.to_array()
    ys, xs = np.nonzero(arr)
    if xs.size == 0:
        return None
    return BoundingBox(
        float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1)
    )
