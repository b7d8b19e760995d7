"""Standalone writer for interchange bundles (format version 1).

Implements the documented bundle contract directly (record payload
schemas, qualifier canonicalization, deterministic layout) so the
exporters stay decoupled from the engine package. Bundles are written to a
``.partial`` staging directory and renamed into place only when complete.
"""

from __future__ import annotations

import hashlib
import io
import json
import re
import shutil
from pathlib import Path

import numpy as np
from PIL import Image

BUNDLE_VERSION = "1"

CAPABILITIES = (
    "audio_tags",
    "grounded_boxes",
    "proposals",
    "mask_candidates",
    "image_embedding",
    "audio_embedding",
)

Box = tuple[float, float, float, float]


def box_qualifier(box: Box) -> str:
    return "box:" + ",".join(repr(float(c)) for c in box)


def point_qualifier(x: float, y: float) -> str:
    return f"point:{float(x)!r},{float(y)!r}"


def crop_qualifier(box: Box) -> str:
    # Nearest integer, ties to even, per the documented bundle format.
    return "crop:" + ",".join(str(int(round(float(c)))) for c in box)


def grid_points(width: int, height: int, grid_size: int) -> list[tuple[float, float]]:
    """Cell centers of a regular grid, row-major; must match the engine."""
    return [
        ((gx + 0.5) * width / grid_size, (gy + 0.5) * height / grid_size)
        for gy in range(grid_size)
        for gx in range(grid_size)
    ]


def tight_box(mask: np.ndarray) -> Box | None:
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return None
    return (float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))


def _slug(text: str) -> str:
    head = re.sub(r"[^A-Za-z0-9._-]+", "_", text)[:40].strip("_")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:10]
    return f"{head}_{digest}" if head else digest


def _mask_png_bytes(mask: np.ndarray) -> bytes:
    img = Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


class BundleWriter:
    """Accumulates records in memory, then materializes the bundle atomically."""

    def __init__(self, out_dir, embedding_dim: int):
        self.out_dir = Path(out_dir)
        self.embedding_dim = int(embedding_dim)
        # frame_id -> (width, height)
        self._frames: dict[str, tuple[int, int]] = {}
        # (frame_id, capability, qualifier) -> payload
        self._records: dict[tuple[str, str, str | None], object] = {}
        self.incomplete = False

    def add_frame(self, frame_id: str, width: int, height: int) -> None:
        self._frames[frame_id] = (int(width), int(height))

    def _put(self, frame_id: str, capability: str, qualifier: str | None, payload):
        if capability not in CAPABILITIES:
            raise ValueError(f"unknown capability {capability!r}")
        if frame_id not in self._frames:
            raise ValueError(f"add_frame was never called for '{frame_id}'")
        self._records[(frame_id, capability, qualifier)] = payload

    def add_audio_tags(self, frame_id: str, tags: list[tuple[str, int, float]]) -> None:
        payload = [
            {"label": str(label), "class_index": int(index), "probability": float(p)}
            for label, index, p in tags
        ]
        self._put(frame_id, "audio_tags", None, payload)

    def _box_payload(self, scored_boxes: list[tuple[Box, float]]) -> list[dict]:
        return [
            {
                "x_min": float(b[0]),
                "y_min": float(b[1]),
                "x_max": float(b[2]),
                "y_max": float(b[3]),
                "score": float(score),
            }
            for b, score in scored_boxes
        ]

    def add_grounded_boxes(
        self, frame_id: str, phrase: str, scored_boxes: list[tuple[Box, float]]
    ) -> None:
        self._put(frame_id, "grounded_boxes", phrase, self._box_payload(scored_boxes))

    def add_proposals(self, frame_id: str, scored_boxes: list[tuple[Box, float]]) -> None:
        self._put(frame_id, "proposals", None, self._box_payload(scored_boxes))

    def add_mask_candidates(
        self, frame_id: str, qualifier: str, candidates: list[tuple[np.ndarray, float]]
    ) -> None:
        width, height = self._frames[frame_id]
        for mask, _ in candidates:
            if mask.shape != (height, width):
                raise ValueError(
                    f"candidate mask shape {mask.shape} does not match frame "
                    f"'{frame_id}' ({height}, {width})"
                )
        self._put(
            frame_id,
            "mask_candidates",
            qualifier,
            [(np.asarray(mask, bool), float(q)) for mask, q in candidates],
        )

    def add_embedding(
        self, frame_id: str, kind: str, qualifier: str | None, vector: np.ndarray
    ) -> None:
        values = [float(v) for v in np.asarray(vector, dtype=np.float64)]
        if len(values) != self.embedding_dim:
            raise ValueError(
                f"embedding dim {len(values)} != declared {self.embedding_dim}"
            )
        self._put(frame_id, kind, qualifier, {"dim": len(values), "values": values})

    def has_record(self, frame_id: str, capability: str, qualifier: str | None) -> bool:
        return (frame_id, capability, qualifier) in self._records

    # --- materialization ---------------------------------------------------

    def _frame_dir(self, frame_id: str) -> str:
        video, _, t = frame_id.rpartition("/")
        if video:
            return f"{_slug(video)}/frame_{_slug(t)}"
        return f"frame_{_slug(t)}"

    def _write_payload(
        self, staging: Path, frame_id: str, capability: str, qualifier, payload
    ) -> str:
        rel_dir = self._frame_dir(frame_id)
        if capability == "audio_tags":
            rel = f"{rel_dir}/audio_tags.json"
            body = payload
        elif capability == "grounded_boxes":
            rel = f"{rel_dir}/grounded/{_slug(qualifier)}.json"
            body = payload
        elif capability == "proposals":
            rel = f"{rel_dir}/proposals.json"
            body = payload
        elif capability == "mask_candidates":
            stem = _slug(qualifier or "prompt")
            rel = f"{rel_dir}/masks/{stem}.json"
            body = []
            for i, (mask, quality) in enumerate(payload):
                mask_rel = f"{rel_dir}/masks/{stem}_{i}.png"
                mask_path = staging / mask_rel
                mask_path.parent.mkdir(parents=True, exist_ok=True)
                mask_path.write_bytes(_mask_png_bytes(mask))
                body.append(
                    {"quality": quality, "prompt_origin": qualifier, "mask_png": mask_rel}
                )
        elif capability == "image_embedding":
            rel = f"{rel_dir}/embed/crop_{_slug(qualifier)}.json"
            body = payload
        else:  # audio_embedding
            rel = f"{rel_dir}/embed/audio.json"
            body = payload
        path = staging / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return rel

    def finalize(self, extra_files: dict[str, dict] | None = None) -> Path:
        """Write everything to a staging directory and rename into place."""
        if self.out_dir.exists():
            raise FileExistsError(f"bundle output already exists: {self.out_dir}")
        staging = self.out_dir.parent / (self.out_dir.name + ".partial")
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir(parents=True)

        frames = []
        for frame_id in sorted(self._frames):
            width, height = self._frames[frame_id]
            refs = []
            keys = sorted(
                (k for k in self._records if k[0] == frame_id),
                key=lambda k: (k[1], k[2] or ""),
            )
            for _, capability, qualifier in keys:
                rel = self._write_payload(
                    staging,
                    frame_id,
                    capability,
                    qualifier,
                    self._records[(frame_id, capability, qualifier)],
                )
                refs.append(
                    {"capability": capability, "qualifier": qualifier, "path": rel}
                )
            frames.append(
                {"frame_id": frame_id, "width": width, "height": height, "records": refs}
            )

        manifest = {
            "version": BUNDLE_VERSION,
            "embedding_dim": self.embedding_dim,
            "frames": frames,
        }
        if self.incomplete:
            manifest["incomplete"] = True
        (staging / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        for rel, body in (extra_files or {}).items():
            path = staging / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(
                json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
        staging.rename(self.out_dir)
        return self.out_dir
