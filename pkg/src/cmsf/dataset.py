"""Dataset and interchange-bundle loading.

Dataset layout (one directory per video, five aligned clips each):

    <root>/<split>/<video_id>/frames/<t>.png   t in 1..5
    <root>/<split>/<video_id>/audio/<t>.wav
    <root>/<split>/<video_id>/gt/<t>.png       grayscale, foreground = 255

Bundle layout: ``manifest.json`` at the root referencing one record file per
(frame, capability, qualifier) key, grouped in a directory per video. Record
payloads are JSON except candidate masks, which are grayscale PNGs. The full
schema lives in docs/bundle_format.md.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .backends import (
    AudioTag,
    BackendRecordKey,
    CAPABILITIES,
    MaskCandidate,
    RecordedBackend,
)
from .embedding import EmbeddingVector
from .errors import CorruptBundleError, DatasetError
from .geometry import BinaryMask, BoundingBox, ScoredBox
from .pipelines import FramePair

__all__ = [
    "FRAMES_PER_VIDEO",
    "FRAME_SIZE",
    "SPLITS",
    "BUNDLE_VERSION",
    "VideoEntry",
    "DatasetIndex",
    "load_dataset",
    "load_gt_mask",
    "resize_policy",
    "resize_image",
    "resize_mask",
    "load_bundle",
    "write_bundle",
    "bundle_hash",
]

FRAMES_PER_VIDEO = 5
FRAME_SIZE = 224
SPLITS = ("S4", "MS3")
BUNDLE_VERSION = "1"


@dataclass(frozen=True)
class VideoEntry:
    video_id: str
    frames: tuple[FramePair, ...]
    gt_paths: tuple[Optional[Path], ...]


@dataclass(frozen=True)
class DatasetIndex:
    split: str
    root: Path
    videos: tuple[VideoEntry, ...]

    @property
    def frames(self) -> list[FramePair]:
        return [frame for video in self.videos for frame in video.frames]


def _readable_image(path: Path) -> None:
    try:
        with Image.open(path) as img:
            img.size
    except Exception as err:
        raise DatasetError(f"unreadable image {path}: {err}") from err


def load_dataset(root, split: str, require_gt: bool = True) -> DatasetIndex:
    """Validate a dataset tree and index it.

    Frames are declared 224x224: media is resized on access through
    :func:`resize_policy`, never rewritten on disk.
    """
    root = Path(root)
    split_dir = root / split
    if not split_dir.is_dir():
        raise DatasetError(f"split directory not found: {split_dir}")
    video_ids = sorted(p.name for p in split_dir.iterdir() if p.is_dir())
    if not video_ids:
        raise DatasetError(f"no videos under {split_dir}")
    videos = []
    for video_id in video_ids:
        video_dir = split_dir / video_id
        frame_files = sorted((video_dir / "frames").glob("*.png"))
        found = sorted(p.stem for p in frame_files)
        expected = [str(t) for t in range(1, FRAMES_PER_VIDEO + 1)]
        if sorted(expected) != found:
            raise DatasetError(
                f"video '{video_id}' must have exactly frames 1..{FRAMES_PER_VIDEO}, "
                f"found {found or 'none'}"
            )
        frames = []
        gt_paths = []
        for t in range(1, FRAMES_PER_VIDEO + 1):
            frame_path = video_dir / "frames" / f"{t}.png"
            audio_path = video_dir / "audio" / f"{t}.wav"
            gt_path = video_dir / "gt" / f"{t}.png"
            _readable_image(frame_path)
            if not audio_path.is_file():
                raise DatasetError(f"missing audio segment {audio_path}")
            if gt_path.is_file():
                _readable_image(gt_path)
            elif require_gt:
                raise DatasetError(
                    f"video '{video_id}' is missing ground truth {gt_path}"
                )
            frames.append(
                FramePair(
                    frame_id=f"{video_id}/{t}",
                    width=FRAME_SIZE,
                    height=FRAME_SIZE,
                    t=t,
                    image_ref=str(frame_path),
                    audio_ref=str(audio_path),
                )
            )
            gt_paths.append(gt_path if gt_path.is_file() else None)
        videos.append(VideoEntry(video_id, tuple(frames), tuple(gt_paths)))
    return DatasetIndex(split, root, tuple(videos))


def resize_mask(mask: BinaryMask, width: int, height: int) -> BinaryMask:
    """Nearest-neighbor resize; output stays strictly binary."""
    if (mask.width, mask.height) == (width, height):
        return mask
    arr = mask.to_array()
    ys = np.floor((np.arange(height) + 0.5) * mask.height / height).astype(int)
    xs = np.floor((np.arange(width) + 0.5) * mask.width / width).astype(int)
    ys = np.clip(ys, 0, mask.height - 1)
    xs = np.clip(xs, 0, mask.width - 1)
    return BinaryMask.from_array(arr[np.ix_(ys, xs)])


def resize_image(image: np.ndarray, width: int = FRAME_SIZE, height: int = FRAME_SIZE) -> np.ndarray:
    """Bilinear image resize to (height, width); uint8 in, uint8 out."""
    img = Image.fromarray(np.asarray(image, dtype=np.uint8))
    return np.asarray(img.resize((width, height), Image.BILINEAR))


def resize_policy(
    image: np.ndarray, gt_mask: BinaryMask, size: int = FRAME_SIZE
) -> tuple[np.ndarray, BinaryMask]:
    """Resize a frame and its aligned ground truth to size x size.

    Images interpolate bilinearly; masks use nearest neighbor so labels stay
    binary.
    """
    return resize_image(image, size, size), resize_mask(gt_mask, size, size)


def load_gt_mask(path, size: int = FRAME_SIZE) -> BinaryMask:
    """Ground-truth PNG to a size x size binary mask."""
    mask = BinaryMask.from_png_bytes(Path(path).read_bytes())
    return resize_mask(mask, size, size)


# --- bundle manifest -------------------------------------------------------


@dataclass(frozen=True)
class RecordRef:
    capability: str
    qualifier: Optional[str]
    path: str


@dataclass(frozen=True)
class FrameEntry:
    frame_id: str
    width: int
    height: int
    records: tuple[RecordRef, ...]


@dataclass(frozen=True)
class BundleManifest:
    version: str
    embedding_dim: int
    frames: tuple[FrameEntry, ...]
    incomplete: bool = False

    def to_json_dict(self) -> dict:
        data = {
            "version": self.version,
            "embedding_dim": self.embedding_dim,
            "frames": [
                {
                    "frame_id": f.frame_id,
                    "width": f.width,
                    "height": f.height,
                    "records": [
                        {
                            "capability": r.capability,
                            "qualifier": r.qualifier,
                            "path": r.path,
                        }
                        for r in f.records
                    ],
                }
                for f in self.frames
            ],
        }
        if self.incomplete:
            data["incomplete"] = True
        return data


def _parse_manifest(data: dict, manifest_path: Path) -> BundleManifest:
    try:
        version = str(data["version"])
        if version != BUNDLE_VERSION:
            raise CorruptBundleError(
                f"unsupported bundle version {version!r} in {manifest_path}"
            )
        embedding_dim = int(data["embedding_dim"])
        frames = []
        for frame_data in data["frames"]:
            records = tuple(
                RecordRef(r["capability"], r.get("qualifier"), r["path"])
                for r in frame_data["records"]
            )
            frames.append(
                FrameEntry(
                    str(frame_data["frame_id"]),
                    int(frame_data["width"]),
                    int(frame_data["height"]),
                    records,
                )
            )
    except (KeyError, TypeError, ValueError) as err:
        raise CorruptBundleError(f"malformed manifest {manifest_path}: {err}") from err
    return BundleManifest(
        version, embedding_dim, tuple(frames), bool(data.get("incomplete", False))
    )


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorruptBundleError(f"bundle file missing: {path}") from None
    except json.JSONDecodeError as err:
        raise CorruptBundleError(f"bundle file {path} is not valid JSON: {err}") from err


def _parse_scored_boxes(data, path: Path) -> tuple[ScoredBox, ...]:
    boxes = []
    for i, item in enumerate(data):
        try:
            box = BoundingBox(
                float(item["x_min"]),
                float(item["y_min"]),
                float(item["x_max"]),
                float(item["y_max"]),
            )
            boxes.append(ScoredBox(box, float(item["score"])))
        except (KeyError, TypeError, ValueError) as err:
            raise CorruptBundleError(f"bad box {i} in {path}: {err}") from err
    return tuple(boxes)


def _load_record(ref: RecordRef, bundle_dir: Path):
    path = bundle_dir / ref.path
    if ref.capability == "audio_tags":
        data = _read_json(path)
        try:
            return tuple(
                AudioTag(str(t["label"]), int(t["class_index"]), float(t["probability"]))
                for t in data
            )
        except (KeyError, TypeError, ValueError) as err:
            raise CorruptBundleError(f"bad audio tag in {path}: {err}") from err
    if ref.capability in ("grounded_boxes", "proposals"):
        return _parse_scored_boxes(_read_json(path), path)
    if ref.capability == "mask_candidates":
        data = _read_json(path)
        candidates = []
        for i, item in enumerate(data):
            try:
                mask_path = bundle_dir / item["mask_png"]
                if not mask_path.is_file():
                    raise CorruptBundleError(f"bundle file missing: {mask_path}")
                mask = BinaryMask.from_png_bytes(mask_path.read_bytes())
                candidates.append(
                    MaskCandidate(mask, float(item["quality"]), str(item["prompt_origin"]))
                )
            except CorruptBundleError:
                raise
            except (KeyError, TypeError, ValueError) as err:
                raise CorruptBundleError(f"bad candidate {i} in {path}: {err}") from err
        return tuple(candidates)
    if ref.capability in ("image_embedding", "audio_embedding"):
        data = _read_json(path)
        try:
            return EmbeddingVector.from_json_dict(data)
        except (KeyError, TypeError, ValueError) as err:
            raise CorruptBundleError(f"bad embedding in {path}: {err}") from err
    raise CorruptBundleError(f"unknown capability {ref.capability!r} for {path}")


def load_bundle(path) -> RecordedBackend:
    """Load and validate a bundle into a recorded backend.

    Every referenced file must exist and parse, every value must satisfy its
    type invariants, all embeddings must share the manifest dim, and every
    candidate mask must match its frame's dimensions.
    """
    bundle_dir = Path(path)
    manifest_path = bundle_dir / "manifest.json"
    if not manifest_path.is_file():
        raise CorruptBundleError(f"manifest not found: {manifest_path}")
    manifest = _parse_manifest(_read_json(manifest_path), manifest_path)

    frame_dims: dict[str, tuple[int, int]] = {}
    records: dict[BackendRecordKey, object] = {}
    for frame in manifest.frames:
        if frame.frame_id in frame_dims:
            raise CorruptBundleError(f"duplicate frame entry '{frame.frame_id}'")
        frame_dims[frame.frame_id] = (frame.width, frame.height)
        for ref in frame.records:
            if ref.capability not in CAPABILITIES:
                raise CorruptBundleError(
                    f"unknown capability {ref.capability!r} in manifest for "
                    f"frame '{frame.frame_id}'"
                )
            key = BackendRecordKey(frame.frame_id, ref.capability, ref.qualifier)
            if key in records:
                raise CorruptBundleError(f"duplicate record key {key}")
            try:
                records[key] = _load_record(ref, bundle_dir)
            except ValueError as err:
                raise CorruptBundleError(f"record {key}: {err}") from err
    try:
        return RecordedBackend(records, frame_dims, manifest.embedding_dim)
    except ValueError as err:
        raise CorruptBundleError(str(err)) from err


# --- bundle writing --------------------------------------------------------


def _slug(text: str) -> str:
    """Human-readable, collision-free file stem for a qualifier."""
    head = re.sub(r"[^A-Za-z0-9._-]+", "_", text)[:40].strip("_")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:10]
    return f"{head}_{digest}" if head else digest


def _frame_dir(frame_id: str) -> str:
    video, _, t = frame_id.rpartition("/")
    if video:
        return f"{_slug(video)}/frame_{_slug(t)}"
    return f"frame_{_slug(t)}"


def _dump_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _record_payload(key: BackendRecordKey, value, bundle_dir: Path, rel_dir: str) -> str:
    if key.capability == "audio_tags":
        rel = f"{rel_dir}/audio_tags.json"
        _dump_json(
            bundle_dir / rel,
            [
                {"label": t.label, "class_index": t.class_index, "probability": t.probability}
                for t in value
            ],
        )
        return rel
    if key.capability in ("grounded_boxes", "proposals"):
        stem = (
            f"grounded/{_slug(key.qualifier)}"
            if key.capability == "grounded_boxes"
            else "proposals"
        )
        rel = f"{rel_dir}/{stem}.json"
        _dump_json(
            bundle_dir / rel,
            [
                {
                    "x_min": sb.box.x_min,
                    "y_min": sb.box.y_min,
                    "x_max": sb.box.x_max,
                    "y_max": sb.box.y_max,
                    "score": sb.score,
                }
                for sb in value
            ],
        )
        return rel
    if key.capability == "mask_candidates":
        stem = _slug(key.qualifier or "prompt")
        rel = f"{rel_dir}/masks/{stem}.json"
        entries = []
        for i, cand in enumerate(value):
            mask_rel = f"{rel_dir}/masks/{stem}_{i}.png"
            mask_path = bundle_dir / mask_rel
            mask_path.parent.mkdir(parents=True, exist_ok=True)
            mask_path.write_bytes(cand.mask.to_png_bytes())
            entries.append(
                {
                    "quality": cand.quality,
                    "prompt_origin": cand.prompt_origin,
                    "mask_png": mask_rel,
                }
            )
        _dump_json(bundle_dir / rel, entries)
        return rel
    if key.capability in ("image_embedding", "audio_embedding"):
        stem = (
            f"embed/crop_{_slug(key.qualifier)}"
            if key.capability == "image_embedding"
            else "embed/audio"
        )
        rel = f"{rel_dir}/{stem}.json"
        _dump_json(bundle_dir / rel, value.to_json_dict())
        return rel
    raise ValueError(f"unknown capability {key.capability!r}")


def write_bundle(backend: RecordedBackend, path) -> BundleManifest:
    """Serialize a recorded backend back to the bundle layout.

    Records are written in sorted key order with sorted JSON keys, so the
    same backend always produces the same bytes.
    """
    bundle_dir = Path(path)
    bundle_dir.mkdir(parents=True, exist_ok=True)
    records = backend.records
    by_frame: dict[str, list[BackendRecordKey]] = {}
    for key in records:
        by_frame.setdefault(key.frame_id, []).append(key)

    frames = []
    for frame_id in sorted(backend.frame_dims):
        width, height = backend.frame_dims[frame_id]
        rel_dir = _frame_dir(frame_id)
        refs = []
        keys = sorted(
            by_frame.get(frame_id, []),
            key=lambda k: (k.capability, k.qualifier or ""),
        )
        for key in keys:
            rel = _record_payload(key, records[key], bundle_dir, rel_dir)
            refs.append(RecordRef(key.capability, key.qualifier, rel))
        frames.append(FrameEntry(frame_id, width, height, tuple(refs)))
    manifest = BundleManifest(BUNDLE_VERSION, backend.embedding_dim, tuple(frames))
    _dump_json(bundle_dir / "manifest.json", manifest.to_json_dict())
    return manifest


def bundle_hash(path) -> str:
    """Content hash over every file in the bundle, stable across machines."""
    bundle_dir = Path(path)
    digest = hashlib.sha256()
    for file in sorted(p for p in bundle_dir.rglob("*") if p.is_file()):
        digest.update(str(file.relative_to(bundle_dir)).encode("utf-8"))
        digest.update(b"\0")
        digest.update(file.read_bytes())
    return "sha256:" + digest.hexdigest()
