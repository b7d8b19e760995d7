"""Synthetic fixture generation: a mini dataset plus a matching bundle.

The generated tree is a deterministic function of the seed, byte for byte,
so repeated generation is diffable and pipeline runs over it are exactly
reproducible. Objects are colored rectangles, audio segments are sine
tones, and the bundle records everything any pipeline variant could query
at any threshold setting: tags, per-label grounded boxes, proposals,
candidates for every box and grid-point prompt, and embeddings for every
crop the filters may request.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import (
    AudioTag,
    BackendRecordKey,
    MaskCandidate,
    RecordedBackend,
    box_qualifier,
    crop_qualifier,
    point_qualifier,
)
from .dataset import FRAME_SIZE, FRAMES_PER_VIDEO, write_bundle
from .embedding import EmbeddingVector
from .geometry import BinaryMask, BoundingBox, ScoredBox, box_iou, rasterize_box, tight_bbox
from .pipelines import PipelineConfig, grid_points

__all__ = ["FixturePaths", "make_fixtures", "FIXTURE_GRID_SIZE"]

# The fixture bundle records grid-point prompts for this grid only; the
# emitted config.json pins the same value so runs stay in-bundle.
FIXTURE_GRID_SIZE = 4

EMBEDDING_DIM = 16

LABELS = (
    "dog bark",
    "piano",
    "human speech",
    "engine",
    "guitar",
    "bird song",
    "siren",
    "water",
)

# (split, video_id, object count): single-source videos plus one
# multi-source video.
VIDEO_PLAN = (
    ("S4", "v00", 1),
    ("S4", "v01", 1),
    ("MS3", "v02", 2),
)


class _HashRng:
    """Deterministic float source keyed by (seed, name parts)."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def floats(self, *parts, n: int = 1) -> list[float]:
        token = "|".join(str(p) for p in parts)
        out: list[float] = []
        counter = 0
        while len(out) < n:
            digest = hashlib.sha256(
                f"{self.seed}|{token}|{counter}".encode("utf-8")
            ).digest()
            for offset in range(0, 32, 8):
                if len(out) >= n:
                    break
                (word,) = struct.unpack_from(">Q", digest, offset)
                out.append(word / 2**64)
            counter += 1
        return out

    def unit(self, *parts, dim: int) -> np.ndarray:
        raw = np.array(self.floats(*parts, n=dim)) * 2.0 - 1.0
        norm = float(np.linalg.norm(raw))
        if norm == 0.0:
            raw[0] = 1.0
            norm = 1.0
        return raw / norm


@dataclass(frozen=True)
class FixturePaths:
    root: Path
    dataset_dir: Path
    bundle_dir: Path
    config_path: Path


@dataclass(frozen=True)
class _FixtureObject:
    label: str
    class_index: int
    box: BoundingBox  # integer-aligned, per frame
    color: tuple[int, int, int]


def _object_box(rng: _HashRng, video_id: str, obj_idx: int, t: int) -> BoundingBox:
    fx, fy, fw, fh = rng.floats(video_id, "object", obj_idx, n=4)
    w = 40 + int(fw * 50)
    h = 40 + int(fh * 50)
    x0 = int(fx * (FRAME_SIZE - w - 12)) + 2
    y0 = int(fy * (FRAME_SIZE - h - 12)) + 2
    # Objects drift two pixels per clip so frames differ.
    x0 = min(x0 + 2 * (t - 1), FRAME_SIZE - w - 1)
    y0 = min(y0 + 2 * (t - 1), FRAME_SIZE - h - 1)
    return BoundingBox(float(x0), float(y0), float(x0 + w), float(y0 + h))


def _label_color(label: str) -> tuple[int, int, int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return (80 + digest[0] % 176, 80 + digest[1] % 176, 80 + digest[2] % 176)


def _inset(box: BoundingBox, margin: float) -> BoundingBox:
    return BoundingBox(
        box.x_min + margin, box.y_min + margin, box.x_max - margin, box.y_max - margin
    )


def _write_wav(path: Path, freqs: list[float], seconds: float = 1.0) -> None:
    rate = 16000
    n = int(rate * seconds)
    samples = np.zeros(n)
    for freq in freqs:
        samples += 0.3 * np.sin(2 * math.pi * freq * np.arange(n) / rate)
    pcm = (np.clip(samples, -1.0, 1.0) * 32767).astype("<i2")
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(rate)
        wav.writeframes(pcm.tobytes())


def _write_frame_png(path: Path, objects: list[_FixtureObject]) -> None:
    from PIL import Image

    yy, xx = np.mgrid[0:FRAME_SIZE, 0:FRAME_SIZE]
    img = np.stack(
        [
            (xx * 255 // FRAME_SIZE).astype(np.uint8),
            (yy * 255 // FRAME_SIZE).astype(np.uint8),
            np.full((FRAME_SIZE, FRAME_SIZE), 40, dtype=np.uint8),
        ],
        axis=-1,
    )
    for obj in objects:
        x0, y0 = int(obj.box.x_min), int(obj.box.y_min)
        x1, y1 = int(obj.box.x_max), int(obj.box.y_max)
        img[y0:y1, x0:x1] = obj.color
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(path)


def _orthogonalized(vec: np.ndarray, protos: list[np.ndarray]) -> np.ndarray:
    for proto in protos:
        vec = vec - float(vec @ proto) * proto
    norm = float(np.linalg.norm(vec))
    if norm < 1e-9:
        vec = np.zeros_like(vec)
        vec[-1] = 1.0
        norm = 1.0
    return vec / norm


def _embedding(values: np.ndarray) -> EmbeddingVector:
    # Round so JSON files stay small; vectors renormalize fine downstream.
    return EmbeddingVector(tuple(round(float(v), 8) for v in values))


def _crop_embedding(
    rng: _HashRng,
    frame_id: str,
    box: BoundingBox,
    objects: list[_FixtureObject],
    protos: dict[str, np.ndarray],
) -> EmbeddingVector:
    """Embedding for a crop: aligned with its object's prototype, or an
    off-audio direction for background crops."""
    best = None
    best_iou = 0.0
    for obj in objects:
        iou = box_iou(box, obj.box)
        if iou > best_iou:
            best, best_iou = obj, iou
    noise = rng.unit("crop_noise", frame_id, crop_qualifier(box), dim=EMBEDDING_DIM)
    if best is not None and best_iou > 0.3:
        mix = 0.75 * protos[best.label]
        for obj in objects:
            if obj is not best:
                mix = mix + 0.25 * protos[obj.label]
        vec = mix + 0.05 * noise
        return _embedding(vec / np.linalg.norm(vec))
    background = _orthogonalized(noise, [protos[o.label] for o in objects])
    return _embedding(background)


def make_fixtures(out_dir, seed: int = 0) -> FixturePaths:
    """Generate the fixture dataset, bundle, and config under out_dir."""
    rng = _HashRng(seed)
    root = Path(out_dir)
    dataset_dir = root / "dataset"
    bundle_dir = root / "bundle"

    protos = {label: rng.unit("proto", label, dim=EMBEDDING_DIM) for label in LABELS}
    records: dict[BackendRecordKey, object] = {}
    frame_dims: dict[str, tuple[int, int]] = {}

    for split, video_id, n_objects in VIDEO_PLAN:
        label_rolls = rng.floats(video_id, "labels", n=n_objects)
        labels = []
        for i, roll in enumerate(label_rolls):
            label = LABELS[(int(roll * len(LABELS)) + i) % len(LABELS)]
            while label in labels:  # distinct labels within a video
                label = LABELS[(LABELS.index(label) + 1) % len(LABELS)]
            labels.append(label)

        for t in range(1, FRAMES_PER_VIDEO + 1):
            frame_id = f"{video_id}/{t}"
            frame_dims[frame_id] = (FRAME_SIZE, FRAME_SIZE)
            objects = [
                _FixtureObject(
                    label,
                    LABELS.index(label),
                    _object_box(rng, video_id, i, t),
                    _label_color(label),
                )
                for i, label in enumerate(labels)
            ]

            video_dir = dataset_dir / split / video_id
            _write_frame_png(video_dir / "frames" / f"{t}.png", objects)
            _write_wav(
                video_dir / "audio" / f"{t}.wav",
                [220.0 * (LABELS.index(l) + 1) for l in labels],
            )
            gt = np.zeros((FRAME_SIZE, FRAME_SIZE), dtype=bool)
            for obj in objects:
                gt |= rasterize_box(obj.box, FRAME_SIZE, FRAME_SIZE).to_array()
            gt_path = video_dir / "gt" / f"{t}.png"
            gt_path.parent.mkdir(parents=True, exist_ok=True)
            gt_path.write_bytes(BinaryMask.from_array(gt).to_png_bytes())

            _record_frame(rng, records, frame_id, objects, protos)

    backend = RecordedBackend(records, frame_dims, EMBEDDING_DIM)
    write_bundle(backend, bundle_dir)

    config = PipelineConfig(grid_size=FIXTURE_GRID_SIZE)
    config_path = root / "config.json"
    config_path.parent.mkdir(parents=True, exist_ok=True)
    config_path.write_text(
        json.dumps(config.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return FixturePaths(root, dataset_dir, bundle_dir, config_path)


def _record_frame(
    rng: _HashRng,
    records: dict,
    frame_id: str,
    objects: list[_FixtureObject],
    protos: dict[str, np.ndarray],
) -> None:
    tags = []
    for i, obj in enumerate(objects):
        (p,) = rng.floats(frame_id, "tag_prob", obj.label, n=1)
        tags.append(AudioTag(obj.label, obj.class_index, round(0.65 + 0.3 * p, 4)))
    # Distractor tags land below the evaluated tag threshold but above zero
    # so threshold sweeps cross them.
    distractor_label = LABELS[(objects[0].class_index + 3) % len(LABELS)]
    (p,) = rng.floats(frame_id, "tag_prob", distractor_label, n=1)
    tags.append(
        AudioTag(distractor_label, LABELS.index(distractor_label), round(0.1 + 0.35 * p, 4))
    )
    tags.sort(key=lambda tag: -tag.probability)
    records[BackendRecordKey(frame_id, "audio_tags")] = tuple(tags)

    prompt_boxes: dict[str, BoundingBox] = {}

    # Grounded boxes per tag label; the distractor grounds nothing.
    for tag in tags:
        matching = [o for o in objects if o.label == tag.label]
        boxes = []
        for obj in matching:
            (score,) = rng.floats(frame_id, "grounded_score", tag.label, n=1)
            boxes.append(ScoredBox(obj.box, round(0.6 + 0.35 * score, 4)))
            prompt_boxes[box_qualifier(obj.box)] = obj.box
        records[BackendRecordKey(frame_id, "grounded_boxes", tag.label)] = tuple(boxes)

    # Proposals: every object plus background boxes with spread objectness.
    proposals = []
    for i, obj in enumerate(objects):
        (score,) = rng.floats(frame_id, "objectness", i, n=1)
        proposals.append(ScoredBox(obj.box, round(0.7 + 0.25 * score, 4)))
        prompt_boxes[box_qualifier(obj.box)] = obj.box
    n_background = 2
    for i in range(n_background):
        fx, fy, fw, fh, score = rng.floats(frame_id, "bg_box", i, n=5)
        w = 20 + int(fw * 30)
        h = 20 + int(fh * 30)
        x0 = int(fx * (FRAME_SIZE - w - 2)) + 1
        y0 = int(fy * (FRAME_SIZE - h - 2)) + 1
        box = BoundingBox(float(x0), float(y0), float(x0 + w), float(y0 + h))
        proposals.append(ScoredBox(box, round(0.1 + 0.8 * score, 4)))
        prompt_boxes[box_qualifier(box)] = box
    records[BackendRecordKey(frame_id, "proposals")] = tuple(proposals)

    candidate_masks: list[BinaryMask] = []

    def _candidate_for_box(box: BoundingBox, origin: str) -> MaskCandidate:
        mask = rasterize_box(_inset(box, 2.0), FRAME_SIZE, FRAME_SIZE)
        if mask.is_empty:
            mask = rasterize_box(box, FRAME_SIZE, FRAME_SIZE)
        is_object = any(box == o.box for o in objects)
        (q,) = rng.floats(frame_id, "quality", origin, n=1)
        quality = 0.89 + 0.1 * q if is_object else 0.3 + 0.62 * q
        return MaskCandidate(mask, round(quality, 4), origin)

    for qualifier, box in prompt_boxes.items():
        cand = _candidate_for_box(box, qualifier)
        records[BackendRecordKey(frame_id, "mask_candidates", qualifier)] = (cand,)
        candidate_masks.append(cand.mask)

    # Grid-point prompts: points inside an object return that object's mask,
    # background points return a local blob.
    for x, y in grid_points(FRAME_SIZE, FRAME_SIZE, FIXTURE_GRID_SIZE):
        qualifier = point_qualifier(x, y)
        hit = None
        for obj in objects:
            if obj.box.x_min <= x < obj.box.x_max and obj.box.y_min <= y < obj.box.y_max:
                hit = obj
                break
        if hit is not None:
            mask = rasterize_box(_inset(hit.box, 2.0), FRAME_SIZE, FRAME_SIZE)
            (q,) = rng.floats(frame_id, "point_quality", qualifier, n=1)
            quality = round(0.89 + 0.1 * q, 4)
        else:
            half, q = rng.floats(frame_id, "point_blob", qualifier, n=2)
            r = 6.0 + half * 14.0
            mask = rasterize_box(
                BoundingBox(x - r, y - r, x + r, y + r), FRAME_SIZE, FRAME_SIZE
            )
            quality = round(0.3 + 0.62 * q, 4)
        cand = MaskCandidate(mask, quality, qualifier)
        records[BackendRecordKey(frame_id, "mask_candidates", qualifier)] = (cand,)
        candidate_masks.append(mask)

    # Embeddings: audio, every proposal crop, and the tight box of every
    # candidate mask (what the grid pipeline embeds after NMS).
    audio = np.zeros(EMBEDDING_DIM)
    for obj in objects:
        audio = audio + protos[obj.label]
    audio_noise = rng.unit("audio_noise", frame_id, dim=EMBEDDING_DIM)
    audio = audio + 0.03 * audio_noise
    records[BackendRecordKey(frame_id, "audio_embedding")] = _embedding(
        audio / np.linalg.norm(audio)
    )

    crop_boxes: dict[str, BoundingBox] = {}
    for sb in proposals:
        crop_boxes[crop_qualifier(sb.box)] = sb.box
    for mask in candidate_masks:
        tight = tight_bbox(mask)
        if tight is not None:
            crop_boxes[crop_qualifier(tight)] = tight
    for qualifier, box in crop_boxes.items():
        records[BackendRecordKey(frame_id, "image_embedding", qualifier)] = (
            _crop_embedding(rng, frame_id, box, objects, protos)
        )
