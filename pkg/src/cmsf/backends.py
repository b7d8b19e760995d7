"""Abstract access to the five foundation-model capabilities.

Pipelines never talk to a neural network: they consume one of these
backends. :class:`RecordedBackend` replays an interchange bundle as a pure
key-value store, and :class:`MockBackend` synthesizes answers as a
deterministic function of (seed, key) for tests.
"""

from __future__ import annotations

import hashlib
import math
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

from .embedding import EmbeddingVector
from .errors import CorruptBundleError, MissingRecordError
from .geometry import BinaryMask, BoundingBox, ScoredBox, rasterize_box

__all__ = [
    "AUDIO_CLASS_COUNT",
    "CAPABILITIES",
    "AudioTag",
    "MaskCandidate",
    "BackendRecordKey",
    "Backend",
    "RecordedBackend",
    "MockBackend",
    "box_qualifier",
    "point_qualifier",
    "crop_qualifier",
]

# The audio tagger's label space: 521 generic event classes.
AUDIO_CLASS_COUNT = 521

CAPABILITIES = (
    "audio_tags",
    "grounded_boxes",
    "proposals",
    "mask_candidates",
    "image_embedding",
    "audio_embedding",
)

Point = tuple[float, float]
Prompts = Union[Sequence[BoundingBox], Sequence[Point]]


@dataclass(frozen=True)
class AudioTag:
    """One ranked label from the audio tagger."""

    label: str
    class_index: int
    probability: float

    def __post_init__(self):
        if not (0 <= self.class_index < AUDIO_CLASS_COUNT):
            raise ValueError(
                f"class_index must be in [0, {AUDIO_CLASS_COUNT - 1}], "
                f"got {self.class_index!r}"
            )
        if not (
            math.isfinite(self.probability) and 0.0 <= self.probability <= 1.0
        ):
            raise ValueError(f"probability must be in [0, 1], got {self.probability!r}")


@dataclass(frozen=True)
class MaskCandidate:
    """A segmenter output: mask, quality estimate, and the prompt it came from."""

    mask: BinaryMask
    quality: float
    prompt_origin: str

    def __post_init__(self):
        if not (math.isfinite(self.quality) and 0.0 <= self.quality <= 1.0):
            raise ValueError(f"quality must be in [0, 1], got {self.quality!r}")


@dataclass(frozen=True)
class BackendRecordKey:
    """Unique address of one record in a bundle."""

    frame_id: str
    capability: str
    qualifier: Optional[str] = None

    def __post_init__(self):
        if self.capability not in CAPABILITIES:
            raise ValueError(f"unknown capability {self.capability!r}")

    def __str__(self) -> str:
        if self.qualifier is None:
            return f"{self.frame_id}/{self.capability}"
        return f"{self.frame_id}/{self.capability}[{self.qualifier}]"


def _float_token(value: float) -> str:
    return repr(float(value))


def box_qualifier(box: BoundingBox) -> str:
    """Canonical record qualifier for a box prompt."""
    coords = (box.x_min, box.y_min, box.x_max, box.y_max)
    return "box:" + ",".join(_float_token(c) for c in coords)


def point_qualifier(x: float, y: float) -> str:
    """Canonical record qualifier for a point prompt."""
    return f"point:{_float_token(x)},{_float_token(y)}"


def crop_qualifier(box: BoundingBox) -> str:
    """Canonical qualifier for an image-crop embedding.

    Crop coordinates are rounded to integers (ties to even) so that
    independently produced bundles agree on the key for the same region.
    """
    coords = (box.x_min, box.y_min, box.x_max, box.y_max)
    return "crop:" + ",".join(str(int(round(float(c)))) for c in coords)


class Backend(ABC):
    """The capability surface every pipeline variant runs against.

    Implementations must be safe to call from concurrent per-frame workers
    and must return identical values for identical queries.
    """

    @abstractmethod
    def tag_audio(self, frame_id: str) -> list[AudioTag]:
        """Ranked audio tags for the frame's audio segment, best first."""

    @abstractmethod
    def detect_grounded(self, frame_id: str, phrases: Sequence[str]) -> list[ScoredBox]:
        """Boxes grounded on each phrase, concatenated in phrase order."""

    @abstractmethod
    def propose_class_agnostic(self, frame_id: str) -> list[ScoredBox]:
        """Class-agnostic proposals; score carries objectness."""

    @abstractmethod
    def segment(self, frame_id: str, prompts: Prompts) -> list[MaskCandidate]:
        """Mask candidates for box or point prompts, in prompt order."""

    @abstractmethod
    def embed_image_crop(self, frame_id: str, box: BoundingBox) -> EmbeddingVector:
        """Joint-space embedding of the frame cropped to the given box."""

    @abstractmethod
    def embed_audio(self, frame_id: str) -> EmbeddingVector:
        """Joint-space embedding of the frame's audio segment."""


def _prompt_qualifiers(prompts: Prompts) -> list[str]:
    if len(prompts) == 0:
        raise ValueError("segment requires at least one prompt")
    qualifiers = []
    for prompt in prompts:
        if isinstance(prompt, BoundingBox):
            qualifiers.append(box_qualifier(prompt))
        else:
            x, y = prompt
            qualifiers.append(point_qualifier(x, y))
    return qualifiers


class RecordedBackend(Backend):
    """Replay of a validated interchange bundle; read-only after construction."""

    def __init__(
        self,
        records: Mapping[BackendRecordKey, object],
        frame_dims: Mapping[str, tuple[int, int]],
        embedding_dim: int,
    ):
        self.embedding_dim = int(embedding_dim)
        self.frame_dims = dict(frame_dims)
        self._records = dict(records)
        self._validate()

    def _validate(self) -> None:
        if self.embedding_dim < 1:
            raise CorruptBundleError(
                f"embedding_dim must be positive, got {self.embedding_dim}"
            )
        for key, value in self._records.items():
            if key.frame_id not in self.frame_dims:
                raise CorruptBundleError(f"record {key} references an unknown frame")
            width, height = self.frame_dims[key.frame_id]
            if key.capability in ("grounded_boxes", "proposals"):
                for sb in value:
                    if not sb.box.is_non_negative():
                        raise CorruptBundleError(
                            f"record {key} holds a box with negative coordinates"
                        )
            elif key.capability == "mask_candidates":
                for cand in value:
                    if (cand.mask.width, cand.mask.height) != (width, height):
                        raise CorruptBundleError(
                            f"record {key} holds a {cand.mask.width}x"
                            f"{cand.mask.height} mask for a {width}x{height} frame"
                        )
            elif key.capability in ("image_embedding", "audio_embedding"):
                if value.dim != self.embedding_dim:
                    raise CorruptBundleError(
                        f"record {key} has dim {value.dim}, bundle declares "
                        f"{self.embedding_dim}"
                    )
                if all(v == 0.0 for v in value.values):
                    raise CorruptBundleError(f"record {key} is a zero embedding")

    @property
    def records(self) -> dict[BackendRecordKey, object]:
        """Copy of the full record map (for re-export and inspection)."""
        return dict(self._records)

    def _lookup(self, key: BackendRecordKey):
        try:
            return self._records[key]
        except KeyError:
            raise MissingRecordError(key) from None

    def tag_audio(self, frame_id: str) -> list[AudioTag]:
        return list(self._lookup(BackendRecordKey(frame_id, "audio_tags")))

    def detect_grounded(self, frame_id: str, phrases: Sequence[str]) -> list[ScoredBox]:
        if not phrases:
            raise ValueError("detect_grounded requires at least one phrase")
        boxes: list[ScoredBox] = []
        for phrase in phrases:
            key = BackendRecordKey(frame_id, "grounded_boxes", phrase)
            boxes.extend(self._lookup(key))
        return boxes

    def propose_class_agnostic(self, frame_id: str) -> list[ScoredBox]:
        return list(self._lookup(BackendRecordKey(frame_id, "proposals")))

    def segment(self, frame_id: str, prompts: Prompts) -> list[MaskCandidate]:
        candidates: list[MaskCandidate] = []
        for qualifier in _prompt_qualifiers(prompts):
            key = BackendRecordKey(frame_id, "mask_candidates", qualifier)
            candidates.extend(self._lookup(key))
        return candidates

    def embed_image_crop(self, frame_id: str, box: BoundingBox) -> EmbeddingVector:
        key = BackendRecordKey(frame_id, "image_embedding", crop_qualifier(box))
        return self._lookup(key)

    def embed_audio(self, frame_id: str) -> EmbeddingVector:
        return self._lookup(BackendRecordKey(frame_id, "audio_embedding"))


class MockBackend(Backend):
    """Synthesizes plausible answers as a pure function of (seed, key).

    Two instances with the same seed agree exactly, on any platform: all
    pseudo-randomness derives from SHA-256 of the seed and the query key,
    never from process state.
    """

    def __init__(
        self,
        seed: int,
        width: int = 224,
        height: int = 224,
        embedding_dim: int = 16,
        vocabulary: Sequence[str] = (
            "dog bark",
            "piano",
            "human speech",
            "engine",
            "guitar",
            "bird song",
            "siren",
            "water",
        ),
    ):
        self.seed = int(seed)
        self.width = int(width)
        self.height = int(height)
        self.embedding_dim = int(embedding_dim)
        self.vocabulary = tuple(vocabulary)

    def _floats(self, *parts, n: int) -> list[float]:
        """n floats in [0, 1) derived from the seed and the key parts."""
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

    def _box(self, *parts) -> BoundingBox:
        fx, fy, fw, fh = self._floats(*parts, n=4)
        w = 8.0 + fw * (self.width / 2 - 8.0)
        h = 8.0 + fh * (self.height / 2 - 8.0)
        x0 = fx * (self.width - w)
        y0 = fy * (self.height - h)
        return BoundingBox(
            round(x0, 2), round(y0, 2), round(x0 + w, 2), round(y0 + h, 2)
        )

    def tag_audio(self, frame_id: str) -> list[AudioTag]:
        rolls = self._floats(frame_id, "audio_tags", n=6)
        count = 2 + int(rolls[0] * 2)
        tags = []
        for i in range(count):
            label_idx = int(rolls[1 + i] * len(self.vocabulary)) % len(self.vocabulary)
            prob = 0.95 - 0.3 * i - 0.1 * rolls[1 + i]
            tags.append(
                AudioTag(self.vocabulary[label_idx], label_idx, round(max(prob, 0.01), 4))
            )
        tags.sort(key=lambda t: -t.probability)
        return tags

    def detect_grounded(self, frame_id: str, phrases: Sequence[str]) -> list[ScoredBox]:
        if not phrases:
            raise ValueError("detect_grounded requires at least one phrase")
        boxes = []
        for phrase in phrases:
            (count_roll,) = self._floats(frame_id, "grounded_boxes", phrase, n=1)
            count = int(count_roll * 3)  # 0..2 boxes per phrase
            for i in range(count):
                (score,) = self._floats(frame_id, "grounded_score", phrase, i, n=1)
                box = self._box(frame_id, "grounded_box", phrase, i)
                boxes.append(ScoredBox(box, round(0.3 + 0.7 * score, 4)))
        return boxes

    def propose_class_agnostic(self, frame_id: str) -> list[ScoredBox]:
        (count_roll,) = self._floats(frame_id, "proposals", n=1)
        count = 2 + int(count_roll * 3)
        boxes = []
        for i in range(count):
            (score,) = self._floats(frame_id, "proposal_score", i, n=1)
            boxes.append(
                ScoredBox(self._box(frame_id, "proposal_box", i), round(score, 4))
            )
        return boxes

    def segment(self, frame_id: str, prompts: Prompts) -> list[MaskCandidate]:
        candidates = []
        for qualifier in _prompt_qualifiers(prompts):
            quality, inset_roll = self._floats(frame_id, "segment", qualifier, n=2)
            if qualifier.startswith("box:"):
                coords = [float(c) for c in qualifier[4:].split(",")]
                base = BoundingBox(*coords)
            else:
                x, y = (float(c) for c in qualifier[6:].split(","))
                half = 6.0 + inset_roll * 20.0
                base = BoundingBox(x - half, y - half, x + half, y + half)
            mask = rasterize_box(base, self.width, self.height)
            candidates.append(
                MaskCandidate(mask, round(0.7 + 0.3 * quality, 4), qualifier)
            )
        return candidates

    def _embedding(self, *parts) -> EmbeddingVector:
        raw = self._floats(*parts, n=self.embedding_dim)
        centered = [2.0 * v - 1.0 for v in raw]
        norm = math.sqrt(sum(v * v for v in centered))
        if norm == 0.0:  # probability ~0, but keep the contract airtight
            centered[0] = 1.0
            norm = 1.0
        return EmbeddingVector(tuple(v / norm for v in centered))

    def embed_image_crop(self, frame_id: str, box: BoundingBox) -> EmbeddingVector:
        return self._embedding(frame_id, "image_embedding", crop_qualifier(box))

    def embed_audio(self, frame_id: str) -> EmbeddingVector:
        return self._embedding(frame_id, "audio_embedding")
