"""Joint-embedding similarity scoring and threshold filtering.

Dot products and norms accumulate in ascending index order into a single
double-precision accumulator, which keeps results bitwise identical across
platforms and makes cosine similarity exactly symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import CmsfError, DegenerateInputError, ShapeMismatchError

__all__ = [
    "EmbeddingVector",
    "SimilarityScoredProposal",
    "cosine_similarity",
    "rank_by_similarity",
    "threshold_filter",
]


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-dimension real vector in the joint audio-visual latent space."""

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if len(values) < 1:
            raise ValueError("embedding must have at least one component")
        if not all(math.isfinite(v) for v in values):
            raise ValueError("embedding components must be finite")

    @property
    def dim(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "EmbeddingVector":
        return cls(tuple(float(v) for v in values))

    def to_json_dict(self) -> dict:
        return {"dim": self.dim, "values": list(self.values)}

    @classmethod
    def from_json_dict(cls, data: dict) -> "EmbeddingVector":
        vec = cls(tuple(data["values"]))
        if int(data["dim"]) != vec.dim:
            raise ValueError(
                f"declared dim {data['dim']} does not match {vec.dim} values"
            )
        return vec


@dataclass(frozen=True)
class SimilarityScoredProposal:
    """A proposal index paired with its cosine similarity to the query."""

    proposal_index: int
    similarity: float

    def __post_init__(self):
        if not (-1.0 <= self.similarity <= 1.0):
            raise ValueError(f"similarity must be in [-1, 1], got {self.similarity!r}")


def _dot(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    # Single accumulator, ascending index: deterministic and symmetric.
    acc = 0.0
    for x, y in zip(a, b):
        acc += x * y
    return acc


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a, b) / (|a| |b|), clamped to [-1, 1] against rounding drift."""
    if a.dim != b.dim:
        raise ShapeMismatchError(f"embedding dims differ: {a.dim} vs {b.dim}")
    norm_a = math.sqrt(_dot(a.values, a.values))
    norm_b = math.sqrt(_dot(b.values, b.values))
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateInputError("cosine similarity of a zero-norm embedding")
    sim = _dot(a.values, b.values) / (norm_a * norm_b)
    return min(1.0, max(-1.0, sim))


def rank_by_similarity(
    query: EmbeddingVector, candidates: Sequence[EmbeddingVector]
) -> list[SimilarityScoredProposal]:
    """Score every candidate against the query, sorted descending.

    The sort is stable, so ties keep input order. Errors from individual
    candidates are re-raised with the offending index attached.
    """
    scored: list[SimilarityScoredProposal] = []
    for index, candidate in enumerate(candidates):
        try:
            similarity = cosine_similarity(query, candidate)
        except CmsfError as err:
            raise type(err)(f"candidate {index}: {err}") from err
        scored.append(SimilarityScoredProposal(index, similarity))
    scored.sort(key=lambda s: -s.similarity)
    return scored


def threshold_filter(
    scored: Sequence[SimilarityScoredProposal], tau: float
) -> list[SimilarityScoredProposal]:
    """Keep entries strictly above tau, preserving order."""
    return [s for s in scored if s.similarity > tau]
