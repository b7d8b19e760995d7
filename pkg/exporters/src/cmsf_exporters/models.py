"""Model-set interface and registry.

A model set bundles the five capabilities an export job needs: audio
tagging, phrase-grounded detection, class-agnostic proposals, promptable
segmentation, and joint embedding. Heavyweight checkpoint-backed sets can
register themselves here; the built-in ``analytic`` set is a deterministic,
content-driven stand-in that needs no checkpoints and keeps export jobs
reproducible end to end.

All methods receive media already normalized by :mod:`.media` (224x224
uint8 RGB images, mono float audio) and must return plain Python scalars
and numpy arrays; nothing backend-specific may leak into records.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Callable

import numpy as np

AUDIO_CLASS_COUNT = 521

Box = tuple[float, float, float, float]


class ModelSet(ABC):
    """The capability surface an export job runs against."""

    @abstractmethod
    def info(self) -> dict:
        """Identifying metadata (model/checkpoint names) for the export log."""

    @abstractmethod
    def audio_tags(self, samples: np.ndarray, rate: int) -> list[tuple[str, int, float]]:
        """Full ranked (label, class_index, probability) list, best first."""

    @abstractmethod
    def ground(self, image: np.ndarray, phrase: str) -> list[tuple[Box, float]]:
        """Boxes matching a text phrase, with confidence scores."""

    @abstractmethod
    def propose(self, image: np.ndarray) -> list[tuple[Box, float]]:
        """Class-agnostic proposals, score carries objectness."""

    @abstractmethod
    def segment_box(self, image: np.ndarray, box: Box) -> list[tuple[np.ndarray, float]]:
        """(mask, quality) candidates for a box prompt."""

    @abstractmethod
    def segment_point(
        self, image: np.ndarray, x: float, y: float
    ) -> list[tuple[np.ndarray, float]]:
        """(mask, quality) candidates for a point prompt."""

    @abstractmethod
    def embed_image_crop(self, image: np.ndarray, box: Box) -> np.ndarray:
        """Joint-space embedding of the image cropped to the box."""

    @abstractmethod
    def embed_audio(self, samples: np.ndarray, rate: int) -> np.ndarray:
        """Joint-space embedding of an audio segment."""


_REGISTRY: dict[str, Callable[..., ModelSet]] = {}


def register_model_set(name: str):
    def deco(factory: Callable[..., ModelSet]):
        _REGISTRY[name] = factory
        return factory

    return deco


def available_model_sets() -> list[str]:
    return sorted(_REGISTRY)


def create_model_set(name: str, **kwargs) -> ModelSet:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown model set {name!r}; available: {available_model_sets()}"
        ) from None
    return factory(**kwargs)


# Importing registers the built-in set.
from . import analytic as _analytic  # noqa: E402,F401
