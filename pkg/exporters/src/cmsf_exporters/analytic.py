"""The ``analytic`` model set: deterministic, content-driven stand-ins.

Every capability is computed directly from pixel and sample statistics, so
exports are exactly reproducible on any machine with no checkpoints, no
GPU, and no randomness. The cross-modal link is a shared angle: audio maps
its dominant-frequency class to a hue angle, image crops map their mean hue
to the same circle, so crops showing the sounding object score high cosine
similarity against the audio embedding.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
from scipy import ndimage

from .models import AUDIO_CLASS_COUNT, ModelSet, register_model_set

Box = tuple[float, float, float, float]

MIN_REGION_AREA = 64
SATURATION_FLOOR = 0.22
HUE_MATCH_WINDOW = 0.09


def class_label(class_index: int) -> str:
    return f"event_{class_index:03d}"


def class_for_label(label: str) -> int | None:
    if label.startswith("event_") and label[6:].isdigit():
        index = int(label[6:])
        if 0 <= index < AUDIO_CLASS_COUNT:
            return index
    return None


def hue_for_class(class_index: int) -> float:
    """Class to hue mapping shared by the audio and image sides."""
    return (class_index % 8) / 8.0


def _phrase_hue(phrase: str) -> float:
    index = class_for_label(phrase)
    if index is not None:
        return hue_for_class(index)
    digest = hashlib.sha256(phrase.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") / 2**32


def _clamp(value: float, lo: float = 0.0, hi: float = 1.0) -> float:
    return float(min(hi, max(lo, value)))


def _circular_distance(a: float, b: float) -> float:
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def _hsv(image: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rgb = image.astype(np.float64) / 255.0
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    delta = mx - mn
    sat = np.where(mx > 0, delta / np.maximum(mx, 1e-12), 0.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    hue = np.zeros_like(mx)
    safe = np.maximum(delta, 1e-12)
    hue = np.where(mx == r, ((g - b) / safe) % 6.0, hue)
    hue = np.where(mx == g, (b - r) / safe + 2.0, hue)
    hue = np.where(mx == b, (r - g) / safe + 4.0, hue)
    hue = np.where(delta == 0, 0.0, hue) / 6.0
    return hue, sat, mx


def _circular_mean(hues: np.ndarray) -> float:
    angles = hues * 2.0 * math.pi
    mean = math.atan2(float(np.sin(angles).mean()), float(np.cos(angles).mean()))
    return (mean / (2.0 * math.pi)) % 1.0


class _Region:
    __slots__ = ("mask", "box", "area", "mean_hue", "mean_sat")

    def __init__(self, mask: np.ndarray, hue: np.ndarray, sat: np.ndarray):
        self.mask = mask
        ys, xs = np.nonzero(mask)
        self.box = (
            float(xs.min()),
            float(ys.min()),
            float(xs.max() + 1),
            float(ys.max() + 1),
        )
        self.area = int(mask.sum())
        self.mean_hue = _circular_mean(hue[mask])
        self.mean_sat = float(sat[mask].mean())


@register_model_set("analytic")
class AnalyticModelSet(ModelSet):
    """Checkpoint-free model set computing everything from media content."""

    def __init__(self, embedding_dim: int = 16):
        if embedding_dim < 4:
            raise ValueError("embedding_dim must be at least 4")
        self.embedding_dim = int(embedding_dim)
        self._region_cache: dict[bytes, list[_Region]] = {}

    def info(self) -> dict:
        return {
            "model_set": "analytic",
            "embedding_dim": self.embedding_dim,
            "checkpoints": {},  # nothing to pin: fully analytic
        }

    # --- shared image analysis ----------------------------------------

    def _regions(self, image: np.ndarray) -> list[_Region]:
        key = hashlib.sha1(image.tobytes()).digest() + bytes(str(image.shape), "ascii")
        cached = self._region_cache.get(key)
        if cached is not None:
            return cached
        hue, sat, val = _hsv(image)
        salient = (sat > SATURATION_FLOOR) & (val > 0.15)
        labels, count = ndimage.label(salient)
        regions = []
        for index in range(1, count + 1):
            mask = labels == index
            if int(mask.sum()) >= MIN_REGION_AREA:
                regions.append(_Region(mask, hue, sat))
        regions.sort(key=lambda r: -r.area)
        self._region_cache[key] = regions
        return regions

    # --- audio tagging --------------------------------------------------

    def _dominant_class(self, samples: np.ndarray, rate: int) -> tuple[int, float]:
        if len(samples) == 0 or not np.any(samples):
            return 0, 0.0
        spectrum = np.abs(np.fft.rfft(samples))
        spectrum[0] = 0.0  # ignore DC
        peak = int(np.argmax(spectrum))
        total = float(spectrum.sum())
        ratio = float(spectrum[peak]) / total if total > 0 else 0.0
        freq_hz = peak * rate / len(samples)
        return int(round(freq_hz)) % AUDIO_CLASS_COUNT, ratio

    def audio_tags(self, samples: np.ndarray, rate: int) -> list[tuple[str, int, float]]:
        top_class, ratio = self._dominant_class(samples, rate)
        top_probability = _clamp(0.6 + 0.3 * ratio, 0.0, 0.95)
        tags = []
        for k in range(AUDIO_CLASS_COUNT):
            index = (top_class + k) % AUDIO_CLASS_COUNT
            probability = top_probability * 0.5**k if k < 64 else 0.0
            tags.append((class_label(index), index, float(probability)))
        return tags

    # --- detection -------------------------------------------------------

    def ground(self, image: np.ndarray, phrase: str) -> list[tuple[Box, float]]:
        target = _phrase_hue(phrase)
        boxes = []
        for region in self._regions(image):
            distance = _circular_distance(region.mean_hue, target)
            if distance < HUE_MATCH_WINDOW:
                score = _clamp(0.6 + 0.39 * (1.0 - distance / HUE_MATCH_WINDOW))
                boxes.append((region.box, score))
        return boxes

    def propose(self, image: np.ndarray) -> list[tuple[Box, float]]:
        return [
            (region.box, _clamp(0.55 + 0.4 * region.mean_sat, 0.0, 0.95))
            for region in self._regions(image)
        ]

    # --- segmentation ----------------------------------------------------

    def _box_interior(self, image: np.ndarray, box: Box) -> np.ndarray:
        height, width = image.shape[:2]
        x0 = max(0, int(math.ceil(box[0])))
        y0 = max(0, int(math.ceil(box[1])))
        x1 = min(width, int(math.ceil(box[2])))
        y1 = min(height, int(math.ceil(box[3])))
        mask = np.zeros((height, width), dtype=bool)
        if x1 > x0 and y1 > y0:
            mask[y0:y1, x0:x1] = True
        return mask

    def segment_box(self, image: np.ndarray, box: Box) -> list[tuple[np.ndarray, float]]:
        interior = self._box_interior(image, box)
        best = None
        best_inter = 0
        for region in self._regions(image):
            inter = int((region.mask & interior).sum())
            if inter > best_inter:
                best, best_inter = region, inter
        if best is None:
            return [(interior, 0.45)]
        union = int((best.mask | interior).sum())
        quality = _clamp(0.6 + 0.39 * best_inter / union)
        return [(best.mask & interior, quality)]

    def segment_point(
        self, image: np.ndarray, x: float, y: float
    ) -> list[tuple[np.ndarray, float]]:
        height, width = image.shape[:2]
        col = min(width - 1, max(0, int(x)))
        row = min(height - 1, max(0, int(y)))
        for region in self._regions(image):
            if region.mask[row, col]:
                return [(region.mask.copy(), _clamp(0.9 + 0.08 * region.mean_sat))]
        # Background point: a local low-confidence blob, like an over-eager
        # segmenter would produce; the engine's quality floor removes it.
        blob = self._box_interior(image, (x - 8.0, y - 8.0, x + 8.0, y + 8.0))
        return [(blob, 0.5)]

    # --- embeddings --------------------------------------------------------

    def _finish_embedding(self, features: list[float]) -> np.ndarray:
        vec = np.zeros(self.embedding_dim, dtype=np.float64)
        length = min(len(features), self.embedding_dim)
        vec[:length] = features[:length]
        norm = float(np.linalg.norm(vec))
        if norm < 1e-12:
            vec[0] = 1.0
            norm = 1.0
        return vec / norm

    def embed_image_crop(self, image: np.ndarray, box: Box) -> np.ndarray:
        height, width = image.shape[:2]
        x0 = min(width - 1, max(0, int(round(box[0]))))
        y0 = min(height - 1, max(0, int(round(box[1]))))
        x1 = max(x0 + 1, min(width, int(round(box[2]))))
        y1 = max(y0 + 1, min(height, int(round(box[3]))))
        crop = image[y0:y1, x0:x1]
        hue, sat, val = _hsv(crop)
        salient = sat > SATURATION_FLOOR
        mean_sat = float(sat.mean())
        if salient.any():
            angle = 2.0 * math.pi * _circular_mean(hue[salient])
            anchor = 0.8 * float(salient.mean())
        else:
            angle = 0.0
            anchor = 0.0  # desaturated crops point nowhere on the hue circle
        features = [
            anchor * math.cos(angle),
            anchor * math.sin(angle),
            0.2 * mean_sat,
            0.2 * float(val.mean()),
            0.1 * float(val.std()),
            0.1 * ((x1 - x0) * (y1 - y0)) / (width * height),
        ]
        return self._finish_embedding(features)

    def embed_audio(self, samples: np.ndarray, rate: int) -> np.ndarray:
        top_class, ratio = self._dominant_class(samples, rate)
        angle = 2.0 * math.pi * hue_for_class(top_class)
        rms = float(np.sqrt(np.mean(samples**2))) if len(samples) else 0.0
        features = [
            0.8 * math.cos(angle),
            0.8 * math.sin(angle),
            0.2 * ratio,
            0.2 * _clamp(rms * 4.0),
        ]
        return self._finish_embedding(features)
