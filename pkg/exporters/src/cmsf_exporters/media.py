"""Media decoding for export jobs.

The engine never opens media content; exporters do. Images are resized to
the 224x224 working space before any model sees them, so every emitted
coordinate lives in that space. Audio is padded or truncated to the
tagger's 960 ms window.
"""

from __future__ import annotations

import wave

import numpy as np
from PIL import Image

FRAME_SIZE = 224
TAGGER_WINDOW_MS = 960


class MediaError(Exception):
    """A media file could not be decoded."""


def read_image(path, size: int = FRAME_SIZE) -> np.ndarray:
    """Decode an image and bilinearly resize it to (size, size, 3) uint8."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((size, size), Image.BILINEAR)
    except Exception as err:
        raise MediaError(f"cannot decode image {path}: {err}") from err
    return np.asarray(rgb, dtype=np.uint8)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Decode a PCM WAV file to (mono float samples in [-1, 1], rate)."""
    try:
        with wave.open(str(path), "rb") as wav:
            rate = wav.getframerate()
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            raw = wav.readframes(wav.getnframes())
    except Exception as err:
        raise MediaError(f"cannot decode audio {path}: {err}") from err
    if width == 2:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 1:
        samples = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    else:
        raise MediaError(f"unsupported sample width {width} bytes in {path}")
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def prepare_segment(
    samples: np.ndarray, rate: int, target_ms: int = TAGGER_WINDOW_MS
) -> np.ndarray:
    """Pad with silence or truncate to the tagger window."""
    target = int(rate * target_ms / 1000)
    if len(samples) >= target:
        return samples[:target]
    padded = np.zeros(target, dtype=np.float64)
    padded[: len(samples)] = samples
    return padded
