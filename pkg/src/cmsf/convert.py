"""Convert third-party dataset trees into the canonical layout.

Upstream releases of benchmark data vary in directory naming and frame
numbering, so this converter never guesses: the caller supplies format
patterns (with ``{video}`` and ``{t}`` placeholders, standard format specs
allowed, e.g. ``"{video}/imgs/{t:05d}.jpg"``) describing where frames,
audio, and ground truth live in the source tree. Images are re-encoded to
PNG when needed; audio must already be WAV (decoding audio is out of
scope).
"""

from __future__ import annotations

import shutil
from pathlib import Path
from typing import Optional, Sequence

from PIL import Image

from .dataset import FRAMES_PER_VIDEO
from .errors import DatasetError

__all__ = ["convert_tree"]


def _resolve(src: Path, pattern: str, video: str, t: int) -> Path:
    try:
        rel = pattern.format(video=video, t=t)
    except (KeyError, IndexError, ValueError) as err:
        raise DatasetError(f"bad pattern {pattern!r}: {err}") from err
    path = src / rel
    if not path.is_file():
        raise DatasetError(f"source file not found: {path}")
    return path


def _place_image(src_path: Path, dst_path: Path) -> None:
    dst_path.parent.mkdir(parents=True, exist_ok=True)
    if src_path.suffix.lower() == ".png":
        shutil.copyfile(src_path, dst_path)
        return
    try:
        with Image.open(src_path) as img:
            img.save(dst_path, format="PNG")
    except Exception as err:
        raise DatasetError(f"cannot convert image {src_path}: {err}") from err


def convert_tree(
    src,
    dst,
    split: str,
    frame_pattern: str,
    audio_pattern: str,
    gt_pattern: Optional[str] = None,
    videos: Optional[Sequence[str]] = None,
) -> list[str]:
    """Copy one split into ``<dst>/<split>/<video>/{frames,audio,gt}/<t>.*``.

    ``videos`` defaults to the sorted immediate subdirectories of ``src``.
    Frame index ``t`` runs 1..5. Returns the converted video ids.
    """
    src = Path(src)
    dst = Path(dst)
    if videos is None:
        if not src.is_dir():
            raise DatasetError(f"source directory not found: {src}")
        videos = sorted(p.name for p in src.iterdir() if p.is_dir())
    if not videos:
        raise DatasetError(f"no videos to convert under {src}")

    for video in videos:
        video_dir = dst / split / video
        for t in range(1, FRAMES_PER_VIDEO + 1):
            _place_image(
                _resolve(src, frame_pattern, video, t),
                video_dir / "frames" / f"{t}.png",
            )
            audio_src = _resolve(src, audio_pattern, video, t)
            if audio_src.suffix.lower() != ".wav":
                raise DatasetError(
                    f"audio must already be WAV, got {audio_src} "
                    "(audio transcoding is out of scope)"
                )
            (video_dir / "audio").mkdir(parents=True, exist_ok=True)
            shutil.copyfile(audio_src, video_dir / "audio" / f"{t}.wav")
            if gt_pattern is not None:
                _place_image(
                    _resolve(src, gt_pattern, video, t),
                    video_dir / "gt" / f"{t}.png",
                )
    return list(videos)
