"""Export jobs: run a model set over a dataset and emit a bundle.

An export records *unthresholded* model outputs (the full tag list, every
proposal, candidates for every prompt the engine may issue) so one bundle
supports arbitrary threshold sweeps downstream. Thresholds never apply
here. Records are accumulated per frame and the bundle directory appears
atomically once the job finishes; per-frame model failures are logged and
mark the manifest incomplete instead of aborting the whole job.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bundle_writer import (
    BundleWriter,
    box_qualifier,
    crop_qualifier,
    grid_points,
    point_qualifier,
    tight_box,
)
from .media import FRAME_SIZE, MediaError, prepare_segment, read_image, read_wav
from .models import ModelSet, create_model_set

FRAMES_PER_VIDEO = 5

ALL_CAPABILITIES = (
    "audio_tags",
    "grounded_boxes",
    "proposals",
    "mask_candidates",
    "embeddings",
)


class ExportError(Exception):
    """The dataset tree or job configuration is unusable."""


@dataclass
class ExportJob:
    dataset_root: Path
    split: str
    out_dir: Path
    capabilities: tuple[str, ...] = ALL_CAPABILITIES
    model_set: str = "analytic"
    grid_size: int = 16
    top_k_phrases: int = 8
    embedding_dim: int = 16
    device: str = "cpu"
    dry_run: bool = False

    def __post_init__(self):
        self.dataset_root = Path(self.dataset_root)
        self.out_dir = Path(self.out_dir)
        unknown = set(self.capabilities) - set(ALL_CAPABILITIES)
        if unknown:
            raise ExportError(f"unknown capabilities: {sorted(unknown)}")
        if self.grid_size < 1 or self.top_k_phrases < 1 or self.embedding_dim < 1:
            raise ExportError("grid_size, top_k_phrases, embedding_dim must be positive")


@dataclass
class FrameMedia:
    frame_id: str
    image: np.ndarray
    audio: np.ndarray
    rate: int


@dataclass
class ExportReport:
    bundle_dir: Path | None
    frames_exported: int
    errors: list[str] = field(default_factory=list)


def scan_dataset(root: Path, split: str) -> list[tuple[str, Path, Path]]:
    """Validate the dataset layout; returns (frame_id, image, audio) triples."""
    split_dir = Path(root) / split
    if not split_dir.is_dir():
        raise ExportError(f"split directory not found: {split_dir}")
    triples = []
    video_ids = sorted(p.name for p in split_dir.iterdir() if p.is_dir())
    if not video_ids:
        raise ExportError(f"no videos under {split_dir}")
    for video_id in video_ids:
        for t in range(1, FRAMES_PER_VIDEO + 1):
            image = split_dir / video_id / "frames" / f"{t}.png"
            audio = split_dir / video_id / "audio" / f"{t}.wav"
            if not image.is_file():
                raise ExportError(f"missing frame {image}")
            if not audio.is_file():
                raise ExportError(f"missing audio {audio}")
            triples.append((f"{video_id}/{t}", image, audio))
    return triples


# --- per-capability exports (unthresholded by design) ----------------------


def export_audio_tags(models: ModelSet, media: FrameMedia) -> list[tuple[str, int, float]]:
    segment = prepare_segment(media.audio, media.rate)
    tags = models.audio_tags(segment, media.rate)
    for _, index, probability in tags:
        if not (0.0 <= probability <= 1.0):
            raise ExportError(f"tag probability out of range: {probability}")
        if not (0 <= index <= 520):
            raise ExportError(f"class index out of range: {index}")
    return tags


def export_grounded_boxes(
    models: ModelSet, media: FrameMedia, phrases: list[str]
) -> dict[str, list]:
    return {phrase: models.ground(media.image, phrase) for phrase in phrases}


def export_proposals(models: ModelSet, media: FrameMedia) -> list:
    return models.propose(media.image)


def export_masks(
    models: ModelSet, media: FrameMedia, prompts: dict[str, object]
) -> dict[str, list]:
    """Candidates per prompt qualifier; prompts map qualifier -> box or point."""
    out = {}
    for qualifier, prompt in prompts.items():
        if qualifier.startswith("box:"):
            out[qualifier] = models.segment_box(media.image, prompt)
        else:
            x, y = prompt
            out[qualifier] = models.segment_point(media.image, x, y)
    return out


def export_embeddings(
    models: ModelSet, media: FrameMedia, crops: dict[str, tuple]
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    segment = prepare_segment(media.audio, media.rate)
    audio_embedding = models.embed_audio(segment, media.rate)
    crop_embeddings = {
        qualifier: models.embed_image_crop(media.image, box)
        for qualifier, box in crops.items()
    }
    return audio_embedding, crop_embeddings


def _export_frame(job: ExportJob, models: ModelSet, writer: BundleWriter, media: FrameMedia):
    frame_id = media.frame_id
    writer.add_frame(frame_id, FRAME_SIZE, FRAME_SIZE)
    wants = set(job.capabilities)

    tags = export_audio_tags(models, media)
    if "audio_tags" in wants:
        writer.add_audio_tags(frame_id, tags)

    prompt_boxes: dict[str, tuple] = {}

    if "grounded_boxes" in wants:
        phrases = [label for label, _, _ in tags[: job.top_k_phrases]]
        grounded = export_grounded_boxes(models, media, phrases)
        for phrase, scored in grounded.items():
            writer.add_grounded_boxes(frame_id, phrase, scored)
            for box, _ in scored:
                prompt_boxes[box_qualifier(box)] = box

    proposals = []
    if "proposals" in wants or "embeddings" in wants:
        proposals = export_proposals(models, media)
    if "proposals" in wants:
        writer.add_proposals(frame_id, proposals)
        for box, _ in proposals:
            prompt_boxes[box_qualifier(box)] = box

    candidate_masks: list[np.ndarray] = []
    if "mask_candidates" in wants:
        prompts: dict[str, object] = dict(prompt_boxes)
        for x, y in grid_points(FRAME_SIZE, FRAME_SIZE, job.grid_size):
            prompts[point_qualifier(x, y)] = (x, y)
        for qualifier, candidates in export_masks(models, media, prompts).items():
            writer.add_mask_candidates(frame_id, qualifier, candidates)
            candidate_masks.extend(mask for mask, _ in candidates)

    if "embeddings" in wants:
        crops: dict[str, tuple] = {}
        for box, _ in proposals:
            crops[crop_qualifier(box)] = box
        for mask in candidate_masks:
            tight = tight_box(mask)
            if tight is not None:
                crops[crop_qualifier(tight)] = tight
        audio_embedding, crop_embeddings = export_embeddings(models, media, crops)
        writer.add_embedding(frame_id, "audio_embedding", None, audio_embedding)
        for qualifier, vector in crop_embeddings.items():
            writer.add_embedding(frame_id, "image_embedding", qualifier, vector)


def run_export(job: ExportJob) -> ExportReport:
    """Execute the job; returns the bundle path and any per-frame failures."""
    triples = scan_dataset(job.dataset_root, job.split)
    if job.dry_run:
        return ExportReport(bundle_dir=None, frames_exported=len(triples))

    models = create_model_set(job.model_set, embedding_dim=job.embedding_dim)
    writer = BundleWriter(job.out_dir, embedding_dim=job.embedding_dim)
    errors: list[str] = []
    exported = 0
    for frame_id, image_path, audio_path in triples:
        try:
            image = read_image(image_path)
            audio, rate = read_wav(audio_path)
            media = FrameMedia(frame_id, image, audio, rate)
            _export_frame(job, models, writer, media)
            exported += 1
        except (MediaError, ExportError, ValueError) as err:
            errors.append(f"{frame_id}: {err}")
            print(f"export error on {frame_id}: {err}", file=sys.stderr)
    if errors:
        writer.incomplete = True

    info = {
        "dataset_root": str(job.dataset_root),
        "split": job.split,
        "capabilities": list(job.capabilities),
        "grid_size": job.grid_size,
        "top_k_phrases": job.top_k_phrases,
        "models": models.info(),
        "errors": errors,
    }
    bundle_dir = writer.finalize(extra_files={"export_info.json": info})
    return ExportReport(bundle_dir=bundle_dir, frames_exported=exported, errors=errors)
