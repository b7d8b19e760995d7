"""Exporter tests.

The single cross-component contract is the bundle format: everything an
export emits must load through the engine's `cmsf.load_bundle` with zero
validation errors and drive its pipelines. The engine package is therefore
a test dependency here (never a runtime one).
"""

import colorsys
import json
import math
import subprocess
import sys
import wave
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from cmsf_exporters.analytic import AnalyticModelSet, class_label, hue_for_class
from cmsf_exporters.cli import main
from cmsf_exporters.export import (
    ExportError,
    ExportJob,
    export_audio_tags,
    FrameMedia,
    run_export,
    scan_dataset,
)
from cmsf_exporters.media import prepare_segment, read_image, read_wav

TONE_CLASS = 220  # tone frequency in Hz doubles as the tagger class index
RATE = 16000


def write_tone(path: Path, freq: float, seconds: float = 1.0, amplitude: float = 0.5):
    n = int(RATE * seconds)
    samples = amplitude * np.sin(2 * math.pi * freq * np.arange(n) / RATE)
    pcm = (np.clip(samples, -1, 1) * 32767).astype("<i2")
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(RATE)
        wav.writeframes(pcm.tobytes())


def build_dummy_video(dataset_root: Path, split="S4", video_id="v_dummy"):
    """Five frames of one colored rectangle whose hue matches the tone class."""
    hue = hue_for_class(TONE_CLASS)
    color = tuple(int(255 * c) for c in colorsys.hsv_to_rgb(hue, 0.9, 0.9))
    video = dataset_root / split / video_id
    for t in range(1, 6):
        img = np.full((224, 224, 3), 20, dtype=np.uint8)
        x0, y0 = 60 + 3 * (t - 1), 50 + 3 * (t - 1)
        img[y0 : y0 + 80, x0 : x0 + 80] = color
        (video / "frames").mkdir(parents=True, exist_ok=True)
        Image.fromarray(img).save(video / "frames" / f"{t}.png")
        write_tone(video / "audio" / f"{t}.wav", float(TONE_CLASS))
        gt = np.zeros((224, 224), dtype=np.uint8)
        gt[y0 : y0 + 80, x0 : x0 + 80] = 255
        (video / "gt").mkdir(parents=True, exist_ok=True)
        Image.fromarray(gt).save(video / "gt" / f"{t}.png")
    return dataset_root


@pytest.fixture(scope="session")
def dummy_dataset(tmp_path_factory):
    return build_dummy_video(tmp_path_factory.mktemp("dummy_dataset"))


@pytest.fixture(scope="session")
def exported_bundle(dummy_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("export") / "bundle"
    job = ExportJob(dummy_dataset, "S4", out, grid_size=4)
    report = run_export(job)
    assert report.errors == []
    assert report.frames_exported == 5
    return out


class TestScan:
    def test_scan_counts_frames(self, dummy_dataset):
        triples = scan_dataset(dummy_dataset, "S4")
        assert len(triples) == 5

    def test_scan_rejects_missing_media(self, tmp_path):
        video = tmp_path / "S4" / "v"
        (video / "frames").mkdir(parents=True)
        with pytest.raises(ExportError, match="missing frame"):
            scan_dataset(tmp_path, "S4")


class TestAnalyticModels:
    def media(self, dummy_dataset, t=1):
        video = dummy_dataset / "S4" / "v_dummy"
        image = read_image(video / "frames" / f"{t}.png")
        audio, rate = read_wav(video / "audio" / f"{t}.wav")
        return FrameMedia(f"v_dummy/{t}", image, audio, rate)

    def test_tone_maps_to_expected_class(self, dummy_dataset):
        models = AnalyticModelSet()
        tags = export_audio_tags(models, self.media(dummy_dataset))
        assert tags[0][0] == class_label(TONE_CLASS)
        assert tags[0][2] > 0.5  # only the top tag clears the usual threshold
        assert tags[1][2] < 0.5

    def test_full_unthresholded_tag_list(self, dummy_dataset):
        models = AnalyticModelSet()
        tags = export_audio_tags(models, self.media(dummy_dataset))
        assert len(tags) == 521
        probs = [p for _, _, p in tags]
        assert probs == sorted(probs, reverse=True)
        assert all(0.0 <= p <= 1.0 for p in probs)

    def test_silent_audio_yields_valid_probabilities(self):
        models = AnalyticModelSet()
        media = FrameMedia("s/1", np.zeros((224, 224, 3), np.uint8), np.zeros(RATE), RATE)
        tags = export_audio_tags(models, media)
        assert len(tags) == 521
        assert all(0.0 <= p <= 1.0 for _, _, p in tags)

    def test_sine_tone_records_are_deterministic(self, dummy_dataset):
        first = AnalyticModelSet()
        second = AnalyticModelSet()
        media = self.media(dummy_dataset)
        assert export_audio_tags(first, media) == export_audio_tags(second, media)
        segment = prepare_segment(media.audio, media.rate)
        assert np.array_equal(
            first.embed_audio(segment, media.rate), second.embed_audio(segment, media.rate)
        )

    def test_grounding_finds_the_matching_rectangle(self, dummy_dataset):
        models = AnalyticModelSet()
        media = self.media(dummy_dataset)
        boxes = models.ground(media.image, class_label(TONE_CLASS))
        assert len(boxes) == 1
        (box, score) = boxes[0]
        assert score > 0.9
        assert box == (60.0, 50.0, 140.0, 130.0)
        assert models.ground(media.image, class_label((TONE_CLASS + 4) % 521)) == []

    def test_audio_and_matching_crop_align_in_latent_space(self, dummy_dataset):
        models = AnalyticModelSet()
        media = self.media(dummy_dataset)
        segment = prepare_segment(media.audio, media.rate)
        audio_emb = models.embed_audio(segment, media.rate)
        object_emb = models.embed_image_crop(media.image, (60, 50, 140, 130))
        background_emb = models.embed_image_crop(media.image, (0, 0, 40, 40))
        assert float(audio_emb @ object_emb) > 0.7
        assert float(audio_emb @ background_emb) < 0.3


class TestBundleContract:
    def test_loads_through_engine_with_zero_errors(self, exported_bundle):
        from cmsf import load_bundle

        backend = load_bundle(exported_bundle)  # raises on any violation
        keys = list(backend.records)
        tag_keys = [k for k in keys if k.capability == "audio_tags"]
        assert len(tag_keys) == 5  # 5 frames x 1 video
        for frame_id in backend.frame_dims:
            assert backend.propose_class_agnostic(frame_id)
            assert backend.embed_audio(frame_id).dim == 16

    def test_record_invariants_hold(self, exported_bundle):
        from cmsf import load_bundle

        backend = load_bundle(exported_bundle)
        for key, value in backend.records.items():
            if key.capability in ("grounded_boxes", "proposals"):
                for scored in value:
                    box = scored.box
                    assert 0 <= box.x_min < box.x_max <= 224
                    assert 0 <= box.y_min < box.y_max <= 224
                    assert 0.0 <= scored.score <= 1.0

    def test_export_is_deterministic(self, dummy_dataset, tmp_path):
        trees = []
        for name in ("a", "b"):
            out = tmp_path / name
            run_export(ExportJob(dummy_dataset, "S4", out, grid_size=4))
            trees.append(
                {
                    str(p.relative_to(out)): p.read_bytes()
                    for p in sorted(out.rglob("*"))
                    if p.is_file()
                }
            )
        assert trees[0] == trees[1]

    def test_engine_pipelines_run_over_exported_bundle(
        self, dummy_dataset, exported_bundle, tmp_path
    ):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"grid_size": 4}))
        for variant in ("at-gdino-sam", "owod-bind", "sam-bind"):
            out = tmp_path / f"run_{variant}"
            proc = subprocess.run(
                [
                    sys.executable, "-m", "cmsf", "run",
                    "--bundle", str(exported_bundle),
                    "--dataset", str(dummy_dataset),
                    "--split", "S4",
                    "--variant", variant,
                    "--config", str(config),
                    "--out", str(out),
                ],
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
            manifest = json.loads((out / "manifest.json").read_text())
            assert len(manifest["frames"]) == 5
            # the matching rectangle should actually be found
            masks_nonempty = [
                f for f in manifest["frames"] if f["stage_counts"].get("kept_bind", 1) > 0
            ]
            assert masks_nonempty

    def test_pipeline_output_overlaps_ground_truth(self, dummy_dataset, exported_bundle):
        from cmsf import PipelineConfig, load_bundle, load_dataset, load_gt_mask, mask_iou
        from cmsf.pipelines import run_owod_bind

        backend = load_bundle(exported_bundle)
        index = load_dataset(dummy_dataset, "S4")
        video = index.videos[0]
        cfg = PipelineConfig(grid_size=4)
        for frame, gt_path in zip(video.frames, video.gt_paths):
            mask = run_owod_bind(frame, cfg, backend)
            assert mask_iou(mask, load_gt_mask(gt_path)) > 0.9


class TestCli:
    def test_dry_run_writes_nothing(self, dummy_dataset, tmp_path, capsys):
        out = tmp_path / "bundle"
        code = main(
            [
                "--dataset", str(dummy_dataset),
                "--split", "S4",
                "--out", str(out),
                "--dry-run",
            ]
        )
        assert code == 0
        assert not out.exists()
        assert "5 frames" in capsys.readouterr().out

    def test_cli_exports_bundle(self, dummy_dataset, tmp_path):
        out = tmp_path / "bundle"
        code = main(
            [
                "--dataset", str(dummy_dataset),
                "--split", "S4",
                "--out", str(out),
                "--grid-size", "4",
            ]
        )
        assert code == 0
        assert (out / "manifest.json").is_file()
        info = json.loads((out / "export_info.json").read_text())
        assert info["models"]["model_set"] == "analytic"

    def test_bad_media_marks_bundle_incomplete(self, dummy_dataset, tmp_path):
        import shutil

        broken = tmp_path / "broken_dataset"
        shutil.copytree(dummy_dataset, broken)
        (broken / "S4" / "v_dummy" / "audio" / "3.wav").write_bytes(b"not audio")
        out = tmp_path / "bundle"
        code = main(
            [
                "--dataset", str(broken),
                "--split", "S4",
                "--out", str(out),
                "--grid-size", "4",
            ]
        )
        assert code == 1
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["incomplete"] is True

    def test_usage_error(self):
        assert main(["--split", "S4"]) == 2
