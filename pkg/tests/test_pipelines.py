import numpy as np
import pytest

from cmsf.backends import (
    AudioTag,
    BackendRecordKey,
    MaskCandidate,
    RecordedBackend,
    box_qualifier,
    crop_qualifier,
    point_qualifier,
)
from cmsf.dataset import load_bundle, load_dataset
from cmsf.embedding import EmbeddingVector
from cmsf.errors import SequenceError
from cmsf.geometry import BinaryMask, BoundingBox, ScoredBox, mask_union, rasterize_box
from cmsf.pipelines import (
    FramePair,
    PipelineConfig,
    StageTrace,
    grid_points,
    run_at_gdino_sam,
    run_frame,
    run_owod_bind,
    run_sam_bind,
    run_sequence,
    run_sequence_traced,
)


def frame(frame_id="f/1", size=4, t=1):
    return FramePair(frame_id=frame_id, width=size, height=size, t=t)


def pixel_mask(size, pixels):
    arr = np.zeros((size, size), bool)
    for x, y in pixels:
        arr[y, x] = True
    return BinaryMask.from_array(arr)


def cascade_records(tag_probability=0.8, size=4):
    """One tag -> one grounded box -> one candidate covering pixel (0, 0)."""
    box = BoundingBox(0, 0, 2, 2)
    candidate = MaskCandidate(pixel_mask(size, [(0, 0)]), 0.95, box_qualifier(box))
    return {
        BackendRecordKey("f/1", "audio_tags"): (
            AudioTag("dog bark", 0, tag_probability),
        ),
        BackendRecordKey("f/1", "grounded_boxes", "dog bark"): (ScoredBox(box, 0.9),),
        BackendRecordKey("f/1", "mask_candidates", box_qualifier(box)): (candidate,),
    }


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert (cfg.tau_at, cfg.tau_bb, cfg.tau_bind) == (0.5, 0.5, 0.7)
        assert (cfg.nms_iou, cfg.quality_floor, cfg.grid_size) == (0.5, 0.88, 16)
        assert cfg.owod_mask_mode == "rasterize_boxes"

    def test_range_validation(self):
        with pytest.raises(ValueError):
            PipelineConfig(tau_at=1.2)
        with pytest.raises(ValueError):
            PipelineConfig(tau_bind=-1.5)
        with pytest.raises(ValueError):
            PipelineConfig(grid_size=0)
        with pytest.raises(ValueError):
            PipelineConfig(owod_mask_mode="other")

    def test_json_roundtrip_and_unknown_keys(self):
        cfg = PipelineConfig(tau_bind=0.9, grid_size=4)
        assert PipelineConfig.from_json_dict(cfg.to_json_dict()) == cfg
        with pytest.raises(ValueError):
            PipelineConfig.from_json_dict({"tau_typo": 0.5})

    def test_frame_pair_validation(self):
        with pytest.raises(ValueError):
            FramePair("f", 0, 4, 1)
        with pytest.raises(ValueError):
            FramePair("f", 4, 4, 0)


class TestGridPoints:
    def test_cell_centers_row_major(self):
        points = grid_points(224, 224, 4)
        assert len(points) == 16
        assert points[0] == (28.0, 28.0)
        assert points[1] == (84.0, 28.0)  # x varies fastest
        assert points[-1] == (196.0, 196.0)

    def test_square_count(self):
        assert len(grid_points(224, 224, 16)) == 256


class TestAtGdinoSam:
    def test_single_path_trace(self):
        backend = RecordedBackend(cascade_records(), {"f/1": (4, 4)}, 2)
        trace = StageTrace()
        mask = run_at_gdino_sam(frame(), PipelineConfig(), backend, trace)
        assert mask == pixel_mask(4, [(0, 0)])
        assert trace.counts == {
            "audio_tags": 1,
            "kept_tags": 1,
            "grounded_boxes": 1,
            "mask_candidates": 1,
            "kept_candidates": 1,
        }

    def test_no_tag_above_threshold_yields_empty(self):
        backend = RecordedBackend(cascade_records(tag_probability=0.3), {"f/1": (4, 4)}, 2)
        mask = run_at_gdino_sam(frame(), PipelineConfig(), backend)
        assert mask == BinaryMask.empty(4, 4)

    def test_empty_tag_recording_yields_empty(self):
        records = {BackendRecordKey("f/1", "audio_tags"): ()}
        backend = RecordedBackend(records, {"f/1": (4, 4)}, 2)
        assert run_at_gdino_sam(frame(), PipelineConfig(), backend).is_empty

    def test_quality_floor_filters_candidate(self):
        backend = RecordedBackend(cascade_records(), {"f/1": (4, 4)}, 2)
        cfg = PipelineConfig(quality_floor=0.99)
        assert run_at_gdino_sam(frame(), cfg, backend).is_empty

    def test_two_disjoint_candidates_union(self):
        box_a = BoundingBox(0, 0, 1, 1)
        box_b = BoundingBox(3, 3, 4, 4)
        mask_a = pixel_mask(4, [(0, 0)])
        mask_b = pixel_mask(4, [(3, 3)])
        records = {
            BackendRecordKey("f/1", "audio_tags"): (AudioTag("piano", 1, 0.9),),
            BackendRecordKey("f/1", "grounded_boxes", "piano"): (
                ScoredBox(box_a, 0.8),
                ScoredBox(box_b, 0.7),
            ),
            BackendRecordKey("f/1", "mask_candidates", box_qualifier(box_a)): (
                MaskCandidate(mask_a, 0.95, "a"),
            ),
            BackendRecordKey("f/1", "mask_candidates", box_qualifier(box_b)): (
                MaskCandidate(mask_b, 0.92, "b"),
            ),
        }
        backend = RecordedBackend(records, {"f/1": (4, 4)}, 2)
        got = run_at_gdino_sam(frame(), PipelineConfig(), backend)
        assert got == mask_union([mask_a, mask_b])

    def test_backend_error_annotated_with_stage(self):
        backend = RecordedBackend({}, {"f/1": (4, 4)}, 2)
        with pytest.raises(Exception, match="tag_audio"):
            run_at_gdino_sam(frame(), PipelineConfig(), backend)


def owod_records(sim_first=0.9, sim_second=0.1):
    """Two high-objectness proposals whose crops have the given similarities."""
    box_a = BoundingBox(0, 0, 2, 2)
    box_b = BoundingBox(2, 2, 4, 4)
    crop_a = EmbeddingVector((sim_first, (1 - sim_first**2) ** 0.5))
    crop_b = EmbeddingVector((sim_second, (1 - sim_second**2) ** 0.5))
    return {
        BackendRecordKey("f/1", "proposals"): (
            ScoredBox(box_a, 0.9),
            ScoredBox(box_b, 0.9),
        ),
        BackendRecordKey("f/1", "audio_embedding"): EmbeddingVector((1.0, 0.0)),
        BackendRecordKey("f/1", "image_embedding", crop_qualifier(box_a)): crop_a,
        BackendRecordKey("f/1", "image_embedding", crop_qualifier(box_b)): crop_b,
    }


class TestOwodBind:
    def test_no_proposal_passes_tau_bb(self):
        backend = RecordedBackend(owod_records(), {"f/1": (4, 4)}, 2)
        cfg = PipelineConfig(tau_bb=0.95)
        assert run_owod_bind(frame(), cfg, backend).is_empty

    def test_similarity_filter_keeps_first_box_only(self):
        backend = RecordedBackend(owod_records(), {"f/1": (4, 4)}, 2)
        trace = StageTrace()
        got = run_owod_bind(frame(), PipelineConfig(), backend, trace)
        assert got == rasterize_box(BoundingBox(0, 0, 2, 2), 4, 4)
        assert trace.counts["kept_bind"] == 1

    def test_raising_tau_bind_shrinks_foreground(self):
        backend = RecordedBackend(owod_records(), {"f/1": (4, 4)}, 2)
        low = run_owod_bind(frame(), PipelineConfig(tau_bind=0.7), backend)
        high = run_owod_bind(frame(), PipelineConfig(tau_bind=0.95), backend)
        assert high.is_empty
        assert not (high.to_array() & ~low.to_array()).any()

    def test_segment_boxes_mode_uses_segmenter(self):
        records = owod_records()
        box_a = BoundingBox(0, 0, 2, 2)
        inner = pixel_mask(4, [(1, 1)])
        records[BackendRecordKey("f/1", "mask_candidates", box_qualifier(box_a))] = (
            MaskCandidate(inner, 0.95, "box"),
        )
        backend = RecordedBackend(records, {"f/1": (4, 4)}, 2)
        cfg = PipelineConfig(owod_mask_mode="segment_boxes")
        assert run_owod_bind(frame(), cfg, backend) == inner


def sam_bind_records(size=8, qualities=(0.95, 0.9, 0.5, 0.5), sim=0.8):
    """2x2 grid over an 8x8 frame; the two top candidates share one mask."""
    shared = rasterize_box(BoundingBox(0, 0, 5, 5), size, size)
    tight = BoundingBox(0.0, 0.0, 5.0, 5.0)
    points = grid_points(size, size, 2)
    records = {
        BackendRecordKey("f/1", "audio_embedding"): EmbeddingVector((1.0, 0.0)),
        BackendRecordKey("f/1", "image_embedding", crop_qualifier(tight)): (
            EmbeddingVector((sim, (1 - sim**2) ** 0.5))
        ),
    }
    for (x, y), quality in zip(points[:2], qualities[:2]):
        records[BackendRecordKey("f/1", "mask_candidates", point_qualifier(x, y))] = (
            MaskCandidate(shared, quality, point_qualifier(x, y)),
        )
    low = pixel_mask(size, [(6, 6)])
    low_tight = BoundingBox(6.0, 6.0, 7.0, 7.0)
    records[BackendRecordKey("f/1", "image_embedding", crop_qualifier(low_tight))] = (
        EmbeddingVector((0.0, 1.0))
    )
    for (x, y), quality in zip(points[2:], qualities[2:]):
        records[BackendRecordKey("f/1", "mask_candidates", point_qualifier(x, y))] = (
            MaskCandidate(low, quality, point_qualifier(x, y)),
        )
    return records, shared


class TestSamBind:
    def cfg(self):
        return PipelineConfig(grid_size=2)

    def test_all_below_quality_floor_yields_empty(self):
        records, _ = sam_bind_records(qualities=(0.5, 0.5, 0.5, 0.5))
        backend = RecordedBackend(records, {"f/1": (8, 8)}, 2)
        assert run_sam_bind(frame(size=8), self.cfg(), backend).is_empty

    def test_nms_dedupes_identical_masks(self):
        records, shared = sam_bind_records()
        backend = RecordedBackend(records, {"f/1": (8, 8)}, 2)
        trace = StageTrace()
        got = run_sam_bind(frame(size=8), self.cfg(), backend, trace)
        assert trace.counts["kept_candidates"] == 2  # both pass the floor
        assert trace.counts["kept_nms"] == 1  # identical masks collapse
        assert got == shared

    def test_single_survivor_above_tau_bind(self):
        records, shared = sam_bind_records(sim=0.8)
        backend = RecordedBackend(records, {"f/1": (8, 8)}, 2)
        got = run_sam_bind(frame(size=8), self.cfg(), backend)
        assert got == shared

    def test_survivor_below_tau_bind_dropped(self):
        records, _ = sam_bind_records(sim=0.5)
        backend = RecordedBackend(records, {"f/1": (8, 8)}, 2)
        assert run_sam_bind(frame(size=8), self.cfg(), backend).is_empty

    def test_empty_candidate_masks_dropped_before_nms(self):
        records, shared = sam_bind_records()
        size = 8
        points = grid_points(size, size, 2)
        x, y = points[2]
        records[BackendRecordKey("f/1", "mask_candidates", point_qualifier(x, y))] = (
            MaskCandidate(BinaryMask.empty(size, size), 0.99, point_qualifier(x, y)),
        )
        backend = RecordedBackend(records, {"f/1": (8, 8)}, 2)
        got = run_sam_bind(frame(size=8), self.cfg(), backend)
        assert got == shared


class TestSequence:
    def test_single_frame_matches_direct_run(self, fixture_paths):
        backend = load_bundle(fixture_paths.bundle_dir)
        index = load_dataset(fixture_paths.dataset_dir, "S4")
        cfg = PipelineConfig(grid_size=4)
        frames = index.videos[0].frames[:1]
        seq = run_sequence(frames, cfg, backend, "owod-bind")
        direct = run_owod_bind(frames[0], cfg, backend)
        assert seq == [direct]

    def test_order_independence(self, fixture_paths):
        backend = load_bundle(fixture_paths.bundle_dir)
        index = load_dataset(fixture_paths.dataset_dir, "S4")
        cfg = PipelineConfig(grid_size=4)
        frames = list(index.videos[0].frames)
        forward = {
            run.frame_id: run.mask
            for run in run_sequence_traced(frames, cfg, backend, "sam-bind")
        }
        backward = {
            run.frame_id: run.mask
            for run in run_sequence_traced(frames[::-1], cfg, backend, "sam-bind")
        }
        assert forward == backward

    def test_failures_aggregate_with_frame_ids(self):
        backend = RecordedBackend(cascade_records(), {"f/1": (4, 4)}, 2)
        frames = [frame("f/1", t=1), FramePair("f/2", 4, 4, 2)]
        with pytest.raises(SequenceError, match="f/2"):
            run_sequence_traced(frames, PipelineConfig(), backend, "at-gdino-sam")

    def test_unknown_variant_rejected(self):
        backend = RecordedBackend({}, {}, 2)
        with pytest.raises(ValueError):
            run_frame(frame(), PipelineConfig(), backend, "nope")


class TestTraceMonotonicity:
    CHAINS = {
        "at-gdino-sam": [("audio_tags", "kept_tags"), ("mask_candidates", "kept_candidates")],
        "owod-bind": [("proposals", "kept_proposals"), ("kept_proposals", "kept_bind")],
        "sam-bind": [
            ("mask_candidates", "kept_candidates"),
            ("kept_candidates", "kept_nms"),
            ("kept_nms", "kept_bind"),
        ],
    }

    @pytest.mark.parametrize("variant", sorted(CHAINS))
    def test_kept_counts_never_grow(self, fixture_paths, variant):
        backend = load_bundle(fixture_paths.bundle_dir)
        cfg = PipelineConfig(grid_size=4)
        for split in ("S4", "MS3"):
            index = load_dataset(fixture_paths.dataset_dir, split)
            for video in index.videos:
                for run in run_sequence_traced(video.frames, cfg, backend, variant):
                    counts = run.trace.counts
                    for before, after in self.CHAINS[variant]:
                        if before in counts and after in counts:
                            assert counts[after] <= counts[before]


class TestDeterminism:
    @pytest.mark.parametrize("variant", ["at-gdino-sam", "owod-bind", "sam-bind"])
    def test_repeated_runs_identical(self, fixture_paths, variant):
        cfg = PipelineConfig(grid_size=4)
        index = load_dataset(fixture_paths.dataset_dir, "S4")
        frames = index.videos[0].frames
        first = run_sequence(frames, cfg, load_bundle(fixture_paths.bundle_dir), variant)
        second = run_sequence(frames, cfg, load_bundle(fixture_paths.bundle_dir), variant)
        assert [m.to_json_dict() for m in first] == [m.to_json_dict() for m in second]
