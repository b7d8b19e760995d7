"""Training-free cross-modality semantic filtering for audio-visual segmentation.

Turns recorded foundation-model outputs (audio tags, box proposals, mask
candidates, joint embeddings) into per-frame binary segmentation masks via
three pipeline variants, and evaluates predictions with mean IoU and
F-score.
"""

from .backends import (
    AudioTag,
    Backend,
    BackendRecordKey,
    MaskCandidate,
    MockBackend,
    RecordedBackend,
)
from .dataset import (
    DatasetIndex,
    bundle_hash,
    load_bundle,
    load_dataset,
    load_gt_mask,
    resize_policy,
    write_bundle,
)
from .embedding import (
    EmbeddingVector,
    SimilarityScoredProposal,
    cosine_similarity,
    rank_by_similarity,
    threshold_filter,
)
from .errors import (
    AlignmentError,
    CmsfError,
    CorruptBundleError,
    DatasetError,
    DegenerateInputError,
    MissingRecordError,
    SequenceError,
    ShapeMismatchError,
    StageError,
)
from .evaluation import (
    EvalResult,
    FrameMetrics,
    evaluate_sequence,
    frame_fscore,
    report_from_json,
    report_json,
    report_table,
)
from .fixtures import make_fixtures
from .geometry import (
    BinaryMask,
    BoundingBox,
    ScoredBox,
    box_iou,
    mask_iou,
    mask_union,
    nms,
    nms_indices,
    rasterize_box,
    tight_bbox,
)
from .pipelines import (
    VARIANTS,
    FramePair,
    FrameRun,
    PipelineConfig,
    StageTrace,
    run_at_gdino_sam,
    run_frame,
    run_owod_bind,
    run_sam_bind,
    run_sequence,
    run_sequence_traced,
)

__version__ = "0.1.0"
