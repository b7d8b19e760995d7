"""Exception hierarchy shared by all engine modules."""


class CmsfError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(CmsfError):
    """Two values that must share dimensions do not."""


class DegenerateInputError(CmsfError):
    """An input is numerically unusable, e.g. a zero-norm embedding."""


class MissingRecordError(CmsfError):
    """A recorded backend has no entry for the requested key."""

    def __init__(self, key):
        self.key = key
        super().__init__(f"no record for key {key}")


class CorruptBundleError(CmsfError):
    """An interchange bundle violates its declared schema or invariants."""


class DatasetError(CmsfError):
    """A dataset tree does not follow the documented layout."""


class AlignmentError(CmsfError):
    """Prediction and ground-truth sequences cannot be paired up."""


class StageError(CmsfError):
    """A pipeline stage failed; carries the stage and frame for diagnosis."""

    def __init__(self, stage: str, frame_id: str, cause: Exception):
        self.stage = stage
        self.frame_id = frame_id
        self.cause = cause
        super().__init__(f"stage '{stage}' failed on frame '{frame_id}': {cause}")


class SequenceError(CmsfError):
    """One or more frames of a sequence run failed."""

    def __init__(self, failures):
        self.failures = list(failures)
        lines = "; ".join(f"{fid}: {err}" for fid, err in self.failures)
        super().__init__(f"{len(self.failures)} frame(s) failed: {lines}")
