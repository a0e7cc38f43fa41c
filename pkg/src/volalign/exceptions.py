"""Exception types shared across volalign modules."""


class VolalignError(Exception):
    """Base class for volalign errors."""


class MrcFormatError(VolalignError):
    """MRC file has an unsupported mode or a malformed header."""


class DimensionError(VolalignError):
    """Volume dimensions violate a precondition (non-cubic, size mismatch...)."""


class DegenerateVolumeError(VolalignError):
    """Volume has no mass left after thresholding."""


class ConditioningError(VolalignError):
    """Kernel matrix factorization failed even after jitter escalation."""

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class EvaluationError(VolalignError):
    """A loss callback returned NaN/Inf."""

    def __init__(self, message, rotation=None):
        super().__init__(message)
        self.rotation = rotation
