"""Exception types shared across the toolkit."""


class KidneycutError(Exception):
    """Base class for all toolkit errors."""


class FormatError(KidneycutError):
    """Unreadable or unsupported image file."""


class DegenerateContourError(KidneycutError):
    """Contour rasterizes to a zero-area or out-of-bounds region."""


class ConfigurationError(KidneycutError):
    """Invalid parameter combination (e.g. kernel larger than image)."""


class InitializationTooSmallError(KidneycutError):
    """Shrinking the initialization empties the foreground."""


class IllPosedBandError(KidneycutError):
    """Narrow band lacks a usable seed set on one side."""


class UnboundedFlowError(KidneycutError):
    """Every s-t cut crosses an infinite-capacity arc."""


class UndefinedMetricError(KidneycutError):
    """Metric has no value for the given masks (e.g. both empty)."""


class SegmentationCollapseError(KidneycutError):
    """An iteration produced an empty or full mask."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
