"""Exception types shared across the toolkit."""

from __future__ import annotations


class WeakPanopticError(Exception):
    """Base class for all toolkit errors."""


class OutOfRangeError(WeakPanopticError, ValueError):
    """A class id or instance index exceeds the encodable range."""


class IgnoreSentinelError(WeakPanopticError, ValueError):
    """The ignore sentinel was passed where a real id is required."""


class FormatError(WeakPanopticError, ValueError):
    """A file does not conform to its declared layout."""


class BadMagicError(FormatError):
    """A binary tensor file does not start with the expected magic."""


class TruncatedFileError(FormatError):
    """A binary tensor file ends before its declared payload."""


class NonFiniteValueError(WeakPanopticError, ValueError):
    """A tensor contains NaN or infinity where finite values are required."""


class DegenerateBoxError(WeakPanopticError, ValueError):
    """A bounding box is empty, inverted, or leaves no exterior pixels."""


class EmptyProposalSetError(WeakPanopticError, ValueError):
    """Proposal selection was asked to choose from zero proposals."""


class ZeroHeatmapError(WeakPanopticError, ValueError):
    """A heatmap is identically zero and cannot be thresholded."""


class NoDetectionsError(WeakPanopticError, ValueError):
    """Instance partitioning requires at least one detection."""


class MissingGroundTruthError(WeakPanopticError, ValueError):
    """Oracle scoring was requested without ground truth."""


class EmptySupportError(WeakPanopticError, ValueError):
    """A loss or fit was requested over zero labelled pixels."""


class TooLargeError(WeakPanopticError, ValueError):
    """An exhaustive computation would exceed its hard size limit."""


class UnknownClassError(WeakPanopticError, KeyError):
    """A class id is absent from the class table."""


class MissingPairError(WeakPanopticError, ValueError):
    """Prediction and ground-truth directories do not pair up by name."""


class ExtentMismatchError(WeakPanopticError, ValueError):
    """Two rasters that must share an extent do not."""


class UsageError(WeakPanopticError, ValueError):
    """Bad command-line arguments."""
