"""Exception hierarchy shared by all palmcc modules."""


class PalmccError(Exception):
    """Base class for all palmcc errors."""


class InvalidParameterError(PalmccError, ValueError):
    """A parameter violates its documented range or invariant."""


class DimensionMismatchError(PalmccError, ValueError):
    """Two arrays that must share a shape do not."""


class FingerprintMismatchError(PalmccError):
    """Templates were produced by differently configured filter banks."""


class NoOverlapError(PalmccError):
    """No offset leaves enough valid pixels to score a pair."""


class SingularCovarianceError(PalmccError):
    """The pooled covariance cannot be inverted at the requested ridge."""


class DataError(PalmccError):
    """Problems with external data: files, manifests, serialized payloads."""


class FormatError(DataError):
    """A binary payload is corrupt, truncated, or has the wrong version."""


class ManifestError(DataError):
    """A dataset manifest is malformed or inconsistent."""


class UnsupportedImageError(DataError):
    """An input image is not 8-bit grayscale."""


class InsufficientDataError(DataError):
    """Not enough subjects or samples to build the requested plan."""
