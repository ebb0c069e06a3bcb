"""Exception types shared across the pipeline."""


class PandafaceError(Exception):
    """Base class for all library errors."""


class SingularTransform(PandafaceError):
    """Affine transform has a (near-)singular linear part."""


class EmptyEdgeSet(PandafaceError):
    """Edge detection produced no keypoints (e.g. constant image)."""


class DegenerateGeometry(PandafaceError):
    """Point configuration cannot support an affine fit (e.g. collinear)."""


class NonFinite(PandafaceError):
    """An iterative objective became NaN or infinite."""


class ImageTooSmall(PandafaceError):
    """Image smaller than the operation's minimum size."""


class GridTooFine(PandafaceError):
    """More blocks requested than pixels available."""


class OutOfBounds(PandafaceError):
    """Sampling circle or coordinate exits the image."""


class InvalidComponents(PandafaceError):
    """Requested PLS component count out of range."""


class DimensionMismatch(PandafaceError):
    """Vector length does not match the model dimension."""


class AlignmentFailure(PandafaceError):
    """Registration of an image pair failed."""


class InsufficientData(PandafaceError):
    """Not enough images or identities to enrol."""


class NoFiniteScores(PandafaceError):
    """Every gallery entry failed to produce a finite score."""


class UnknownIdentity(PandafaceError):
    """Claimed identity is not present in the gallery."""


class GalleryIoError(PandafaceError):
    """Gallery file could not be read or written."""


class FormatVersionMismatch(GalleryIoError):
    """Gallery file has an unknown magic or version tag."""


class ChecksumMismatch(GalleryIoError):
    """Gallery file is truncated or fails its CRC check."""


class ClosedSetViolation(PandafaceError):
    """An identity has a single image, breaking closed-set evaluation."""


class EmptyScores(PandafaceError):
    """ROC computation received an empty score list."""


class ConfigError(PandafaceError):
    """Configuration document is malformed or carries unknown keys."""
