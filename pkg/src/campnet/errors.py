"""Exception hierarchy shared by every campnet module."""


class CampNetError(Exception):
    """Base class for all campnet errors."""


class FormatError(CampNetError):
    """A file or record violates the binary/manifest contract."""


class IngestError(CampNetError):
    """A corpus directory is missing data or a feature file is truncated."""


class IoError(CampNetError):
    """Filesystem write failed (unwritable path, disk error)."""


class EditError(CampNetError):
    """An edit script is invalid against the target utterance."""


class MaskError(CampNetError):
    """A mask span violates its bounds or overlaps another span."""


class ModelError(CampNetError):
    """Model input violates a precondition (bad ids, non-finite values)."""


class TrainError(CampNetError):
    """Training failed (shape mismatch, divergence)."""


class AdaptError(CampNetError):
    """Speaker adaptation called with an unusable adaptation set."""


class MetricError(CampNetError):
    """A metric is undefined for the given inputs."""
