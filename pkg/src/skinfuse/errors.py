"""Exception hierarchy. The CLI maps each class to a distinct exit code."""


class SkinFuseError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SkinFuseError):
    """Invalid or incomplete pipeline configuration."""


class VolumeError(SkinFuseError):
    """Volume I/O or format problem."""


class SegmentationError(SkinFuseError):
    """Slice labelling failed (e.g. no background seed available)."""


class MeshError(SkinFuseError):
    """Mesh construction, PLY I/O or spatial-index problem."""


class RegistrationError(SkinFuseError):
    """Co-registration stage failure; the message names the stage."""


class ErrorMapError(SkinFuseError):
    """Distance-map computation failure."""


class TrackingError(SkinFuseError):
    """Frame registry problem (unknown frame, bad pose file)."""


class PhantomError(SkinFuseError):
    """Synthetic test-data generation failure."""
