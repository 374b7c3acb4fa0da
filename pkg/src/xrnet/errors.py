"""Exception hierarchy shared by every xrnet module."""


class XRNetError(Exception):
    """Base class for all errors raised by xrnet."""


class ConfigurationError(XRNetError):
    """Inconsistent shapes, geometry or hyperparameters."""


class NumericError(XRNetError):
    """A NaN or infinity appeared where finite values are required."""


class DataError(XRNetError):
    """Bad or missing input data (labels, images, empty sets)."""


class LayoutError(DataError):
    """Dataset directory does not have the expected two-class layout."""


class UsageError(XRNetError):
    """API misuse, e.g. backward before forward or an unknown format tag."""


class CheckpointError(XRNetError):
    """Base class for checkpoint load failures."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


class ManifestError(XRNetError):
    """Malformed or unreadable split manifest."""
