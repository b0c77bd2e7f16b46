"""Exception types shared across the package."""


class RelightKitError(Exception):
    """Base class for all library errors."""


class ValidationError(RelightKitError, ValueError):
    """Invalid argument or malformed input data."""


class DegenerateGeometryError(ValidationError):
    """Geometry has no usable extent (coincident or collinear points)."""


class SchedulingError(ValidationError):
    """A (training mode, dataset) pair the mode table does not allow."""


class NumericsError(RelightKitError):
    """Non-finite values produced where finite ones are required."""


class FileFormatError(RelightKitError, OSError):
    """A file does not conform to its declared format."""
