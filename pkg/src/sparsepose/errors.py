"""Exception types shared across the package."""


class SparsePoseError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SparsePoseError, ValueError):
    pass


class DegenerateRotationError(SparsePoseError, ValueError):
    """A 6D rotation code has a zero or parallel pair of vectors."""


class ShapeError(SparsePoseError, ValueError):
    pass


class ConfigError(SparsePoseError, ValueError):
    pass


class FormatError(SparsePoseError, ValueError):
    """Malformed clip, skeleton or checkpoint file."""
