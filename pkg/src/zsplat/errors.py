"""Exception types shared across the package.

The CLI maps these onto process exit codes: input/format problems exit 2,
range violations exit 3, checkpoint mismatches exit 4.
"""


class ZsplatError(Exception):
    """Base class for package errors."""


class ShapeError(ZsplatError, ValueError):
    """Operands have incompatible dimensions."""


class InputError(ZsplatError, ValueError):
    """Input data violates a precondition (empty, non-finite, inconsistent)."""


class RangeError(ZsplatError, ValueError):
    """A value is outside its permitted range (coordinate, depth, shift)."""


class ConfigError(ZsplatError, ValueError):
    """A configuration value or key is invalid."""


class NumericError(ZsplatError, ArithmeticError):
    """A numeric probe produced a non-finite value."""


class FormatError(ZsplatError, ValueError):
    """A serialized container is malformed. ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CheckpointError(ZsplatError, ValueError):
    """Checkpoint contents do not match the requested model configuration."""


class ValidationError(ZsplatError, ValueError):
    """A produced primitive violates its invariants."""
