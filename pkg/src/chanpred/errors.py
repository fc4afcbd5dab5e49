"""Exception types shared across the package.

Every failure that callers are expected to handle gets its own class so
that the CLI can map error families onto distinct exit codes.
"""


class EngineError(Exception):
    """Base class for all package errors."""


class ConfigError(EngineError):
    """Invalid configuration value or malformed config file (exit code 2)."""


class DataError(EngineError):
    """Missing, malformed, or unreadable dataset / checkpoint (exit code 3)."""


class DivergenceError(EngineError):
    """Training produced a non-finite loss or gradient (exit code 4)."""


class ShapeMismatchError(EngineError):
    """Two tensors that must agree in shape do not."""

    def __init__(self, expected, got):
        self.expected = tuple(expected)
        self.got = tuple(got)
        super().__init__(f"shape mismatch: expected {self.expected}, got {self.got}")


class DegenerateSampleError(EngineError):
    """A target (or input) tensor has zero energy, making NMSE undefined."""


class NonFiniteValueError(EngineError):
    """A numeric evaluation produced NaN or Inf.

    ``coordinate`` identifies the offending parameter index when the error
    arises inside a per-coordinate sweep (finite differences), else None.
    """

    def __init__(self, message, coordinate=None):
        self.coordinate = coordinate
        if coordinate is not None:
            message = f"{message} (coordinate {coordinate})"
        super().__init__(message)
