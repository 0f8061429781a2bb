"""Exception hierarchy.

Everything a user can trigger with bad input derives from :class:`IceBenchError`;
the CLI maps those to exit status 2. :class:`InvariantError` marks a broken
internal guarantee (exit status 3).
"""


class IceBenchError(Exception):
    """Base class for user-facing errors."""


class BenchdefError(IceBenchError):
    """Malformed or incomplete benchmark definition."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column or 1}: {message}"
        super().__init__(message)


class SpecValidationError(IceBenchError):
    pass


class PlacementError(IceBenchError):
    pass


class NetlistError(IceBenchError):
    pass


class LfsrError(IceBenchError):
    pass


class StimulusError(IceBenchError):
    pass


class VcdError(IceBenchError):
    pass


class MeasurementError(IceBenchError):
    pass


class InvariantError(Exception):
    """An internal consistency check failed; this is a bug, not bad input."""
