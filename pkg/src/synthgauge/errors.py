"""Exception types shared across the toolkit."""


class SynthGaugeError(Exception):
    """Base class for every error raised by synthgauge."""


class ValidationError(SynthGaugeError, ValueError):
    """Invalid input: wrong shape, out-of-range parameter, broken invariant."""


class FormatError(ValidationError):
    """Malformed file contents. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(SynthGaugeError, ArithmeticError):
    """A computation failed to converge or produced non-finite values."""


class DomainError(NumericalError):
    """An input lies outside the mathematical domain of an operation."""
