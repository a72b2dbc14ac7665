"""Exception hierarchy shared by the detectors, simulators and the CLI."""


class SegpointError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SegpointError, ValueError):
    """Arguments or data violate a documented precondition."""


class DomainError(InvalidInputError):
    """Values outside the domain of a model, e.g. non-positive exponential data."""


class IndexRangeError(InvalidInputError, IndexError):
    """An observation index or split position lies outside the series."""


class SeriesTooShortError(InvalidInputError):
    """The series has too few observations for the requested test."""


class InvariantViolation(SegpointError, AssertionError):
    """An internal invariant was broken; indicates a bug, not bad input."""
