"""Exception hierarchy shared by all modules.

Every error raised by the library derives from :class:`EMTError`, so callers
(and the command-line driver) can separate validation problems from bugs.
Errors tied to a CSV row carry the 1-based data row number in ``row``.
"""

from __future__ import annotations


class EMTError(Exception):
    """Base class for all library errors."""


class ValidationError(EMTError, ValueError):
    """Input data or arguments violate a documented precondition."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ComputationError(EMTError, RuntimeError):
    """A numerical procedure could not produce a valid result."""


# ingest
class MissingColumn(ValidationError):
    pass


class NonMonotoneDates(ValidationError):
    pass


class GapInDates(ValidationError):
    pass


class NegativeCount(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class NotDaily(ValidationError):
    pass


class PartialYear(ValidationError):
    pass


# baselines
class UnknownYear(ValidationError):
    pass


class AllYearsExcluded(ValidationError):
    pass


# scores
class LengthMismatch(ValidationError):
    pass


class RangeOutOfBounds(ValidationError):
    pass


class ZeroBaseline(ValidationError):
    pass


class DegenerateInterval(ComputationError):
    pass


# tautstring / tvsmooth
class TooShort(ValidationError):
    pass


class NoConvergence(ComputationError):
    pass


class Infeasible(ComputationError):
    pass


class SolverLimit(ComputationError):
    pass


# diagnostics
class NegativeLevel(ValidationError):
    pass


class LagTooLarge(ValidationError):
    pass


class DegenerateDesign(ComputationError):
    pass


# plotting
class EmptyTable(ValidationError):
    pass
