"""Exception hierarchy.

Every error raised on bad data derives from ``DataError`` so the CLI can map
it to exit code 2; ``UsageError`` maps to exit code 1.
"""
from __future__ import annotations


class SelcovError(Exception):
    """Base class for all package errors."""


class UsageError(SelcovError):
    pass


class DataError(SelcovError):
    """Problem with input data. Carries an optional source name and line."""

    def __init__(self, message: str, *, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


# core-model
class EmptyInput(DataError):
    pass


class InconsistentClassCount(DataError):
    pass


class InvalidVector(DataError, ValueError):
    pass


class InvalidRecord(DataError, ValueError):
    pass


class InvalidDate(DataError, ValueError):
    pass


# selective-engine
class UnlabeledRecord(DataError):
    pass


class EmptyDataset(DataError):
    pass


class BadGrid(DataError, ValueError):
    pass


class Unreachable(DataError):
    """No grid threshold satisfies the requested objective."""


# stats-kernel
class DomainError(DataError, ValueError):
    pass


class TooFewPoints(DataError, ValueError):
    pass


class DegenerateX(DataError, ValueError):
    pass


class ZeroVariance(DataError, ValueError):
    pass


class ConvergenceError(SelcovError, ArithmeticError):
    pass


# phenology
class NoOverlap(DataError):
    pass


class TooFewSpecies(DataError):
    pass


# synth
class BadSpec(DataError, ValueError):
    pass


class Intractable(SelcovError):
    pass
