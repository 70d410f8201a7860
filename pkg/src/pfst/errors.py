"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto its stable exit-code contract without a lookup table.
"""

from __future__ import annotations


class PfstError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(PfstError, ValueError):
    exit_code = 2


class BadBlockCount(ConfigError):
    pass


class DataError(PfstError, ValueError):
    exit_code = 3


class InvalidDataset(DataError):
    pass


class EmptyDataset(DataError):
    pass


class SingleClass(DataError):
    pass


class MissingClass(DataError):
    pass


class StratificationError(DataError):
    pass


class ParseError(DataError):
    """A CSV cell could not be parsed as a finite real number."""

    def __init__(self, row: int, column: str, value: str, reason: str = "not a finite number"):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: {value!r} is {reason}")


class NumericalError(PfstError, ArithmeticError):
    exit_code = 4


class SingularScatter(NumericalError):
    pass


class SingularUpdate(NumericalError):
    """Adding the feature would make the within-class scatter singular."""

    def __init__(self, feature: int, schur: float, message: str | None = None):
        self.feature = feature
        self.schur = schur
        super().__init__(message or f"feature {feature} is collinear with the selected set (schur={schur:.3g})")


class RankDeficient(NumericalError):
    pass


class StaleCandidate(PfstError, RuntimeError):
    pass


class SubsetTooSmall(PfstError, ValueError):
    pass


class NoAdmissibleFeature(PfstError):
    exit_code = 5
