"""Exception hierarchy.

``DataError`` subclasses signal bad input or configuration (CLI exit code 2),
``NumericFailure`` subclasses signal a numerical breakdown (exit code 3).
"""


class SSTAError(Exception):
    """Base class for every error raised by this package."""

    kind = "error"


class DataError(SSTAError, ValueError):
    kind = "data"


class NumericFailure(SSTAError, ArithmeticError):
    kind = "numeric"


class ParseError(DataError):
    def __init__(self, line, expected=None, got=None, reason=None):
        self.line = line
        self.expected = expected
        self.got = got
        if reason is None:
            reason = f"expected {expected} fields, got {got}"
        super().__init__(f"line {line}: {reason}")


class EmptyInput(DataError):
    pass


class RangeError(DataError):
    pass


class DuplicateLocation(DataError):
    pass


class InsufficientCoverage(DataError):
    def __init__(self, month):
        self.month = month
        super().__init__(f"base period has no occurrence of calendar month {month}")


class ShapeError(DataError):
    pass


class NoBlocks(DataError):
    pass


class LatticeError(DataError):
    pass


class LayoutError(DataError):
    pass


class MissingVariable(DataError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"variable {name} is required but absent")


class InsufficientHistory(DataError):
    pass


class DegenerateNormalization(DataError):
    pass


class UnknownLocation(DataError):
    pass


class UnsupportedOffset(DataError):
    pass


class EmptyComparison(DataError):
    pass


class IncompleteBaseline(DataError):
    pass


class IncompletePrediction(DataError):
    pass


class SplitError(DataError):
    pass


class ConfigError(DataError):
    pass


class EmptyTraining(DataError):
    pass


class NumericError(NumericFailure):
    pass


class DivergenceError(NumericFailure):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"loss became non-finite at epoch {epoch}")
