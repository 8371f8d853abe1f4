"""Exception hierarchy.

The three intermediate classes group errors by CLI exit code: bad
configuration or arguments exit 1, malformed or inconsistent data exit 2,
numerical failures exit 3.
"""


class NeroError(Exception):
    """Base class for every error raised by this package."""


class UsageError(NeroError):
    """Invalid configuration, arguments, or preconditions under caller control."""


class DataError(NeroError):
    """Input data is missing, malformed, or violates a schema invariant."""


class NumericalError(NeroError):
    """A computation failed or degenerated numerically."""


class MissingFile(DataError):
    pass


class ParseError(DataError):
    """Unparseable text in a data file, with file/line/column context."""

    def __init__(self, message: str, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{': '.join([', '.join(where), message])}"
        super().__init__(message)


class DimensionMismatch(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class EmptyClass(DataError):
    pass


class EmptyInput(DataError):
    pass


class IoError(DataError):
    pass


class WeightHashMismatch(DataError):
    pass


class AllClassesDegenerate(NumericalError):
    pass


class DegenerateInput(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class DivergedLoss(NumericalError):
    pass
