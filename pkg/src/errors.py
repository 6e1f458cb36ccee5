"""
Exception hierarchy for ivscreen.

Library code raises these; the CLI and the HTTP routes translate them into
single-line messages and 400 responses respectively.
"""


class IvScreenError(Exception):
    """Base class for every error raised on purpose by ivscreen."""


class SchemaError(IvScreenError, ValueError):
    """Input columns or labels do not match the declared schema."""


class RowParseError(SchemaError):
    """A single input cell could not be parsed."""

    def __init__(self, line, column, value, reason='unparseable value'):
        self.line = line
        self.column = column
        self.value = value
        super().__init__(f"line {line}: column '{column}' {reason}: {value!r}")


class EmptyInputError(IvScreenError, ValueError):
    """The input holds no data rows."""


class ArgumentError(IvScreenError, ValueError):
    """An argument violates an operation's precondition."""


class GuardError(IvScreenError):
    """A configured size guard would be exceeded."""


class StructuralError(IvScreenError, ValueError):
    """The data cannot support the requested structure (K < 2, bad pair...)."""


class UnsupportedModeError(IvScreenError):
    """The operation is not defined for the requested treatment mode."""


class InferenceError(IvScreenError, ArithmeticError):
    """A test statistic could not be formed (e.g. singular covariance)."""
