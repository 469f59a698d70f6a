"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: configuration and input problems
(SchemaError, ParseError, ValidationError) exit with 1, numeric failures
at runtime (NumericalError) with 2.
"""


class DenshiftError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(DenshiftError):
    """Input file does not match the expected schema (e.g. missing column)."""


class ParseError(DenshiftError):
    """A cell could not be parsed; message names the row and column."""


class ValidationError(DenshiftError):
    """Inputs are well-formed but violate a contract (bad shapes, bad config)."""


class UnsupportedTaskError(DenshiftError):
    """Operation is defined only for a task family (e.g. cost matrix is binary-only)."""


class NumericalError(DenshiftError):
    """Training or evaluation produced a non-finite value."""
