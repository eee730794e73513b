"""Exception hierarchy shared across the pipeline.

Contract violations (bad arguments) raise plain ``ValueError``; everything
that stems from the *data* being wrong raises a ``DataError`` subclass so the
CLI can map it to a distinct exit code.
"""


class PipelineError(Exception):
    """Base class for pipeline failures."""


class DataError(PipelineError):
    """Input data is malformed, missing, or unusable (CLI exit code 3)."""


class ParseError(DataError):
    """A record in a line-oriented input could not be parsed."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyInputError(DataError):
    """An input that must be non-empty was empty."""


class EntityNotFoundError(DataError):
    """A queried entity is not present in the graph."""


class ExhaustionError(DataError):
    """The sampling attempt budget was spent without producing output."""


class DivergenceError(PipelineError):
    """Training produced a non-finite loss or gradient (CLI exit code 4)."""

    def __init__(self, message: str, epoch: int):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch
