"""Exception hierarchy shared by all fairsample modules."""


class FairsampleError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(FairsampleError):
    """A malformed line in one of the text input formats."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class DataError(FairsampleError):
    """Structurally valid input that violates a data invariant."""


class ContractError(FairsampleError):
    """A caller violated a documented precondition."""


class MissingLabelError(DataError):
    """An exact metric was asked about a document without a group label."""

    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"document {doc_id!r} has no group label")


class UndefinedTargetError(FairsampleError):
    """A representation target is undefined (e.g. no relevant documents)."""


class UndefinedCorrelationError(FairsampleError):
    """Rank correlation is undefined (fewer than two points or zero variance)."""
