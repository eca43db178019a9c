"""Exception types raised by the context-construction services."""
from __future__ import annotations

from collections.abc import Sequence


class UnsupportedFileError(ValueError):
    """The path does not carry a recognised source extension."""


class SourceEncodingError(ValueError):
    """Source bytes are not valid UTF-8."""


class NodeNotFoundError(LookupError):
    """A file, function or class reference does not resolve."""


class CursorRangeError(ValueError):
    """A (line, column) cursor lies outside the file."""


class StrategyError(ValueError):
    """A strategy descriptor could not be parsed."""


class BudgetExceededError(ValueError):
    """The current file's FIM triple alone does not fit the token budget."""

    def __init__(self, required: int, budget: int) -> None:
        super().__init__(
            f"FIM triple needs {required} tokens but the budget is {budget}; "
            "shrink the file or raise model_max_length."
        )
        self.required = required
        self.budget = budget


class ProviderError(RuntimeError):
    """The embedding provider failed after its retries."""

    def __init__(self, message: str, failed_indices: Sequence[int] = ()) -> None:
        super().__init__(message)
        self.failed_indices = tuple(failed_indices)


class CachePoisonError(RuntimeError):
    """A cached vector disagrees with the provider's declared dimension."""


class BackendError(RuntimeError):
    """The completion backend could not produce a completion."""
