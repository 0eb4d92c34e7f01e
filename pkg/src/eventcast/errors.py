"""Exception hierarchy shared across the package."""

from __future__ import annotations


class EventcastError(Exception):
    """Base class for all errors raised by this package."""


class IngestError(EventcastError):
    """A dataset file could not be ingested.

    Carries the offending path and 1-based line number when the failure is
    tied to a specific record.
    """

    def __init__(self, message: str, *, path: str | None = None, line_no: int | None = None):
        self.path = path
        self.line_no = line_no
        prefix = ""
        if path is not None:
            prefix = f"{path}: " if line_no is None else f"{path}:{line_no}: "
        super().__init__(f"{prefix}{message}")


class ConfigError(EventcastError):
    """A run configuration is inconsistent or incomplete."""


class GatewayError(EventcastError):
    """A model backend call failed.

    ``retryable`` distinguishes transient transport faults (worth another
    attempt) from permanent failures such as authentication errors.
    """

    def __init__(self, message: str, *, retryable: bool = False):
        self.retryable = retryable
        super().__init__(message)


class SanitizeError(EventcastError):
    """A complementary description was empty after lead-in stripping."""


class KeyEventResolutionError(EventcastError):
    """No valid sub-event ordinal could be recovered from a model response."""


class PromptBudgetError(EventcastError):
    """An assembled prompt exceeded the configured character budget."""

    def __init__(self, size: int, budget: int):
        self.size = size
        self.budget = budget
        self.overflow = size - budget
        super().__init__(f"prompt is {size} chars, {self.overflow} over the {budget}-char budget")


class ParseError(EventcastError):
    """A model response matched no option letter and no option text."""


class RetrieverError(EventcastError):
    """An external retriever process failed or timed out."""


class OptionBuildError(EventcastError):
    """An option set could not be constructed for a query."""
