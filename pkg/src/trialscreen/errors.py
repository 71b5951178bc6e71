"""Shared exception types."""

from __future__ import annotations


class TrialScreenError(Exception):
    """Base class for all errors raised by this package."""


class ProtocolParseError(TrialScreenError):
    """A protocol file violated the documented schema.

    Carries the offending file, the line number where the violation was
    detected, and the field involved (when known).
    """

    def __init__(self, message: str, *, path: str = "", line: int | None = None,
                 field: str | None = None):
        self.path = path
        self.line = line
        self.field = field
        where = path
        if line is not None:
            where += f":{line}"
        if field:
            where += f" (field '{field}')"
        super().__init__(f"{where}: {message}" if where else message)


class ConflictError(TrialScreenError):
    """A uniqueness constraint was violated (duplicate id, concurrent write)."""


class NotFoundError(TrialScreenError):
    """A referenced entity does not exist."""


class ValidationError(TrialScreenError):
    """Input data failed a validity check."""


class IngestError(ValidationError):
    """A corpus record failed validation; carries the record index."""

    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(f"record {index}: {message}")


class StateError(TrialScreenError):
    """An operation was attempted in an invalid state."""


class GatewayError(TrialScreenError):
    """A chat completion failed with a non-retryable content error."""


class GatewayTransportError(GatewayError):
    """A retryable transport-level failure (connection, timeout, 5xx)."""


class CassetteMissError(GatewayError):
    """Replay mode received a request that was never recorded."""


class ScriptMissError(GatewayError):
    """The scripted backend had no rule matching the request."""


class EmptyPanelError(TrialScreenError):
    """A patient has no documents, so no expert panel can be formed."""


class StoreBuildError(TrialScreenError):
    """A vector store could not be built (e.g. embedder dimension mismatch)."""


class DimensionMismatchError(TrialScreenError):
    """Query embedding dimension does not match the store dimension."""


class IncompleteWorkflowError(StateError):
    """finalize() was called while review-queue items are still pending."""


class UndefinedIntervalError(TrialScreenError):
    """A confidence interval was requested for an empty sample."""


class EvalSampleError(TrialScreenError):
    """The stratified evaluation sample cannot be drawn; lists deficient strata."""

    def __init__(self, deficient: list[str]):
        self.deficient = deficient
        super().__init__("insufficient pairs in strata: " + ", ".join(deficient))
