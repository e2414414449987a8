"""Exception hierarchy shared across the engine, clients, and service."""


class TokensteerError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDistributionError(TokensteerError):
    """A probability list is empty, all-zero, or contains negative mass."""


class AlignmentError(TokensteerError):
    """An importance profile does not line up with a step's alternatives."""


class BackendError(TokensteerError):
    """Transport-level failure talking to a completion or analysis backend.

    Retryable: the gateway retries once before letting this propagate.
    """


class ProtocolError(TokensteerError):
    """The backend answered, but the response violates the wire contract."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class AssessmentSchemaError(TokensteerError):
    """Structured analysis output is missing a field or uses an unknown category."""


class AssessmentRangeError(TokensteerError):
    """Structured analysis output has an importance score outside [0, 1]."""


class AssessmentUnavailableError(TokensteerError):
    """The analysis backend failed twice; the alternative stays unexplained."""


class TraceError(TokensteerError):
    """A scripted trace file is malformed or missing a referenced key."""


class BoundsError(TokensteerError):
    """An offset, step index, or rank is outside the valid range."""


class UnknownSessionError(TokensteerError):
    """No session exists with the requested id."""


class UnknownStepError(TokensteerError):
    """The requested step index is not part of the current completion."""


class InvalidAlternativeError(TokensteerError):
    """The requested alternative rank is 0 or not present at the step."""


class StateError(TokensteerError):
    """Operation not permitted in the session's current lifecycle state."""


class SelectionFailedError(TokensteerError):
    """Zero usable suffix samples; the selection left the session unchanged."""


class ConfigError(TokensteerError):
    """Service configuration failed validation; message names the field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field {field!r}: {message}")
        self.field = field
