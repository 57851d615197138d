"""Exception hierarchy shared across the engine."""


class LarkError(Exception):
    """Base class for all engine errors."""


class ScenarioFormatError(LarkError):
    """A scenario document failed to parse; the message names the offending field."""


class ValidationError(LarkError):
    """An operation received inputs that violate its contract."""


class ProviderError(LarkError):
    """A provider call failed after the configured retries.

    Carries the request kind so run logs can attribute the failure.
    """

    def __init__(self, message: str, kind: str | None = None):
        super().__init__(message)
        self.kind = kind


class TraceError(LarkError):
    """A run trace file is malformed or fails integrity checks."""
