"""Exception hierarchy shared across the package.

Callers that need coarse failure classes (the CLI exit-code table, the HTTP
error mapping) catch the three roots: ParseError/ValidationError for data
problems, BackendError for anything involving the LLM backend, and
DegenerateStatisticsError/AggregationError for numeric dead ends.
"""


class ProtoPredictError(Exception):
    """Base class for all package errors."""


class ParseError(ProtoPredictError):
    """Malformed input syntax. Carries a human-readable locus when known."""

    def __init__(self, message: str, locus: str | None = None):
        super().__init__(message if locus is None else f"{message} ({locus})")
        self.locus = locus


class ValidationError(ProtoPredictError):
    """Well-formed input that violates a documented invariant."""


class BackendError(ProtoPredictError):
    """A completion or embedding backend failed."""


class AuthenticationError(BackendError):
    """The remote backend rejected the configured credentials."""


class TransportError(BackendError):
    """Network-level failure that survived the bounded retries."""


class ProtocolError(BackendError):
    """The remote backend answered, but not in the documented wire shape."""


class DegenerateStatisticsError(ProtoPredictError):
    """A statistic is undefined for the given data (e.g. zero variance)."""


class AggregationError(ProtoPredictError):
    """No usable samples were available to aggregate."""
