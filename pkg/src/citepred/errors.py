"""Exception types shared across the package."""


class CitepredError(Exception):
    """Base class for all package errors."""


class ValidationError(CitepredError):
    """An input violates a documented precondition."""


class IngestError(CitepredError):
    """A raw record cannot be turned into a corpus record."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class CorpusFormatError(CitepredError):
    """A corpus file is malformed (bad line, duplicate id, missing key)."""


class VectorFormatError(CitepredError):
    """A vector file is malformed or violates vector invariants."""


class UndefinedMetricError(CitepredError):
    """A metric was requested on inputs for which it is undefined."""


class RetrievalError(CitepredError):
    """A retrieval component is missing or misconfigured."""


class ProviderError(CitepredError):
    """An embedding provider failed."""


class ProviderTransportError(ProviderError):
    """An embedding provider stayed unreachable after bounded retries."""


class TransportError(CitepredError):
    """A generator endpoint could not be reached."""


class RateLimitError(TransportError):
    """The endpoint asked us to slow down."""

    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ParameterRejectedError(CitepredError):
    """The endpoint rejected a generation parameter by name."""

    def __init__(self, param: str, message: str | None = None):
        super().__init__(message or f"endpoint rejected parameter {param!r}")
        self.param = param


class GenerationError(CitepredError):
    """Generation failed after bounded retries."""


class PredictionParseError(CitepredError):
    """No parseable JSON in a generator response."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class PredictionSchemaError(CitepredError):
    """Parsed JSON does not match the expected prediction schema."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw
