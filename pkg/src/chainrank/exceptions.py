"""Exception types shared across the package.

The CLI maps these onto process exit codes, so every error a command can
raise belongs to one of the families below.
"""


class ChainRankError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ChainRankError, ValueError):
    pass


class ConfigurationError(ChainRankError):
    pass


class BackendError(ChainRankError):
    """Anything that went wrong talking to an LLM backend."""


class TransportError(BackendError):
    """Retryable failure (network, 5xx, 429) that exhausted its retries."""

    def __init__(self, message, attempts=None):
        super().__init__(message)
        self.attempts = list(attempts or [])


class PermanentBackendError(BackendError):
    """Non-retryable HTTP status (4xx other than 429)."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class ParseError(BackendError):
    """Backend answered but the text could not be parsed."""


class JudgeParseError(ParseError):
    pass


class NoApplicableErrorError(ChainRankError):
    """Raised when an error type must be sampled from an empty set."""


class UndefinedCorrelationError(ChainRankError, ValueError):
    pass


class NonFiniteLossError(ChainRankError, FloatingPointError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InvariantViolation(ChainRankError):
    pass
