class SentinelError(Exception):
    """Base class for all errors raised by satd_sentinel."""


class ConfigError(SentinelError):
    """Invalid configuration: profiles, patterns, repo settings."""


class TrainingError(SentinelError):
    pass


class ModelError(SentinelError):
    """Model file unreadable or incompatible with the features given to it."""


class ForgeError(SentinelError):
    """A code host request failed in a way the caller should not retry."""

    retryable = False

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class TransportError(ForgeError):
    """Network-level failure (timeout, connection reset); retry later."""

    retryable = True


class ServerError(ForgeError):
    """Host returned 5xx; retry later."""

    retryable = True


class CredentialError(ForgeError):
    """Token missing, invalid or lacking permission."""


class NotFoundError(ForgeError):
    pass


class StoreError(SentinelError):
    pass


class ScenarioError(SentinelError):
    """Malformed scenario file, detected before any step runs."""
