"""Exception types shared across the engine."""


class LookumError(Exception):
    """Base class for all engine errors."""


class InvalidDistributionError(LookumError):
    """A probability row is malformed (negative mass or not normalized)."""


class OracleError(LookumError):
    """An enumeration-oracle precondition was violated."""


class TransportError(LookumError):
    """A remote backend could not be reached after the configured retries."""


class ProtocolError(LookumError):
    """A remote backend returned a malformed or out-of-contract payload."""


class ConfigError(LookumError):
    """A run configuration is invalid; message carries the offending key path."""
