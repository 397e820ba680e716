"""Exception types shared across the package."""


class PeridynError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PeridynError, ValueError):
    """An argument violates a documented precondition."""


class UnsupportedError(PeridynError, RuntimeError):
    """The requested operation is not available in this configuration."""


class StepTooLargeError(PeridynError, RuntimeError):
    """A truncated operator series cannot reach the required tolerance."""


class ConfigError(PeridynError, ValueError):
    """Configuration parsing failed; carries every error found, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "\n".join(f"  - {e}" for e in self.errors)
        super().__init__(f"invalid configuration:\n{lines}")
