class QuickDetectError(Exception):
    """Base class for library errors."""


class DomainError(QuickDetectError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(QuickDetectError, ValueError):
    """Invalid or incomplete configuration."""


class NumericalError(QuickDetectError, RuntimeError):
    """A numerical procedure failed to converge."""
