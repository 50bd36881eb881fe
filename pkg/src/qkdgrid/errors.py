"""Exception types shared across the package."""


class QkdGridError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QkdGridError, ValueError):
    """Invalid parameters, schema violations, or inconsistent inputs."""


class UsageError(QkdGridError, ValueError):
    """An operation was called outside its preconditions."""


class NoUnderflowRisk(QkdGridError):
    """The net increment is never negative, so the underflow exponent is infinite."""


class Unstable(QkdGridError):
    """The net increment has non-positive mean; outage probability tends to one."""


class NotComparable(QkdGridError):
    """Incremental security output is not positive; CIS is undefined."""


class Undefined(QkdGridError):
    """A ratio metric has a non-positive denominator."""
