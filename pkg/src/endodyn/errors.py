"""Exception hierarchy shared by every module."""


class EndodynError(Exception):
    """Base class for all package errors."""


class NegativeEntry(EndodynError, ValueError):
    pass


class RowSumViolation(EndodynError, ValueError):
    pass


class NonFinite(EndodynError, ValueError):
    pass


class DimensionMismatch(EndodynError, ValueError):
    pass


class IndexOutOfRange(EndodynError, IndexError):
    pass


class TooLarge(EndodynError, ValueError):
    pass


class SelfGossip(EndodynError, ValueError):
    pass


class ModelError(EndodynError, RuntimeError):
    """A process model produced or was asked for something invalid."""


class ConfigError(EndodynError, ValueError):
    pass


class NotConverged(EndodynError, RuntimeError):
    pass


class NonConvexCatalog(EndodynError, ValueError):
    """Requested a Lyapunov function that is not in the convex catalog."""
