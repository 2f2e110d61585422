"""Exception hierarchy shared by every module.

All errors derive from :class:`WCLError`, which is a ``ValueError`` so that
callers treating bad input generically keep working.
"""


class WCLError(ValueError):
    """Base class for all engine errors."""


class ZeroRowError(WCLError):
    """A row is too close to the zero vector to be normalized."""


class DimensionMismatch(WCLError):
    pass


class ShapeMismatch(WCLError):
    pass


class EmptyInput(WCLError):
    pass


class NotSquare(WCLError):
    pass


class TooSmall(WCLError):
    pass


class NonPositiveTau(WCLError):
    pass


class IndexOutOfRange(WCLError):
    pass


class IncompleteStore(WCLError):
    """KNN requested before every sample has recorded features."""


class KTooLarge(WCLError):
    pass


class MissingKnnTable(WCLError):
    pass


class InvalidParams(WCLError):
    pass


class DegenerateSplit(WCLError):
    pass


class MalformedFile(WCLError):
    pass


class ConfigError(WCLError):
    """Invalid run configuration. ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
