"""Exception and warning types raised across the toolkit."""


class TrackkitError(Exception):
    """Base class for all toolkit errors."""


# mask codecs / geometry
class SumMismatch(TrackkitError, ValueError):
    pass


class MalformedRuns(TrackkitError, ValueError):
    pass


class BadCharacter(TrackkitError, ValueError):
    pass


class TruncatedStream(TrackkitError, ValueError):
    pass


class SizeMismatch(TrackkitError, ValueError):
    pass


class EmptyMask(TrackkitError, ValueError):
    pass


# detection fusion
class DegenerateResult(TrackkitError, ValueError):
    pass


class NoReferenceGroup(TrackkitError, ValueError):
    pass


# assignment / tracking
class NonFiniteValue(TrackkitError, ValueError):
    pass


class NonMonotonicFrame(TrackkitError, ValueError):
    pass


# events / enhancement / metrics
class EmptyStream(TrackkitError, ValueError):
    pass


class EmptyTimeRange(TrackkitError, ValueError):
    pass


class GridLargerThanImage(TrackkitError, ValueError):
    pass


class UnknownSequenceId(TrackkitError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


# I/O and configuration
class SchemaError(TrackkitError, ValueError):
    """Malformed input file; ``path`` locates the offending field."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class ConfigError(TrackkitError, ValueError):
    pass


# warnings: conditions that degrade output without aborting it
class MissingBorderMask(UserWarning):
    pass


class DegenerateInput(UserWarning):
    pass


class BoundaryWindow(UserWarning):
    pass


class ConsistencyWarning(UserWarning):
    pass
