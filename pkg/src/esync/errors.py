"""Exception hierarchy shared by all esync modules."""


class SyncError(Exception):
    """Base class for every error raised by esync."""


class TimestampFormatError(SyncError, ValueError):
    pass


# series / alignment

class RateMismatch(SyncError):
    pass


class EmptySeries(SyncError):
    pass


class InsufficientEvents(SyncError):
    pass


class NoPresses(SyncError):
    pass


# clock simulation

class InvalidDuration(SyncError):
    pass


class EmptyWindow(SyncError):
    pass


class TraceTooShort(SyncError):
    pass


# parsing

class SchemaError(SyncError):
    pass


class NonMonotonicTimestamps(SyncError):
    pass


class PeriodMismatch(SyncError):
    pass


class MalformedLine(SyncError):
    """A game-log line could not be interpreted; ``line_no`` is 1-based."""

    def __init__(self, line_no: int, reason: str = "malformed line"):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class MissingTick(MalformedLine):
    def __init__(self, line_no: int):
        super().__init__(line_no, 'missing required field "tick"')


class NegativeTick(MalformedLine):
    def __init__(self, line_no: int, tick: int):
        super().__init__(line_no, f"negative tick {tick}")


class NoSuchPlayer(SyncError):
    pass


class MissingChannel(SyncError):
    pass


class UpsamplingUnsupported(SyncError):
    pass
