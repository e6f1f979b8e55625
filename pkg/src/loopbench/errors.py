"""Exception hierarchy shared by every loopbench module."""


class LoopbenchError(Exception):
    """Base class for all loopbench errors."""


class InvalidTraceLength(LoopbenchError, ValueError):
    pass


class InvalidSampleStream(LoopbenchError, ValueError):
    pass


class InvalidInterval(LoopbenchError, ValueError):
    pass


class SchedulingInPast(LoopbenchError, ValueError):
    pass


class DuplicateEventId(LoopbenchError, ValueError):
    pass


class TraceExhausted(LoopbenchError):
    pass


class LocalCloudError(LoopbenchError):
    """Raised by the registry / orchestration / authorization trio."""


class AlreadyRegistered(LocalCloudError):
    pass


class NotFound(LocalCloudError):
    pass


class Unauthorized(LocalCloudError):
    pass


class UnknownSource(LocalCloudError):
    pass


class CalibrationError(LoopbenchError):
    pass


class ConfigError(LoopbenchError, ValueError):
    pass


class InsufficientData(LoopbenchError):
    pass


class RunAborted(LoopbenchError):
    """A live run failed part-way; ``reports`` holds the runs that completed."""

    def __init__(self, message, reports=()):
        super().__init__(message)
        self.reports = list(reports)
