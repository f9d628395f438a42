"""Exception types shared across the package."""


class TimeloopsError(Exception):
    """Base class for every error raised by this package."""


class ParseError(TimeloopsError):
    """Malformed input file (fixture CSV, policy log, policy JSON, ...)."""


class UnknownColumn(TimeloopsError):
    """A policy column id that is not one of the seven known columns."""


class ScenarioError(TimeloopsError):
    """A scenario file or service definition violates its invariants."""


class ConfigError(TimeloopsError):
    """An invalid session or controller configuration."""


class DeniedSyscall(TimeloopsError):
    """Attempt to extend a policy with syscalls on the permanent deny-list."""

    def __init__(self, names):
        self.names = frozenset(names)
        super().__init__("denied syscalls: " + ", ".join(sorted(self.names)))


class ReplayError(TimeloopsError):
    """A policy log cannot be replayed (epoch gap, re-added syscall, ...)."""


class IllegalTransition(TimeloopsError):
    """A controller event that is not legal in the current state."""


class ExploitInPretrainSet(TimeloopsError):
    """A pretraining request maps to an exploit-annotated handler."""


class ExploitInTrainingSet(TimeloopsError):
    """A dynamic-profiling training request maps to an exploit-annotated handler."""


class EmptyMix(TimeloopsError):
    """Workload mix with no positive weight."""


class EmptyRecords(TimeloopsError):
    """Latency statistics requested over zero records."""


class AttemptsExhausted(TimeloopsError):
    """A request failed more times than the client retry budget allows."""


class MissingCategory(TimeloopsError):
    """An attack scenario does not declare an exploit for every category."""
