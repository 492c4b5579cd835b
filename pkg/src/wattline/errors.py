"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to, so the
command-line layer never has to guess.
"""

from __future__ import annotations


class WattlineError(Exception):
    exit_code = 1


class SourceError(WattlineError):
    """A power source could not be opened or read."""

    exit_code = 2


class SourceInitError(SourceError):
    def __init__(self, kind: str, reason: str):
        super().__init__(f"cannot open {kind} source: {reason}")
        self.kind = kind


class SourceExhausted(SourceError):
    """Raised by replay sources once the trace (plus hold grace) has run out."""


class FormatError(WattlineError):
    exit_code = 3


class LogFormatError(FormatError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SchemaError(FormatError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class LifecycleError(WattlineError):
    exit_code = 4


class NestingError(LifecycleError):
    pass


class NotFoundError(WattlineError, LookupError):
    exit_code = 5


class CeilingLookupError(NotFoundError):
    pass


class UnknownRegionError(NotFoundError):
    pass


class AnalysisError(WattlineError, ValueError):
    exit_code = 6


class DomainError(AnalysisError):
    pass


class UnplaceableRecordError(DomainError):
    pass


class ModelError(AnalysisError):
    """Invalid roofline model (bad ordering, mixed kinds, duplicate names)."""


class FitError(AnalysisError):
    pass


class ArityError(AnalysisError):
    pass


class InsufficientDataError(AnalysisError):
    pass


class PlacementError(AnalysisError):
    pass


class ComparisonError(AnalysisError):
    pass


class PlotError(AnalysisError):
    pass
