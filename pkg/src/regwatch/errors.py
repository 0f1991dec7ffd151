"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class RegwatchError(Exception):
    """Base class for all errors raised by regwatch."""


class MalformedInput(RegwatchError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingField(RegwatchError):
    def __init__(self, field: str):
        self.field = field
        super().__init__(f"missing field: {field}")


class EmptyBody(RegwatchError):
    pass


class UnknownEntityType(RegwatchError):
    def __init__(self, value: str):
        self.value = value
        super().__init__(f"unknown entity type: {value!r}")


class DuplicateCitation(RegwatchError):
    def __init__(self, citation: str):
        self.citation = citation
        super().__init__(f"duplicate citation: {citation!r}")


class SourceUnavailable(RegwatchError):
    pass


class SpanOutOfRange(RegwatchError):
    def __init__(self, record: str, message: str = "span out of range"):
        self.record = record
        super().__init__(f"{record}: {message}")


class InvalidThreshold(RegwatchError):
    pass


class EmptySurface(RegwatchError):
    pass


class StorageFailure(RegwatchError):
    pass


class DanglingParent(RegwatchError):
    def __init__(self, rssd_id: str, parent_rssd_id: str):
        self.rssd_id = rssd_id
        self.parent_rssd_id = parent_rssd_id
        super().__init__(f"rssd:{rssd_id} references missing parent rssd:{parent_rssd_id}")


class UnsupportedPattern(RegwatchError):
    pass


class RuleSyntaxError(RegwatchError):
    """Raised by the subscription DSL parser; carries a 1-based position."""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}")


class UnknownField(RegwatchError):
    def __init__(self, field: str):
        self.field = field
        super().__init__(f"unknown field: {field!r}")


class UnknownTerm(RegwatchError):
    def __init__(self, term: str):
        self.term = term
        super().__init__(f"term not in taxonomy: {term!r}")


class CycleDetected(RegwatchError):
    pass


class MultipleRoots(RegwatchError):
    pass


class OrphanTerm(RegwatchError):
    pass


class ConfigError(RegwatchError):
    pass
