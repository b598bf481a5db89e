"""Shared exception taxonomy.

Exit-code mapping in the CLI: ValidationError and its subclasses are user
errors (exit 1), TransportError is a backend/network failure (exit 2).
"""

from __future__ import annotations


class MleditError(Exception):
    """Base class for all package errors."""


class ValidationError(MleditError):
    """Invalid user input: bad values, bad config, malformed records."""


class IngestError(ValidationError):
    """Corpus file rejected. Carries the offending record id and field."""

    def __init__(self, message: str, *, record_id: str | None = None, field: str | None = None):
        super().__init__(message)
        self.record_id = record_id
        self.field = field


class FormatError(ValidationError):
    """Persisted store file rejected. Carries the 1-based line number."""

    def __init__(self, message: str, *, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


class ParseError(ValidationError):
    """Prompt text does not conform to the line grammar. Carries a byte offset."""

    def __init__(self, message: str, *, offset: int = 0):
        super().__init__(message)
        self.offset = offset


class ConfigurationError(ValidationError):
    """Inconsistent wiring: dimension mismatches, missing backends, bad thresholds."""


class TransportError(MleditError):
    """A remote backend call failed after retries. Carries the failing stage."""

    def __init__(self, message: str, *, stage: str | None = None):
        super().__init__(message)
        self.stage = stage
