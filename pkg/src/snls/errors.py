"""Exception types shared across the package.

Plain ``ValueError`` is used for ordinary argument violations; the
subclasses below exist where callers need to distinguish failure modes
(CSV ingestion, numeric guards).
"""


class ParseError(ValueError):
    """A value in an input file could not be parsed; message carries the line number."""


class SchemaError(ValueError):
    """An input file violates the expected column/field layout."""


class NumericGuardError(ValueError):
    """A numeric precondition failed (e.g. a zero-norm embedding row)."""
