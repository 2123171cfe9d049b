"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, numerical failures exit 3.
"""


class CulrError(Exception):
    """Base class for all toolkit errors."""


class UsageError(CulrError):
    """Bad command-line invocation (unknown flag, missing argument)."""


class DataError(CulrError):
    """Malformed or inconsistent input data."""


class NumericsError(CulrError):
    """Non-finite or otherwise unusable numerical result."""


class InfiniteDifficultyError(NumericsError):
    """A document hit a zero-probability transition under an unsmoothed model."""

    def __init__(self, doc_id: str, detail: str):
        super().__init__(f"document {doc_id!r} has infinite difficulty: {detail}")
        self.doc_id = doc_id
