"""Exception hierarchy shared by all embproc modules.

The CLI maps any :class:`EmbprocError` to exit code 2; usage errors
(bad flags, unparseable pipeline specs) exit 1 before any of these are
raised.
"""


class EmbprocError(Exception):
    """Base class for all errors raised by embproc."""


class FormatError(EmbprocError):
    """A file does not carry the expected magic/version header."""


class CorruptionError(EmbprocError):
    """A file with a valid header is truncated or inconsistent.

    Carries the byte offset at which decoding failed.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataError(EmbprocError):
    """Well-formed input whose content violates a contract.

    Covers non-finite floats, dimension mismatches, duplicate words,
    malformed dataset lines, empty streams and the like.
    """


class UndefinedSimilarityError(DataError):
    """Cosine similarity of two zero vectors; callers treat as a skip."""


class TrainingDivergedError(DataError):
    """Probe training produced a non-finite loss; reduce the learning rate."""
