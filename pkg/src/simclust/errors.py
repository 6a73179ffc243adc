"""Exception hierarchy shared by all simclust modules."""


class SimclustError(Exception):
    """Base class for everything raised deliberately by this package."""


class ValidationError(SimclustError):
    """Input data violates a documented invariant (bad artifact, bad value)."""


class FormatError(ValidationError):
    """A file does not conform to its on-disk format.

    ``offset`` is the byte position of the problem where that is meaningful
    (binary formats); ``None`` for structural JSON/CSV problems.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
