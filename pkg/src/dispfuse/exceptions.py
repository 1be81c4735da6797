"""Exception hierarchy shared by every dispfuse module."""


class DispFuseError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DispFuseError, ValueError):
    """Inputs have the wrong shape, channel count or mutually inconsistent extents."""


class InvalidParameterError(DispFuseError, ValueError):
    """A scalar parameter is outside its admissible range."""


class EmptyMaskError(InvalidInputError):
    """The set of pixels to evaluate on is empty."""


class DomainError(DispFuseError, ValueError):
    """A value lies outside the mathematical domain of an operation (e.g. log of 0)."""


class FormatError(DispFuseError):
    """A raster file is malformed. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
