"""Exception types shared across the library."""


class PointfaceError(Exception):
    """Base class for all library errors."""


class InvalidInput(PointfaceError, ValueError):
    """An argument violates a documented precondition."""


class InsufficientPoints(PointfaceError):
    """A sampling operation cannot find enough candidate points."""


class ShapeError(PointfaceError, ValueError):
    """Tensor or array shapes are inconsistent."""


class NumericsError(PointfaceError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class SingularSystem(PointfaceError):
    """A linear solve has no unique solution and no regularization was given."""


class ModelFormatError(PointfaceError, ValueError):
    """A morphable-model container file is malformed.

    Carries the byte offset at which the problem was detected.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CloudFormatError(PointfaceError, ValueError):
    """A point-cloud container file is malformed."""


class PlyParseError(PointfaceError, ValueError):
    """A PLY file could not be parsed.

    Carries the 1-based header line or byte offset where parsing failed.
    """

    def __init__(self, message, line=None, offset=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"byte offset {offset}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.line = line
        self.offset = offset


class CheckpointFormatError(PointfaceError, ValueError):
    """A checkpoint file is malformed."""


class PreprocessError(PointfaceError):
    """A cloud cannot be prepared for embedding (e.g. missing nose tip)."""


class ProtocolError(PointfaceError):
    """An evaluation-protocol rule is violated (e.g. train/verification identity overlap)."""
