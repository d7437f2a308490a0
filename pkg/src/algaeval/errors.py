"""Exception hierarchy. CLI exit codes hang off these classes."""


class AlgaevalError(Exception):
    """Base class for toolkit errors."""

    exit_code = 1


class ValidationError(AlgaevalError, ValueError):
    """Input that violates a documented format or invariant.

    ``where`` holds a JSON path or ``line N, column M`` for parse failures.
    """

    exit_code = 2

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{message}; at {where}")
        self.where = where


class CoordinateSpaceMismatch(ValidationError):
    """Two boxes from different coordinate spaces were combined."""


class ManifestError(ValidationError):
    """A dataset manifest failed to parse or validate.

    ``image_id`` names the offending image when known.
    """

    def __init__(self, message, image_id=None, where=None):
        if image_id is not None:
            message = f"{message}; image_id={image_id!r}"
        super().__init__(message, where)
        self.image_id = image_id


class RatioError(ValidationError):
    """Split ratios are negative or do not sum to one."""


class DetectionsFormatError(ValidationError):
    """A detections file is malformed."""


class ImageFormatError(ValidationError):
    """An image could not be decoded or has an unsupported layout."""


class ProtocolError(AlgaevalError):
    """A backend response broke the wire protocol for one frame."""

    exit_code = 3


class BackendError(AlgaevalError):
    """The backend process could not be started, crashed, or hung up.

    ``partial`` carries the frame results collected before the failure.
    """

    exit_code = 3

    def __init__(self, message, partial=None, returncode=None, stderr_tail=""):
        super().__init__(message)
        self.partial = list(partial or [])
        self.returncode = returncode
        self.stderr_tail = stderr_tail
