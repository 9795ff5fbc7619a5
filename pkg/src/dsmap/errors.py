"""Exception hierarchy shared by every stage of the pipeline."""


class DsmError(Exception):
    """Base class for all errors raised by dsmap."""


class MapFormatError(DsmError):
    """A map file could not be parsed."""


class MapVersionError(MapFormatError):
    """A map file was written by an incompatible format version."""


class SequenceError(DsmError):
    """A frame manifest is malformed or references missing files."""


class MaskError(DsmError, ValueError):
    pass


class EmptyFragment(DsmError):
    """No masked pixel carried usable depth; the detection should be dropped."""


class BackendError(DsmError):
    """A perception backend failed."""


class TransportError(BackendError):
    """The remote endpoint could not be reached, or retries were exhausted."""


class BackendConfigError(BackendError):
    """The remote endpoint rejected the request (4xx); retrying will not help."""


class CredentialError(BackendConfigError):
    pass


class CaptionParseError(BackendError):
    """The VLM reply did not follow the caption schema."""


class QueryError(DsmError):
    pass


class NoCandidateError(QueryError):
    """Neither fuzzy matching nor the caption fallback produced a target candidate."""


class SceneSpecError(DsmError):
    """A synthetic scene description is invalid."""


class FrameError(DsmError):
    """Processing one frame of a sequence failed; the message names the frame id."""

    def __init__(self, frame_id: int, cause: Exception):
        super().__init__(f"frame {frame_id}: {type(cause).__name__}: {cause}")
        self.frame_id = frame_id
        self.cause = cause


class ConfigError(DsmError):
    """A configuration file or override is invalid."""
