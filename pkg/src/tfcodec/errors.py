"""Exception hierarchy shared by every codec stage."""


class CodecError(Exception):
    """Base class for all codec failures."""


class ConfigError(CodecError, ValueError):
    pass


class ShapeError(CodecError, ValueError):
    pass


class UsageError(CodecError, ValueError):
    pass


class MissingTensorError(CodecError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"weight tensor not found: {self.name!r}"


class WeightFileError(CodecError):
    pass


class CorruptStreamError(CodecError):
    """Raised for malformed VOC1 streams.

    ``code`` is a short stable identifier so callers can tell failure
    modes apart without parsing the message.
    """

    code = "corrupt"

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BadMagicError(CorruptStreamError):
    code = "bad_magic"


class UnsupportedVersionError(CorruptStreamError):
    code = "unsupported_version"


class FieldRangeError(CorruptStreamError):
    code = "field_out_of_range"


class TruncatedStreamError(CorruptStreamError):
    code = "truncated"

    def __init__(self, message, offset=None, frame_index=None):
        super().__init__(message, offset)
        self.frame_index = frame_index


class InvalidIndexError(CorruptStreamError):
    code = "invalid_index"
