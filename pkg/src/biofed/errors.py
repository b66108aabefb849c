"""Exception types shared across the package."""


class BiofedError(Exception):
    """Base class for all errors raised by biofed."""


class ValidationError(BiofedError):
    """Invalid configuration or input data.

    Carries a list of ``(field_path, message)`` pairs so callers can report
    every problem at once instead of failing on the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("", problems)]
        self.problems = list(problems)
        lines = [f"{path}: {msg}" if path else msg for path, msg in self.problems]
        super().__init__("; ".join(lines))


class ShapeMismatchError(BiofedError):
    """Tensor shape incompatible with the layer or operation that got it."""


class NonFiniteError(BiofedError):
    """A completed operation produced NaN or Inf values."""


class SchemaMismatchError(BiofedError):
    """Model parameter sets have different (name, shape) schemas."""


class LabelOutOfRangeError(BiofedError):
    """A class label fell outside [0, num_classes)."""


class EmptyShardError(BiofedError):
    """Training or evaluation was requested on an empty sample set."""


class DataError(BiofedError):
    """Problem with dataset files or image contents."""


class MissingFileError(DataError):
    pass


class UnsupportedFormatError(DataError):
    pass


class CorruptImageError(DataError):
    pass


class ProtocolError(BiofedError):
    """Base class for wire-protocol decode/encode failures."""


class TruncatedFrameError(ProtocolError):
    pass


class UnknownTagError(ProtocolError):
    pass


class VersionMismatchError(ProtocolError):
    pass


class LengthMismatchError(ProtocolError):
    pass


class OversizeFrameError(ProtocolError):
    pass


class CheckpointFormatError(ProtocolError):
    """Malformed model checkpoint bytes (also used for embedded parameters)."""


class TransportError(BiofedError):
    """Connection-level failure (refused, dropped, handshake error)."""


class StateError(BiofedError):
    """A round state machine method was called in the wrong status."""


class RoundFailedError(BiofedError):
    """A federated round could not be completed."""

    def __init__(self, round_index, reason):
        self.round_index = round_index
        self.reason = reason
        super().__init__(f"round {round_index} failed: {reason}")
