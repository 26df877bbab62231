class TsdmError(Exception):
    """Base class for every error raised by this package."""


class SequenceFormatError(TsdmError):
    """A sequence directory is missing files or holds malformed data."""

    def __init__(self, message, frame=None):
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)
        self.frame = frame


class DegenerateHistogramError(TsdmError):
    pass


class MissingDepthError(TsdmError):
    pass


class NumericError(TsdmError):
    """Non-finite value in a forward/backward pass or during training."""


class CoreContractError(TsdmError):
    pass


class ConfigError(TsdmError):
    pass
