"""
Exception hierarchy shared by every fdfnet module.

Each error carries the process exit code the command line maps it to.
"""


class FdfnetError(Exception):
    """Base class for all expected failures."""

    exit_code = 2


class UsageError(FdfnetError):
    """Wrong call order, missing prerequisite, misuse of the API."""

    exit_code = 1

    def __init__(self, message: str, hint: str = None):
        self.hint = hint
        if hint:
            message = f"{message} (hint: {hint})"
        super().__init__(message)


class ConfigurationError(UsageError):
    """Invalid or unknown configuration values."""


class ShapeError(UsageError):
    """Tensor or spectrogram shape contract violated."""


class DomainError(FdfnetError):
    """Input outside the mathematical domain of an operation."""


class AudioIOError(FdfnetError):
    """Problems reading or writing audio files."""

    def __init__(self, path, cause: str):
        self.path = str(path)
        self.cause = cause
        super().__init__(f"{self.path}: {cause}")

    def __reduce__(self):
        # rebuilt from (path, cause) when sent back from a worker process
        return self.__class__, (self.path, self.cause)


class WavFormatError(AudioIOError):
    """Malformed or truncated RIFF/WAVE data."""


class UnsupportedEncodingError(AudioIOError):
    """Encoding, channel layout or container we do not handle."""


class SampleRateMismatchError(AudioIOError):
    """File sample rate differs from the expected one."""


class DatasetError(FdfnetError):
    """Manifest or corpus problems."""


class CheckpointError(FdfnetError):
    """Corrupt, incompatible or mismatched checkpoint files."""


class NumericError(FdfnetError):
    """Non-finite values during training or inference."""

    exit_code = 3
