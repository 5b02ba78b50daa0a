import pytest

from fdfnet.errors import (AudioIOError, CheckpointError, ConfigurationError, DatasetError, DomainError,
                           FdfnetError, NumericError, SampleRateMismatchError, ShapeError, UsageError,
                           WavFormatError)


class TestExitCodes:
    @pytest.mark.parametrize("cls, code", [
        (UsageError, 1), (ConfigurationError, 1), (ShapeError, 1),
        (DomainError, 2), (DatasetError, 2), (CheckpointError, 2),
        (NumericError, 3),
    ])
    def test_codes(self, cls, code):
        assert issubclass(cls, FdfnetError)
        assert cls("x").exit_code == code

    def test_audio_errors(self):
        err = SampleRateMismatchError("a.wav", "8000 Hz")
        assert isinstance(err, AudioIOError)
        assert err.exit_code == 2
        assert str(err) == "a.wav: 8000 Hz"
        assert str(WavFormatError("b.wav", "short")) == "b.wav: short"

    def test_hint_is_appended(self):
        err = UsageError("no stage-1 checkpoint", hint="train stage 1")
        assert err.hint == "train stage 1"
        assert str(err) == "no stage-1 checkpoint (hint: train stage 1)"
