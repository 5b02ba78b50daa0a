"""
WAV input/output.

Only mono RIFF/WAVE files with 16-bit PCM or 32-bit float samples are accepted.
The header is walked with ``struct`` before decoding so that truncated or
malformed files are reported precisely; decoding and encoding use soundfile.
PCM is scaled by 1/32768 on read and quantized by the same factor on write, so
a PCM file survives a read/write cycle unchanged.
"""
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import soundfile as sf

from .dsp import Waveform
from .errors import SampleRateMismatchError, UnsupportedEncodingError, WavFormatError, AudioIOError
from .fileio import atomic_path

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 16000
ENCODINGS = {(1, 16): "PCM_16", (3, 32): "FLOAT"}
WAVE_FORMAT_EXTENSIBLE = 0xFFFE
PCM_SCALE = 32768.0


@dataclass(frozen=True)
class RiffInfo:
    format_tag: int
    channels: int
    sample_rate: int
    bits_per_sample: int
    data_bytes: int

    @property
    def encoding(self):
        return ENCODINGS.get((self.format_tag, self.bits_per_sample))


def inspect_riff(path) -> RiffInfo:
    """Walk the RIFF chunk list and validate the ``fmt `` and ``data`` chunks."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise AudioIOError(path, "file not found")
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(path, "not a RIFF/WAVE file")

    fmt = None
    data_bytes = None
    offset = 12
    while offset + 8 <= len(raw):
        chunk_id, size = struct.unpack_from("<4sI", raw, offset)
        body = offset + 8
        if chunk_id == b"fmt ":
            if size < 16 or body + size > len(raw):
                raise WavFormatError(path, f"fmt chunk of {size} bytes is truncated")
            tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", raw, body)
            if tag == WAVE_FORMAT_EXTENSIBLE and size >= 26:
                (tag,) = struct.unpack_from("<H", raw, body + 24)
            fmt = (tag, channels, rate, bits)
        elif chunk_id == b"data":
            available = len(raw) - body
            if size > available:
                raise WavFormatError(path, f"data chunk declares {size} bytes but only {available} are present")
            data_bytes = size
            break
        offset = body + size + (size & 1)

    if fmt is None:
        raise WavFormatError(path, "missing fmt chunk")
    if data_bytes is None:
        raise WavFormatError(path, "missing data chunk")
    info = RiffInfo(*fmt, data_bytes)
    if info.encoding is None:
        raise UnsupportedEncodingError(
            path, f"format tag {info.format_tag} with {info.bits_per_sample}-bit samples (need 16-bit PCM or 32-bit float)"
        )
    if info.channels != 1:
        raise UnsupportedEncodingError(path, f"{info.channels} channels (only mono is supported)")
    frame_bytes = info.bits_per_sample // 8
    if info.data_bytes % frame_bytes:
        raise WavFormatError(path, f"data chunk of {info.data_bytes} bytes is not a whole number of samples")
    return info


def read_wav(path, expected_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    info = inspect_riff(path)
    if expected_rate is not None and info.sample_rate != expected_rate:
        raise SampleRateMismatchError(path, f"sample rate {info.sample_rate} Hz, expected {expected_rate} Hz")
    try:
        if info.encoding == "PCM_16":
            ints, rate = sf.read(str(path), dtype="int16", always_2d=False)
            samples = ints.astype(np.float64) / PCM_SCALE
        else:
            samples, rate = sf.read(str(path), dtype="float32", always_2d=False)
    except (RuntimeError, ValueError) as e:
        raise WavFormatError(path, f"decode failed: {e}")
    logger.debug("read %s: %d samples, %s", path, samples.shape[0], info.encoding)
    return Waveform(samples, rate, encoding=info.encoding)


def write_wav(path, waveform: Waveform, encoding: str = None) -> None:
    """Write ``waveform`` atomically; ``encoding`` defaults to the waveform's own."""
    encoding = encoding or waveform.encoding
    if encoding == "PCM_16":
        data = np.clip(np.round(waveform.samples * PCM_SCALE), -32768, 32767).astype(np.int16)
    elif encoding == "FLOAT":
        data = waveform.samples.astype(np.float32)
    else:
        raise UnsupportedEncodingError(path, f"cannot write encoding {encoding!r}")
    with atomic_path(path) as tmp:
        sf.write(str(tmp), data, waveform.sample_rate, subtype=encoding, format="WAV")
