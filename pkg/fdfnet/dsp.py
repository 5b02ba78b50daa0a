"""
Windowed analysis/synthesis transforms: STFT, ISTFT, STDCT and ISTDCT.

Framing convention
------------------
The signal is padded with ``window_len - hop`` zeros on both sides, then with
enough trailing zeros that the last frame is full length. Frame ``t`` covers
padded samples ``[t*hop, t*hop + window_len)``. Synthesis is weighted
overlap-add: the window is applied again, frames are summed and the result is
divided by the summed squared-window envelope, then the padding is trimmed.

Frames are time-major: ``[..., T, bins]``. The array-level functions accept any
number of leading batch axes; the container-level functions wrap them for a
single mono waveform.
"""
import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from numba import njit

from .config import FrameConfig
from .errors import ConfigurationError, DomainError, ShapeError


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000
    encoding: str = "FLOAT"

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise ShapeError(f"waveform must be mono (1-D), got shape {samples.shape}")
        if not np.issubdtype(samples.dtype, np.floating):
            samples = samples.astype(np.float64)
        if self.sample_rate <= 0:
            raise DomainError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise DomainError("waveform contains NaN or Inf samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True, eq=False)
class _Spectrogram:
    frames: np.ndarray
    config: FrameConfig = field(default_factory=FrameConfig)
    length: int = 0
    sample_rate: int = 16000

    expected_bins = None

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 2:
            raise ShapeError(f"{type(self).__name__} frames must be [T, bins], got shape {frames.shape}")
        bins = self.expected_bins(self.config)
        if frames.shape[1] != bins:
            raise ShapeError(
                f"{type(self).__name__} has {frames.shape[1]} bins, config implies {bins}"
            )
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


class ComplexSpectrogram(_Spectrogram):
    """Complex STFT frames, ``transform_points // 2 + 1`` bins."""

    @staticmethod
    def expected_bins(config):
        return config.stft_bins


class MagnitudeSpectrogram(_Spectrogram):
    @staticmethod
    def expected_bins(config):
        return config.stft_bins


class PhaseSpectrogram(_Spectrogram):
    @staticmethod
    def expected_bins(config):
        return config.stft_bins


class RealSpectrogram(_Spectrogram):
    """Signed STDCT frames, ``transform_points`` bins."""

    @staticmethod
    def expected_bins(config):
        return config.transform_points


def make_window(config: FrameConfig) -> np.ndarray:
    """Symmetric Hamming window of ``window_len`` taps."""
    if config.window_kind != "hamming":
        raise ConfigurationError(f"unsupported window kind {config.window_kind!r}")
    n = config.window_len
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


def frame_count(n_samples: int, config: FrameConfig) -> int:
    padded = n_samples + 2 * config.edge_pad
    excess = max(padded - config.window_len, 0)
    return -(-excess // config.hop) + 1


def padded_length(n_frames: int, config: FrameConfig) -> int:
    return (n_frames - 1) * config.hop + config.window_len


@njit(cache=True)
def _overlap_add_2d(frames, hop):
    n_frames, width = frames.shape
    out = np.zeros((n_frames - 1) * hop + width)
    for t in range(n_frames):
        start = t * hop
        for k in range(width):
            out[start + k] += frames[t, k]
    return out


def overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    """Sum ``[..., T, N]`` frames at stride ``hop`` into ``[..., (T-1)*hop + N]``."""
    frames = np.asarray(frames, dtype=np.float64)
    lead = frames.shape[:-2]
    flat = np.ascontiguousarray(frames.reshape((-1,) + frames.shape[-2:]))
    out = np.stack([_overlap_add_2d(f, hop) for f in flat]) if flat.shape[0] else \
        np.zeros((0, (frames.shape[-2] - 1) * hop + frames.shape[-1]))
    return out.reshape(lead + out.shape[-1:])


@functools.lru_cache(maxsize=64)
def window_envelope(config: FrameConfig, n_frames: int) -> np.ndarray:
    """Summed squared-window envelope over ``n_frames`` frames (read-only)."""
    w = make_window(config)
    env = _overlap_add_2d(np.tile(w * w, (n_frames, 1)), config.hop)
    env.setflags(write=False)
    return env


def analysis_frames(samples: np.ndarray, config: FrameConfig) -> np.ndarray:
    """Windowed frames ``[..., T, window_len]`` of ``samples[..., L]`` (float64)."""
    samples = np.asarray(samples, dtype=np.float64)
    length = samples.shape[-1]
    if length == 0:
        raise DomainError("cannot frame an empty signal")
    n_frames = frame_count(length, config)
    pad = config.edge_pad
    tail = padded_length(n_frames, config) - length - pad
    widths = [(0, 0)] * (samples.ndim - 1) + [(pad, tail)]
    padded = np.pad(samples, widths)
    view = np.lib.stride_tricks.sliding_window_view(padded, config.window_len, axis=-1)
    frames = view[..., :: config.hop, :][..., :n_frames, :]
    return frames * make_window(config)


def synthesis(frames: np.ndarray, config: FrameConfig, length: int) -> np.ndarray:
    """Weighted overlap-add of time-domain frames ``[..., T, window_len]``, trimmed to ``length``."""
    n_frames = frames.shape[-2]
    if length <= 0 or frame_count(length, config) != n_frames:
        raise ShapeError(f"{n_frames} frames cannot synthesize a signal of {length} samples")
    summed = overlap_add(frames * make_window(config), config.hop)
    env = window_envelope(config, n_frames)
    out = np.divide(summed, env, out=np.zeros_like(summed), where=env > 0)
    pad = config.edge_pad
    return out[..., pad : pad + length]


def synthesis_adjoint(grad: np.ndarray, config: FrameConfig, n_frames: int) -> np.ndarray:
    """Adjoint of :func:`synthesis`: maps ``[..., L]`` back to ``[..., T, window_len]``."""
    grad = np.asarray(grad, dtype=np.float64)
    pad = config.edge_pad
    total = padded_length(n_frames, config)
    full = np.zeros(grad.shape[:-1] + (total,))
    full[..., pad : pad + grad.shape[-1]] = grad
    env = window_envelope(config, n_frames)
    full = np.divide(full, env, out=np.zeros_like(full), where=env > 0)
    view = np.lib.stride_tricks.sliding_window_view(full, config.window_len, axis=-1)
    frames = view[..., :: config.hop, :][..., :n_frames, :]
    return frames * make_window(config)


def stft_frames(samples: np.ndarray, config: FrameConfig) -> np.ndarray:
    return scipy.fft.rfft(analysis_frames(samples, config), n=config.transform_points, axis=-1)


def istft_frames(frames: np.ndarray, config: FrameConfig, length: int) -> np.ndarray:
    if frames.shape[-1] != config.stft_bins:
        raise ShapeError(f"expected {config.stft_bins} STFT bins, got {frames.shape[-1]}")
    time = scipy.fft.irfft(frames, n=config.transform_points, axis=-1)[..., : config.window_len]
    return synthesis(time, config, length)


def stdct_frames(samples: np.ndarray, config: FrameConfig) -> np.ndarray:
    return scipy.fft.dct(
        analysis_frames(samples, config), type=2, n=config.transform_points, axis=-1, norm="ortho"
    )


def istdct_frames(frames: np.ndarray, config: FrameConfig, length: int) -> np.ndarray:
    if frames.shape[-1] != config.transform_points:
        raise ShapeError(f"expected {config.transform_points} STDCT bins, got {frames.shape[-1]}")
    time = scipy.fft.idct(np.asarray(frames, dtype=np.float64), type=2, axis=-1, norm="ortho")
    return synthesis(time[..., : config.window_len], config, length)


def istdct_frames_adjoint(grad: np.ndarray, config: FrameConfig, n_frames: int) -> np.ndarray:
    """Adjoint of :func:`istdct_frames` (orthonormal DCT-III is the transpose of DCT-II)."""
    frames = synthesis_adjoint(grad, config, n_frames)
    return scipy.fft.dct(frames, type=2, n=config.transform_points, axis=-1, norm="ortho")


def stft(x: Waveform, config: FrameConfig = FrameConfig()):
    """Return ``(magnitude, phase, complex)`` spectrograms of ``x``."""
    if len(x) == 0:
        raise DomainError("stft of an empty waveform")
    grid = stft_frames(x.samples, config)
    meta = dict(config=config, length=len(x), sample_rate=x.sample_rate)
    return (
        MagnitudeSpectrogram(np.abs(grid), **meta),
        PhaseSpectrogram(np.angle(grid), **meta),
        ComplexSpectrogram(grid, **meta),
    )


def istft(spec: ComplexSpectrogram) -> Waveform:
    samples = istft_frames(spec.frames, spec.config, spec.length)
    return Waveform(samples, spec.sample_rate)


def stdct(x: Waveform, config: FrameConfig = FrameConfig()) -> RealSpectrogram:
    if len(x) == 0:
        raise DomainError("stdct of an empty waveform")
    grid = stdct_frames(x.samples, config)
    return RealSpectrogram(grid, config=config, length=len(x), sample_rate=x.sample_rate)


def istdct(spec: RealSpectrogram) -> Waveform:
    samples = istdct_frames(spec.frames, spec.config, spec.length)
    return Waveform(samples, spec.sample_rate)


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix, rows are basis vectors."""
    return scipy.fft.dct(np.eye(n), type=2, axis=0, norm="ortho")
