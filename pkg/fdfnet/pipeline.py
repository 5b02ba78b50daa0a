"""
End-to-end FDFNet signal flow.

    x --STFT--> |X_F|, X_F --FME-Net--> |X1_F| --noisy phase--> X1_F --ISTFT--> x1
    x1 --STDCT--> X1_D ;  x --STDCT--> X_D
    (X_D, X1_D) --DSR-Net--> M_D ;  M_D * X1_D --ISTDCT--> s_hat

Array-level helpers work on batches ``[B, L]`` of equal-length signals and are
shared by training, offline inference and evaluation.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad, record
from .config import DsrNetConfig, FmeNetConfig, FrameConfig
from .dsp import (ComplexSpectrogram, RealSpectrogram, Waveform, istdct_frames,
                  istdct_frames_adjoint, istft_frames, stdct_frames, stft_frames)
from .errors import ShapeError, UsageError
from .models import dsr_forward, fme_forward
from .params import ParamStore

DCTIRM_FLOOR = 1e-8
DEFAULT_CLIP = 2.0
EVAL_MODES = ("model", "stage1", "oracle-mask", "double-oracle", "clean")


@dataclass(frozen=True, eq=False)
class Dctirm:
    values: np.ndarray
    clip_bound: float = DEFAULT_CLIP


def compute_dctirm(clean_dct, pre_enhanced_dct, clip_bound: float = DEFAULT_CLIP) -> Dctirm:
    """Clean over pre-enhanced STDCT, with a sign-preserving floor on the denominator, clipped."""
    s = clean_dct.frames if isinstance(clean_dct, RealSpectrogram) else np.asarray(clean_dct)
    d = pre_enhanced_dct.frames if isinstance(pre_enhanced_dct, RealSpectrogram) else np.asarray(pre_enhanced_dct)
    if s.shape != d.shape:
        raise ShapeError(f"DCTIRM operands differ in shape: {s.shape} vs {d.shape}")
    floor = np.where(d < 0, -DCTIRM_FLOOR, DCTIRM_FLOOR)
    denom = np.where(np.abs(d) < DCTIRM_FLOOR, floor, d)
    return Dctirm(np.clip(s / denom, -clip_bound, clip_bound), clip_bound)


def recombine_phase(magnitude: np.ndarray, noisy: np.ndarray) -> np.ndarray:
    """``magnitude * exp(i * angle(noisy))``; bins where the noisy spectrum is 0 stay 0."""
    size = np.abs(noisy)
    unit = np.divide(noisy, size, out=np.zeros_like(noisy), where=size > 0)
    return magnitude * unit


def istdct_op(frames: Tensor, config: FrameConfig, length: int) -> Tensor:
    """Differentiable ISTDCT of ``[..., T, transform_points]`` frames."""
    n_frames = frames.shape[-2]
    out = istdct_frames(frames.data, config, length).astype(frames.dtype, copy=False)
    return record(out, (frames,), lambda g: (istdct_frames_adjoint(g, config, n_frames),))


def loss_fme(pred_mag, clean_mag) -> Tensor:
    """Mean squared magnitude error."""
    return ag.mean(ag.square(ag.as_tensor(pred_mag) - ag.as_tensor(clean_mag)))


def loss_dsr(s_hat, s, mask_hat, mask) -> Tensor:
    """Mean absolute waveform error plus mean squared mask error."""
    waveform_term = ag.mean(ag.absolute(ag.as_tensor(s_hat) - ag.as_tensor(s)))
    mask_term = ag.mean(ag.square(ag.as_tensor(mask_hat) - ag.as_tensor(mask)))
    return waveform_term + mask_term


# -- batched signal flow --------------------------------------------------

def _freq_major(frames, dtype):
    return np.ascontiguousarray(np.swapaxes(frames, -1, -2), dtype=dtype)


def stage1_batch(noisy: np.ndarray, fme_params: ParamStore, fme_config: FmeNetConfig, frame: FrameConfig,
                 oracle_magnitude: Optional[np.ndarray] = None):
    """Return ``(X1_F [B,T,bins], intermediate [B,L])`` for noisy signals ``[B, L]``."""
    noisy = np.atleast_2d(noisy)
    spec = stft_frames(noisy, frame)
    if oracle_magnitude is None:
        with no_grad():
            est = fme_forward(_freq_major(np.abs(spec), fme_params.dtype), fme_params, fme_config, training=False)
        magnitude = np.swapaxes(est.data, -1, -2)
    else:
        magnitude = oracle_magnitude
    enhanced = recombine_phase(magnitude, spec)
    return enhanced, istft_frames(enhanced, frame, noisy.shape[-1])


def dsr_mask(noisy_dct, pre_dct, dsr_params, dsr_config, training=False, cache=None) -> Tensor:
    """DSR-Net mask for time-major STDCT frames ``[B, T, P]``, returned time-major."""
    mask = dsr_forward(_freq_major(noisy_dct, dsr_params.dtype), _freq_major(pre_dct, dsr_params.dtype),
                       dsr_params, dsr_config, training=training, cache=cache)
    return ag.transpose(mask, (0, 2, 1))


def fme_batch_loss(noisy, clean, fme_params, fme_config, frame, training=True) -> Tensor:
    noisy_mag = np.abs(stft_frames(noisy, frame))
    clean_mag = np.abs(stft_frames(clean, frame))
    pred = fme_forward(_freq_major(noisy_mag, fme_params.dtype), fme_params, fme_config, training=training)
    return loss_fme(pred, _freq_major(clean_mag, fme_params.dtype))


def dsr_batch_loss(noisy, clean, fme_params, fme_config, dsr_params, dsr_config, frame,
                   clip_bound=DEFAULT_CLIP, training=True) -> Tensor:
    """Hybrid loss of one batch; stage 1 runs frozen and the DCTIRM target is recomputed."""
    _, intermediate = stage1_batch(noisy, fme_params, fme_config, frame)
    noisy_dct = stdct_frames(noisy, frame)
    pre_dct = stdct_frames(intermediate, frame)
    target = compute_dctirm(stdct_frames(clean, frame), pre_dct, clip_bound).values
    mask = dsr_mask(noisy_dct, pre_dct, dsr_params, dsr_config, training=training)
    s_hat = istdct_op(mask * pre_dct.astype(dsr_params.dtype), frame, noisy.shape[-1])
    return loss_dsr(s_hat, clean.astype(dsr_params.dtype), mask, target.astype(dsr_params.dtype))


def enhance_batch(noisy, fme_params, fme_config, dsr_params, dsr_config, frame) -> np.ndarray:
    _, intermediate = stage1_batch(noisy, fme_params, fme_config, frame)
    pre_dct = stdct_frames(intermediate, frame)
    with no_grad():
        mask = dsr_mask(stdct_frames(noisy, frame), pre_dct, dsr_params, dsr_config)
    return istdct_frames(mask.data * pre_dct, frame, noisy.shape[-1])


# -- waveform-level API ---------------------------------------------------

class FdfnetPipeline:
    """Both sub-networks plus the framing they were trained with."""

    def __init__(self, frame: FrameConfig, fme_params: ParamStore, fme_config: FmeNetConfig = FmeNetConfig(),
                 dsr_params: Optional[ParamStore] = None, dsr_config: DsrNetConfig = DsrNetConfig(),
                 clip_bound: float = DEFAULT_CLIP):
        self.frame = frame
        self.fme_params = fme_params
        self.fme_config = fme_config
        self.dsr_params = dsr_params
        self.dsr_config = dsr_config
        self.clip_bound = clip_bound

    def stage1_enhance(self, x: Waveform, oracle_clean: Optional[Waveform] = None):
        """Return ``(X1_F, intermediate waveform)``; ``oracle_clean`` substitutes |S_F| for FME-Net."""
        oracle = None
        if oracle_clean is not None:
            oracle = np.abs(stft_frames(oracle_clean.samples[None], self.frame))
        enhanced, intermediate = stage1_batch(x.samples[None], self.fme_params, self.fme_config,
                                              self.frame, oracle)
        spec = ComplexSpectrogram(enhanced[0], config=self.frame, length=len(x), sample_rate=x.sample_rate)
        return spec, Waveform(intermediate[0], x.sample_rate)

    def full_forward(self, x: Waveform) -> Waveform:
        if self.dsr_params is None:
            raise UsageError("pipeline has no DSR-Net parameters", hint="train stage 2 first")
        out = enhance_batch(x.samples[None], self.fme_params, self.fme_config,
                            self.dsr_params, self.dsr_config, self.frame)
        return Waveform(out[0], x.sample_rate)

    def enhance(self, x: Waveform, mode: str = "model", clean: Optional[Waveform] = None) -> Waveform:
        """Run one of the evaluation paths; every mode but ``model`` and ``stage1`` needs ``clean``."""
        if mode not in EVAL_MODES:
            raise UsageError(f"unknown evaluation mode {mode!r}", hint=f"choose one of {', '.join(EVAL_MODES)}")
        if mode == "model":
            return self.full_forward(x)
        if mode == "stage1":
            return self.stage1_enhance(x)[1]
        if clean is None:
            raise UsageError(f"mode {mode!r} needs the clean reference")
        if mode == "clean":
            return clean
        if mode == "oracle-mask":
            pre = stdct_frames(x.samples, self.frame)
        else:
            _, intermediate = self.stage1_enhance(x, oracle_clean=clean)
            pre = stdct_frames(intermediate.samples, self.frame)
        mask = compute_dctirm(stdct_frames(clean.samples, self.frame), pre, self.clip_bound).values
        return Waveform(istdct_frames(mask * pre, self.frame, len(x)), x.sample_rate)


def stage1_enhance(x: Waveform, fme_params: ParamStore, fme_config: FmeNetConfig = FmeNetConfig(),
                   frame: FrameConfig = FrameConfig()):
    return FdfnetPipeline(frame, fme_params, fme_config).stage1_enhance(x)


def full_forward(x: Waveform, fme_params: ParamStore, dsr_params: ParamStore,
                 fme_config: FmeNetConfig = FmeNetConfig(), dsr_config: DsrNetConfig = DsrNetConfig(),
                 frame: FrameConfig = FrameConfig()) -> Waveform:
    return FdfnetPipeline(frame, fme_params, fme_config, dsr_params, dsr_config).full_forward(x)
