"""
Causal streaming inference.

Samples are pushed in chunks of any size. Stage 1 frames the input exactly as
the offline transforms do (leading ``window_len - hop`` zeros), runs FME-Net one
frame at a time with cached conv history and GRU state, and overlap-adds the
intermediate signal. Every finalized intermediate sample feeds a second framer
that drives DSR-Net the same way. ``flush()`` appends the trailing zeros the
offline path would add, so the concatenated output equals the offline result.

Batch norm always uses running statistics here.
"""
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, Iterator, List, Optional

import numpy as np
import scipy.fft

from .config import FrameConfig
from .dsp import frame_count, make_window, padded_length
from .errors import UsageError
from .pipeline import FdfnetPipeline, dsr_mask, recombine_phase
from .models import fme_forward

logger = logging.getLogger(__name__)

TIMING_WINDOW = 4096


def algorithmic_latency(config: FrameConfig) -> int:
    """Worst-case samples between an input sample arriving and its enhanced sample leaving."""
    return 2 * config.window_len - config.hop - 1


class Framer:
    """Cut a sample stream into windowed full-length frames of the padded signal."""

    def __init__(self, config: FrameConfig):
        self.config = config
        self.window = make_window(config)
        self.pending = np.zeros(config.edge_pad)
        self.frames_out = 0
        self.samples_in = 0

    def push(self, samples: np.ndarray) -> np.ndarray:
        n, hop = self.config.window_len, self.config.hop
        self.samples_in += samples.shape[0]
        self.pending = np.concatenate([self.pending, samples])
        if self.pending.shape[0] < n:
            return np.zeros((0, n))
        count = (self.pending.shape[0] - n) // hop + 1
        frames = np.lib.stride_tricks.sliding_window_view(self.pending, n)[::hop][:count] * self.window
        self.pending = self.pending[count * hop :]
        self.frames_out += count
        return frames


class OverlapAdder:
    """Incremental weighted overlap-add; releases ``hop`` finalized samples per frame."""

    def __init__(self, config: FrameConfig):
        self.config = config
        self.window = make_window(config)
        self.acc = np.zeros(config.window_len)
        self.env = np.zeros(config.window_len)
        self.samples_out = 0

    def push(self, frames: np.ndarray) -> np.ndarray:
        hop = self.config.hop
        out = []
        for frame in frames:
            self.acc += frame * self.window
            self.env += self.window * self.window
            out.append(self._release(hop))
        return np.concatenate(out) if out else np.zeros(0)

    def drain(self) -> np.ndarray:
        return self._release(self.config.window_len)

    def _release(self, count):
        acc, env = self.acc[:count], self.env[:count]
        block = np.divide(acc, env, out=np.zeros(count), where=env > 0)
        self.acc = np.concatenate([self.acc[count:], np.zeros(count)])
        self.env = np.concatenate([self.env[count:], np.zeros(count)])
        self.samples_out += count
        return block


@dataclass
class StreamState:
    """Everything one stream carries between chunks."""
    config: FrameConfig
    input_framer: Framer = None
    stage1_ola: OverlapAdder = None
    stage2_framer: Framer = None
    stage2_ola: OverlapAdder = None
    fme_cache: Dict[str, np.ndarray] = field(default_factory=dict)
    dsr_cache: Dict[str, np.ndarray] = field(default_factory=dict)
    noisy_dct: List[np.ndarray] = field(default_factory=list)
    intermediate_seen: int = 0
    output_seen: int = 0
    intermediate_limit: Optional[int] = None
    finished: bool = False

    def __post_init__(self):
        self.input_framer = Framer(self.config)
        self.stage1_ola = OverlapAdder(self.config)
        self.stage2_framer = Framer(self.config)
        self.stage2_ola = OverlapAdder(self.config)


class StreamingEnhancer:
    """Push-based FDFNet enhancer for one stream.

        enhancer = StreamingEnhancer(pipeline)
        for chunk in chunks:
            out.append(enhancer.push(chunk))
        out.append(enhancer.flush())
    """

    def __init__(self, pipeline: FdfnetPipeline, state: Optional[StreamState] = None,
                 timing_window: Optional[int] = TIMING_WINDOW):
        if pipeline.dsr_params is None:
            raise UsageError("streaming needs both sub-networks", hint="train stage 2 first")
        self.pipeline = pipeline
        self.config = pipeline.frame
        self.state = state if state is not None else StreamState(pipeline.frame)
        # per-frame stage-1 cost of the most recent frames only
        self.hop_timings_ns: Deque[int] = deque(maxlen=timing_window)

    @property
    def latency(self) -> int:
        return algorithmic_latency(self.config)

    def push(self, chunk) -> np.ndarray:
        if self.state.finished:
            raise UsageError("stream already flushed", hint="create a new StreamingEnhancer")
        chunk = np.asarray(chunk, dtype=np.float64).reshape(-1)
        return self._process_input(chunk)

    def flush(self) -> np.ndarray:
        """Finish the stream; returns the remaining samples up to the input length."""
        st = self.state
        if st.finished:
            raise UsageError("stream already flushed")
        length = st.input_framer.samples_in
        if length == 0:
            st.finished = True
            return np.zeros(0)
        n_frames = frame_count(length, self.config)
        total = padded_length(n_frames, self.config) - self.config.edge_pad
        st.intermediate_limit = length
        out = [self._process_input(np.zeros(total - length))]
        out.append(self._route_intermediate(st.stage1_ola.drain()))
        out.append(self._stage2(np.zeros(total - st.stage2_framer.samples_in)))
        out.append(self._emit(st.stage2_ola.drain()))
        st.finished = True
        logger.debug("flushed stream of %d samples over %d frames", length, n_frames)
        return np.concatenate(out)

    def _process_input(self, chunk):
        st = self.state
        frames = st.input_framer.push(chunk)
        if frames.shape[0] == 0:
            return np.zeros(0)
        started = time.perf_counter_ns()
        n = self.config.window_len
        spec = scipy.fft.rfft(frames, n=self.config.transform_points, axis=-1)
        st.noisy_dct.extend(scipy.fft.dct(frames, type=2, n=self.config.transform_points, axis=-1, norm="ortho"))
        p = self.pipeline
        mag = np.ascontiguousarray(np.abs(spec).T[None], dtype=p.fme_params.dtype)
        est = fme_forward(mag, p.fme_params, p.fme_config, training=False, cache=st.fme_cache).data[0].T
        enhanced = recombine_phase(est, spec)
        time_frames = scipy.fft.irfft(enhanced, n=self.config.transform_points, axis=-1)[:, :n]
        out = self._route_intermediate(st.stage1_ola.push(time_frames))
        per_frame = (time.perf_counter_ns() - started) // frames.shape[0]
        self.hop_timings_ns.extend([per_frame] * frames.shape[0])
        return out

    def _route_intermediate(self, block):
        """Drop the leading padding region and anything past the input length, then run stage 2."""
        st = self.state
        pad = self.config.edge_pad
        start = st.stage1_ola.samples_out - block.shape[0]
        skip = max(pad - start, 0)
        block = block[skip:]
        if st.intermediate_limit is not None:
            block = block[: max(st.intermediate_limit - st.intermediate_seen, 0)]
        st.intermediate_seen += block.shape[0]
        return self._stage2(block)

    def _stage2(self, samples):
        st = self.state
        frames = st.stage2_framer.push(samples)
        if frames.shape[0] == 0:
            return np.zeros(0)
        p = self.pipeline
        k = frames.shape[0]
        pre = scipy.fft.dct(frames, type=2, n=self.config.transform_points, axis=-1, norm="ortho")
        noisy = np.stack(st.noisy_dct[:k])
        del st.noisy_dct[:k]
        mask = dsr_mask(noisy[None], pre[None], p.dsr_params, p.dsr_config, cache=st.dsr_cache).data[0]
        time_frames = scipy.fft.idct(mask * pre, type=2, axis=-1, norm="ortho")[:, : self.config.window_len]
        return self._emit(st.stage2_ola.push(time_frames))

    def _emit(self, block):
        st = self.state
        start = st.stage2_ola.samples_out - block.shape[0]
        block = block[max(self.config.edge_pad - start, 0):]
        if st.intermediate_limit is not None:
            block = block[: max(st.intermediate_limit - st.output_seen, 0)]
        st.output_seen += block.shape[0]
        return block


def enhance_streaming(chunks: Iterable, pipeline: FdfnetPipeline,
                      state: Optional[StreamState] = None) -> Iterator[np.ndarray]:
    """Yield one enhanced block per input chunk, then the flushed tail."""
    enhancer = StreamingEnhancer(pipeline, state)
    for chunk in chunks:
        yield enhancer.push(chunk)
    yield enhancer.flush()


def probe_latency(pipeline: FdfnetPipeline, impulse_at: int, total: int) -> int:
    """Feed an impulse one sample at a time and count samples until its output slot is emitted."""
    enhancer = StreamingEnhancer(pipeline)
    emitted = 0
    for i in range(total):
        emitted += enhancer.push(np.array([1.0 if i == impulse_at else 0.0])).shape[0]
        if emitted > impulse_at:
            return i - impulse_at
    raise UsageError(f"impulse output not emitted within {total} samples", hint="increase total")
