"""
The two sub-networks.

FME-Net maps a noisy STFT magnitude to an enhanced magnitude; DSR-Net maps the
noisy and pre-enhanced STDCT spectra to a signed mask. Both are convolutional
recurrent networks (conv encoder, recurrent bottleneck, deconv decoder with
concatenated skips) and both are strictly causal in time.

Networks take frequency-major input ``[B, F, T]`` (or ``[F, T]``) and keep a
``[B, C, F, T]`` trunk internally. Passing a ``cache`` dict runs the network
incrementally: every time-convolution reads and refreshes its past frames and
every time-axis GRU its hidden state under the layer's name.
"""
import logging
from typing import Dict, Optional

import numpy as np
import pandas as pd

from . import autograd as ag
from .autograd import Tensor
from .config import DsrNetConfig, FmeNetConfig
from .errors import ShapeError
from .layers import (batch_norm, bigru_forward, conv2d_causal, deconv2d_causal, gru_forward,
                     layer_norm, linear, prelu, softplus)
from .params import ParamStore

logger = logging.getLogger(__name__)

StreamCache = Dict[str, np.ndarray]


def _history(past, data, frames):
    if past is None:
        past = np.zeros(data.shape[:3] + (frames,), dtype=data.dtype)
    return np.concatenate([past, data], axis=3)[..., data.shape[3] + past.shape[3] - frames:]


def _conv(x, params, name, stride, cache):
    weight = params[f"{name}.weight"]
    past = None if cache is None else cache.get(name)
    out = conv2d_causal(x, weight, params[f"{name}.bias"], stride, past=past)
    if cache is not None:
        cache[name] = _history(past, x.data, weight.shape[3] - 1)
    return out


def _deconv(x, params, name, stride, output_freq, cache):
    weight = params[f"{name}.weight"]
    past = None if cache is None else cache.get(name)
    out = deconv2d_causal(x, weight, params[f"{name}.bias"], stride, output_freq, past=past)
    if cache is not None:
        cache[name] = _history(past, x.data, weight.shape[3] - 1)
    return out


def _gru(seq, params, name, cache):
    state = None if cache is None else cache.get(name)
    out, final = gru_forward(seq, params.gru(name), h0=state)
    if cache is not None:
        cache[name] = final
    return out


def _bn_prelu(x, params, name, training):
    x = batch_norm(x, params[f"{name}.bn.scale"], params[f"{name}.bn.shift"],
                   params.buffer(f"{name}.bn.running_mean"), params.buffer(f"{name}.bn.running_var"),
                   training)
    return prelu(x, params[f"{name}.prelu.slope"], axis=1)


def _as_batch(x, bins, params, what):
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    squeeze = data.ndim == 2
    if squeeze:
        x = ag.reshape(x, (1,) + data.shape) if isinstance(x, Tensor) else data[None]
    shape = x.shape
    if len(shape) != 3 or shape[1] != bins:
        raise ShapeError(f"{what} expects [B, {bins}, T], got shape {tuple(data.shape)}")
    if shape[2] < 1:
        raise ShapeError(f"{what} needs at least one frame")
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=params.dtype))
    return x, squeeze


# -- TFSM -----------------------------------------------------------------

def build_tfsm(params: ParamStore, name: str, channels: int, hidden: int, input_projection: bool):
    freq_in = channels
    if input_projection:
        params.linear(f"{name}.in_proj", hidden, channels)
        freq_in = hidden
    params.gru_layer(f"{name}.freq_fwd", freq_in, hidden)
    params.gru_layer(f"{name}.freq_bwd", freq_in, hidden)
    params.layer_norm(f"{name}.freq_ln", hidden)
    params.prelu(f"{name}.freq_prelu", hidden)
    params.gru_layer(f"{name}.time_gru", hidden, hidden)
    params.layer_norm(f"{name}.time_ln", hidden)
    params.prelu(f"{name}.time_prelu", hidden)
    params.linear(f"{name}.out_proj", channels, hidden)


def tfsm_forward(features: Tensor, params: ParamStore, name: str,
                 cache: Optional[StreamCache] = None) -> Tensor:
    """Time-frequency sequence modeling block on a ``[B, C, F, T]`` trunk.

    Within each frame a BiGRU runs across frequency and its two directions are
    summed; then a GRU runs along time for every bin. Each stage is followed by
    layer norm and PReLU; a linear maps back to C channels and the block input
    is added.
    """
    if features.ndim != 4:
        raise ShapeError(f"TFSM expects [B, C, F, T], got shape {features.shape}")
    b, c, f, t = features.shape
    out_proj = params[f"{name}.out_proj.weight"]
    if out_proj.shape[0] != c:
        raise ShapeError(f"{name} was built for {out_proj.shape[0]} channels, got {c}")
    hidden = out_proj.shape[1]

    seq = ag.reshape(ag.transpose(features, (0, 3, 2, 1)), (b * t, f, c))
    if f"{name}.in_proj.weight" in params:
        seq = linear(seq, params[f"{name}.in_proj.weight"], params[f"{name}.in_proj.bias"])
    fwd, bwd = bigru_forward(seq, params.gru(f"{name}.freq_fwd"), params.gru(f"{name}.freq_bwd"))
    seq = layer_norm(fwd + bwd, params[f"{name}.freq_ln.scale"], params[f"{name}.freq_ln.shift"])
    seq = prelu(seq, params[f"{name}.freq_prelu.slope"], axis=-1)

    seq = ag.reshape(ag.transpose(ag.reshape(seq, (b, t, f, hidden)), (0, 2, 1, 3)), (b * f, t, hidden))
    seq = _gru(seq, params, f"{name}.time_gru", cache)
    seq = layer_norm(seq, params[f"{name}.time_ln.scale"], params[f"{name}.time_ln.shift"])
    seq = prelu(seq, params[f"{name}.time_prelu.slope"], axis=-1)

    seq = linear(seq, out_proj, params[f"{name}.out_proj.bias"])
    return features + ag.transpose(ag.reshape(seq, (b, f, t, c)), (0, 3, 1, 2))


# -- shared CRN skeleton ----------------------------------------------------

def _build_crn(params, config, in_channels, bottleneck_builder):
    ladder = config.freq_ladder()
    prev = in_channels
    for k, ch in enumerate(config.encoder_channels, 1):
        params.conv(f"enc{k}.conv", ch, prev, config.kernel)
        params.batch_norm(f"enc{k}.bn", ch)
        params.prelu(f"enc{k}.prelu", ch)
        prev = ch
    bottleneck_builder(params, config.encoder_channels[-1], ladder[-1])
    n = len(config.decoder_channels)
    for k, ch in enumerate(config.decoder_channels, 1):
        skip = config.encoder_channels[n - k]
        params.deconv(f"dec{k}.deconv", prev + skip, ch, config.kernel)
        if k < n:
            params.batch_norm(f"dec{k}.bn", ch)
            params.prelu(f"dec{k}.prelu", ch)
        prev = ch


def _gru_bottleneck_builder(gru_hidden):
    def build(params, channels, bins):
        width = channels * bins
        prev = width
        for k, hid in enumerate(gru_hidden, 1):
            params.gru_layer(f"rnn{k}", prev, hid)
            prev = hid
        params.linear("fc", width, prev)
    return build


def _tfsm_bottleneck_builder(hidden, input_projection):
    def build(params, channels, bins):
        for k, hid in enumerate(hidden, 1):
            build_tfsm(params, f"tfsm{k}", channels, hid, input_projection)
    return build


def _gru_bottleneck(x, params, n_layers, cache):
    b, c, f, t = x.shape
    seq = ag.reshape(ag.transpose(x, (0, 3, 1, 2)), (b, t, c * f))
    for k in range(1, n_layers + 1):
        seq = _gru(seq, params, f"rnn{k}", cache)
    seq = linear(seq, params["fc.weight"], params["fc.bias"])
    return ag.transpose(ag.reshape(seq, (b, t, c, f)), (0, 2, 3, 1))


def _run_crn(x, params, config, training, cache, bottleneck, head):
    ladder = config.freq_ladder()
    skips = []
    for k in range(1, len(config.encoder_channels) + 1):
        x = _conv(x, params, f"enc{k}.conv", config.stride, cache)
        x = _bn_prelu(x, params, f"enc{k}", training)
        skips.append(x)
    x = bottleneck(x)
    n = len(config.decoder_channels)
    for k in range(1, n + 1):
        x = ag.concat([x, skips[n - k]], axis=1)
        x = _deconv(x, params, f"dec{k}.deconv", config.stride, ladder[n - k], cache)
        x = _bn_prelu(x, params, f"dec{k}", training) if k < n else head(x)
    return x


# -- FME-Net ----------------------------------------------------------------

def build_fme_params(config: FmeNetConfig, rng: np.random.Generator) -> ParamStore:
    params = ParamStore(rng)
    if config.bottleneck == "gru":
        bottleneck = _gru_bottleneck_builder(config.gru_hidden)
    else:
        bottleneck = _tfsm_bottleneck_builder(config.tfsm_hidden, input_projection=False)
    _build_crn(params, config, 1, bottleneck)
    logger.debug("built FME-Net with a %s bottleneck: %d parameters", config.bottleneck, params.count())
    return params


def fme_forward(mag, params: ParamStore, config: FmeNetConfig = FmeNetConfig(), training: bool = False,
                cache: Optional[StreamCache] = None) -> Tensor:
    """Enhanced magnitude ``[B, 257, T]`` from noisy magnitude ``[B, 257, T]``; non-negative."""
    x, squeeze = _as_batch(mag, config.input_bins, params, "FME-Net")
    b, f, t = x.shape
    x = ag.reshape(x, (b, 1, f, t))

    if config.bottleneck == "gru":
        def bottleneck(h):
            return _gru_bottleneck(h, params, len(config.gru_hidden), cache)
    else:
        def bottleneck(h):
            for k in range(1, len(config.tfsm_hidden) + 1):
                h = tfsm_forward(h, params, f"tfsm{k}", cache)
            return h

    out = _run_crn(x, params, config, training, cache, bottleneck, softplus)
    return ag.reshape(out, (f, t) if squeeze else (b, f, t))


# -- DSR-Net ----------------------------------------------------------------

def build_dsr_params(config: DsrNetConfig, rng: np.random.Generator) -> ParamStore:
    params = ParamStore(rng)
    if config.bottleneck == "tfsm":
        bottleneck = _tfsm_bottleneck_builder(config.tfsm_hidden, config.tfsm_input_projection)
    else:
        bottleneck = _gru_bottleneck_builder(config.gru_hidden)
    _build_crn(params, config, config.input_channels, bottleneck)
    logger.debug("built DSR-Net with a %s bottleneck: %d parameters", config.bottleneck, params.count())
    return params


def dsr_forward(noisy_dct, pre_enhanced_dct, params: ParamStore, config: DsrNetConfig = DsrNetConfig(),
                training: bool = False, cache: Optional[StreamCache] = None) -> Tensor:
    """Signed mask ``[B, 512, T]`` from the noisy and pre-enhanced STDCT spectra."""
    noisy, squeeze = _as_batch(noisy_dct, config.input_bins, params, "DSR-Net")
    pre, _ = _as_batch(pre_enhanced_dct, config.input_bins, params, "DSR-Net")
    if noisy.shape != pre.shape:
        raise ShapeError(f"DSR-Net inputs differ in shape: {noisy.shape} vs {pre.shape}")
    b, f, t = noisy.shape
    x = ag.concat([ag.reshape(noisy, (b, 1, f, t)), ag.reshape(pre, (b, 1, f, t))], axis=1)

    if config.bottleneck == "tfsm":
        def bottleneck(h):
            for k in range(1, config.tfsm_blocks + 1):
                h = tfsm_forward(h, params, f"tfsm{k}", cache)
            return h
    else:
        def bottleneck(h):
            return _gru_bottleneck(h, params, len(config.gru_hidden), cache)

    out = _run_crn(x, params, config, training, cache, bottleneck, lambda h: h)
    return ag.reshape(out, (f, t) if squeeze else (b, f, t))


# -- reporting --------------------------------------------------------------

def count_parameters(params: ParamStore) -> int:
    return params.count()


def parameter_report(fme: ParamStore, dsr: ParamStore) -> pd.DataFrame:
    """Per-layer shapes and counts of both networks, FME-Net rows first."""
    tables = []
    for net, params in (("fme", fme), ("dsr", dsr)):
        table = params.layer_table()
        table.insert(0, "net", net)
        tables.append(table)
    return pd.concat(tables, ignore_index=True)


class FmeNet:
    """FME-Net parameters bundled with their configuration."""

    def __init__(self, config: FmeNetConfig = FmeNetConfig(), params: Optional[ParamStore] = None,
                 seed: int = 0):
        self.config = config
        self.params = params if params is not None else build_fme_params(config, np.random.default_rng(seed))

    def __call__(self, mag, training=False, cache=None) -> Tensor:
        return fme_forward(mag, self.params, self.config, training, cache)


class DsrNet:
    """DSR-Net parameters bundled with their configuration."""

    def __init__(self, config: DsrNetConfig = DsrNetConfig(), params: Optional[ParamStore] = None,
                 seed: int = 1):
        self.config = config
        self.params = params if params is not None else build_dsr_params(config, np.random.default_rng(seed))

    def __call__(self, noisy_dct, pre_enhanced_dct, training=False, cache=None) -> Tensor:
        return dsr_forward(noisy_dct, pre_enhanced_dct, self.params, self.config, training, cache)
