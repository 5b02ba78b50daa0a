"""
Network layers with hand-written adjoints.

Spectrogram tensors are laid out ``[B, C, F, T]``: batch, channels, frequency,
time. Time is always the causal axis. Each layer records one node on the
active :class:`~fdfnet.autograd.GradientTape`.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from .autograd import Tensor, record
from .errors import ShapeError, UsageError

BN_MOMENTUM = 0.1
NORM_EPS = 1e-5


def _patch(arr, i, j, stride, out_ft):
    sf, st = stride
    fo, to = out_ft
    return arr[:, :, i : i + sf * (fo - 1) + 1 : sf, j : j + st * (to - 1) + 1 : st]


def _conv_core(xp, w, stride, out_ft):
    """Cross-correlation of padded ``xp`` [B,Ci,Fp,Tp] with ``w`` [Co,Ci,kf,kt]."""
    co, _, kf, kt = w.shape
    out = np.zeros((xp.shape[0], co) + tuple(out_ft), dtype=np.result_type(xp, w))
    for i in range(kf):
        for j in range(kt):
            out += np.einsum("oc,bcft->boft", w[:, :, i, j], _patch(xp, i, j, stride, out_ft), optimize=True)
    return out


def _conv_core_adjoint(g, w, stride, xp_shape):
    """Transpose of :func:`_conv_core` with respect to its input."""
    _, _, kf, kt = w.shape
    out_ft = g.shape[2:]
    dxp = np.zeros(xp_shape, dtype=np.result_type(g, w))
    for i in range(kf):
        for j in range(kt):
            _patch(dxp, i, j, stride, out_ft)[...] += np.einsum("oc,boft->bcft", w[:, :, i, j], g, optimize=True)
    return dxp


def _conv_weight_grad(g, xp, w_shape, stride):
    _, _, kf, kt = w_shape
    out_ft = g.shape[2:]
    dw = np.zeros(w_shape, dtype=np.result_type(g, xp))
    for i in range(kf):
        for j in range(kt):
            dw[:, :, i, j] = np.einsum("boft,bcft->oc", g, _patch(xp, i, j, stride, out_ft), optimize=True)
    return dw


def _time_history(past, shape, history, dtype):
    if history == 0:
        return np.zeros(shape[:3] + (0,), dtype=dtype)
    if past is None:
        return np.zeros(shape[:3] + (history,), dtype=dtype)
    past = np.asarray(past, dtype=dtype)
    if past.shape != shape[:3] + (history,):
        raise ShapeError(f"time history must have shape {shape[:3] + (history,)}, got {past.shape}")
    return past


def conv2d_causal(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride=(1, 1),
                  past: Optional[np.ndarray] = None, time_pad: str = "past") -> Tensor:
    """Strided 2-D cross-correlation, causal in time.

    Frequency is padded with ``kf // 2`` zeros per side. Time gets ``kt - 1``
    frames on the past side (zeros, or ``past`` when streaming). ``time_pad="future"``
    pads the other side instead and only exists to pair the layer with
    :func:`deconv2d_causal` as an exact adjoint.
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d_causal expects [B, C, F, T], got shape {x.shape}")
    b, c, f, t = x.shape
    co, ci, kf, kt = weight.shape
    if ci != c:
        raise ShapeError(f"conv weight expects {ci} input channels, got {c}")
    pf = kf // 2
    history = kt - 1
    if time_pad == "past":
        xt = np.concatenate([_time_history(past, x.shape, history, x.dtype), x.data], axis=3)
    elif time_pad == "future":
        xt = np.concatenate([x.data, np.zeros((b, c, f, history), dtype=x.dtype)], axis=3)
    else:
        raise UsageError(f"time_pad must be 'past' or 'future', got {time_pad!r}")
    xp = np.pad(xt, ((0, 0), (0, 0), (pf, pf), (0, 0)))
    fp, tp = xp.shape[2:]
    if fp < kf or tp < kt:
        raise ShapeError(f"kernel {(kf, kt)} larger than padded input {(fp, tp)}")
    out_ft = ((fp - kf) // stride[0] + 1, (tp - kt) // stride[1] + 1)
    out = _conv_core(xp, weight.data, stride, out_ft)
    if bias is not None:
        out += bias.data[None, :, None, None]
    t0 = history if time_pad == "past" else 0

    def backward_fn(g):
        dxp = _conv_core_adjoint(g, weight.data, stride, xp.shape)
        grads = [dxp[:, :, pf : pf + f, t0 : t0 + t], _conv_weight_grad(g, xp, weight.shape, stride)]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record(out, inputs, backward_fn)


def deconv2d_causal(y: Tensor, weight: Tensor, bias: Optional[Tensor], stride, output_freq: int,
                    past: Optional[np.ndarray] = None) -> Tensor:
    """Transposed convolution producing exactly ``output_freq`` bins, causal in time.

    ``weight`` is ``[C_in, C_out, kf, kt]``. The time stride must be 1; the
    output at frame ``t`` mixes input frames ``t - kt + 1 .. t``.
    """
    if y.ndim != 4:
        raise ShapeError(f"deconv2d_causal expects [B, C, F, T], got shape {y.shape}")
    b, c_in, fy, t = y.shape
    wc_in, c_out, kf, kt = weight.shape
    if wc_in != c_in:
        raise ShapeError(f"deconv weight expects {wc_in} input channels, got {c_in}")
    if stride[1] != 1:
        raise ShapeError("deconv2d_causal supports time stride 1 only")
    pf = kf // 2
    if output_freq < 1 or (output_freq + 2 * pf - kf) // stride[0] + 1 != fy:
        raise ShapeError(f"{fy} input bins cannot produce {output_freq} output bins with "
                         f"kernel {kf}, stride {stride[0]}")
    history = kt - 1
    yin = np.concatenate([_time_history(past, y.shape, history, y.dtype), y.data], axis=3)
    xp_shape = (b, c_out, output_freq + 2 * pf, yin.shape[3] + history)
    full = _conv_core_adjoint(yin, weight.data, stride, xp_shape)
    out = full[:, :, pf : pf + output_freq, history : history + t]
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward_fn(g):
        gp = np.zeros(xp_shape, dtype=g.dtype)
        gp[:, :, pf : pf + output_freq, history : history + t] = g
        dyin = _conv_core(gp, weight.data, stride, yin.shape[2:])
        dw = np.zeros(weight.shape, dtype=np.result_type(g, yin))
        for i in range(kf):
            for j in range(kt):
                dw[:, :, i, j] = np.einsum("boft,bcft->oc", yin, _patch(gp, i, j, stride, yin.shape[2:]),
                                           optimize=True)
        grads = [dyin[:, :, :, history:], dw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    inputs = (y, weight) if bias is None else (y, weight, bias)
    return record(np.ascontiguousarray(out), inputs, backward_fn)


def batch_norm(x: Tensor, scale: Tensor, shift: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool) -> Tensor:
    """Per-channel normalization over every axis except axis 1.

    Training mode uses biased batch statistics and updates the running buffers
    in place; evaluation mode only reads them.
    """
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = [1] * x.ndim
    bshape[1] = x.shape[1]
    if training:
        n = x.data.size // x.shape[1]
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - BN_MOMENTUM
        running_mean += BN_MOMENTUM * mu
        running_var *= 1.0 - BN_MOMENTUM
        running_var += BN_MOMENTUM * var
    else:
        mu, var = running_mean, running_var
    inv = (1.0 / np.sqrt(var + NORM_EPS)).reshape(bshape)
    xhat = (x.data - mu.reshape(bshape)) * inv
    out = xhat * scale.data.reshape(bshape) + shift.data.reshape(bshape)

    def backward_fn(g):
        dxhat = g * scale.data.reshape(bshape)
        if training:
            dx = inv / n * (n * dxhat - dxhat.sum(axis=axes, keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
        else:
            dx = dxhat * inv
        return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return record(out.astype(x.dtype, copy=False), (x, scale, shift), backward_fn)


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """Normalize over the last axis."""
    n = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + NORM_EPS)
    xhat = (x.data - mu) * inv
    out = xhat * scale.data + shift.data
    lead = tuple(range(x.ndim - 1))

    def backward_fn(g):
        dxhat = g * scale.data
        dx = inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return record(out.astype(x.dtype, copy=False), (x, scale, shift), backward_fn)


def prelu(x: Tensor, slope: Tensor, axis: int = 1) -> Tensor:
    """``x`` where non-negative, ``slope * x`` elsewhere, one slope per entry of ``axis``."""
    axis = axis % x.ndim
    bshape = [1] * x.ndim
    bshape[axis] = x.shape[axis]
    a = slope.data.reshape(bshape)
    positive = x.data >= 0
    out = np.where(positive, x.data, a * x.data)
    others = tuple(i for i in range(x.ndim) if i != axis)

    def backward_fn(g):
        return np.where(positive, g, a * g), (g * np.minimum(x.data, 0)).sum(axis=others)

    return record(out, (x, slope), backward_fn)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis; ``weight`` is ``[out, in]``."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear expects {weight.shape[1]} input features, got {x.shape[-1]}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward_fn(g):
        flat_g = g.reshape(-1, g.shape[-1])
        flat_x = x.data.reshape(-1, x.shape[-1])
        grads = [g @ weight.data, flat_g.T @ flat_x]
        if bias is not None:
            grads.append(flat_g.sum(axis=0))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record(out, inputs, backward_fn)


def softplus(x: Tensor) -> Tensor:
    out = np.log1p(np.exp(-np.abs(x.data))) + np.maximum(x.data, 0)
    return record(out, (x,), lambda g: (g * expit(x.data),))


@dataclass
class GruParams:
    """Gate matrices in reset / update / candidate order."""
    w_ih: Tensor   # [3H, I]
    w_hh: Tensor   # [3H, H]
    b_ih: Tensor   # [3H]
    b_hh: Tensor   # [3H]

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]

    @property
    def inputs(self) -> Tuple[Tensor, ...]:
        return self.w_ih, self.w_hh, self.b_ih, self.b_hh


def gru_forward(seq: Tensor, params: GruParams, h0: Optional[np.ndarray] = None,
                reverse: bool = False):
    """Run a GRU over ``seq`` [B, T, I].

    Returns the output sequence [B, T, H] (aligned with the input order even when
    ``reverse``) and the final hidden state [B, H] as a plain array.

        r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
        z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
        n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
        h' = (1 - z) * n + z * h
    """
    if seq.ndim != 3:
        raise ShapeError(f"gru_forward expects [B, T, I], got shape {seq.shape}")
    b, t_len, n_in = seq.shape
    w_ih, w_hh = params.w_ih.data, params.w_hh.data
    hid = params.hidden
    if w_ih.shape[1] != n_in:
        raise ShapeError(f"GRU expects {w_ih.shape[1]} input features, got {n_in}")
    dtype = np.result_type(seq.data, w_ih)
    h = np.zeros((b, hid), dtype=dtype) if h0 is None else np.asarray(h0, dtype=dtype)
    if h.shape != (b, hid):
        raise ShapeError(f"GRU state must have shape {(b, hid)}, got {h.shape}")

    gi_all = seq.data @ w_ih.T + params.b_ih.data
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    out = np.zeros((b, t_len, hid), dtype=dtype)
    cache = {}
    for step in order:
        gi = gi_all[:, step]
        gh = h @ w_hh.T + params.b_hh.data
        r = expit(gi[:, :hid] + gh[:, :hid])
        z = expit(gi[:, hid : 2 * hid] + gh[:, hid : 2 * hid])
        hn = gh[:, 2 * hid :]
        n = np.tanh(gi[:, 2 * hid :] + r * hn)
        cache[step] = (h, r, z, n, hn)
        h = (1.0 - z) * n + z * h
        out[:, step] = h

    def backward_fn(g):
        dgi_all = np.zeros_like(gi_all)
        dw_hh = np.zeros_like(w_hh)
        db_hh = np.zeros_like(params.b_hh.data)
        carry = np.zeros((b, hid), dtype=g.dtype)
        for step in reversed(order):
            h_prev, r, z, n, hn = cache[step]
            dh = g[:, step] + carry
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dan = dn * (1.0 - n * n)
            dar = dan * hn * r * (1.0 - r)
            daz = dz * z * (1.0 - z)
            dgi = np.concatenate([dar, daz, dan], axis=1)
            dgh = np.concatenate([dar, daz, dan * r], axis=1)
            dw_hh += dgh.T @ h_prev
            db_hh += dgh.sum(axis=0)
            carry = dh * z + dgh @ w_hh
            dgi_all[:, step] = dgi
        flat = dgi_all.reshape(-1, 3 * hid)
        return (dgi_all @ w_ih, flat.T @ seq.data.reshape(-1, n_in), dw_hh, flat.sum(axis=0), db_hh)

    output = record(out, (seq,) + params.inputs, backward_fn)
    return output, h.copy()


def bigru_forward(seq: Tensor, forward: GruParams, backward: GruParams):
    """Forward and backward GRU outputs over ``seq``, both aligned to the input order.

    Both directions start from a zero state.
    """
    fwd, _ = gru_forward(seq, forward)
    bwd, _ = gru_forward(seq, backward, reverse=True)
    return fwd, bwd
