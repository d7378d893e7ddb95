"""Neural-net layer ops on top of the Tensor tape.

Convolutions dispatch to the selected kernel backend; the LSTM is a fused
op with a hand-written backward pass through time (a per-timestep graph of
primitives would dominate runtime with Python overhead).
"""

from __future__ import annotations

import numpy as np

from . import backend
from .tensor import Tensor, as_tensor, concat


def _check_odd(k: int, what: str) -> None:
    if k % 2 == 0:
        raise ValueError(f"{what} must be odd for same padding, got {k}")


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded 2-D convolution, input T×F×Cin, kernel kh×kw×Cin×Cout."""
    if x.ndim != 3 or w.ndim != 4:
        raise ValueError(f"conv2d expects T×F×Cin and kh×kw×Cin×Cout, got {x.shape}, {w.shape}")
    kh, kw, cin, cout = w.shape
    _check_odd(kh, "conv2d kernel height")
    _check_odd(kw, "conv2d kernel width")
    if x.shape[2] != cin:
        raise ValueError(
            f"conv2d channel mismatch: input has {x.shape[2]} channels, kernel expects {cin}"
        )
    if b.shape != (cout,):
        raise ValueError(f"conv2d bias shape {b.shape} != ({cout},)")
    k = backend.get_backend()
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data)
    out = k.conv2d_forward(xd, wd, np.ascontiguousarray(b.data))

    def vjp(g):
        gx, gw, gb = k.conv2d_backward(xd, wd, np.ascontiguousarray(g))
        return gx, gw, gb

    return Tensor._from_op(out, (x, w, b), vjp)


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded 1-D convolution, input T×Cin, kernel k×Cin×Cout."""
    if x.ndim != 2 or w.ndim != 3:
        raise ValueError(f"conv1d expects T×Cin and k×Cin×Cout, got {x.shape}, {w.shape}")
    k_, cin, cout = w.shape
    _check_odd(k_, "conv1d kernel size")
    if x.shape[1] != cin:
        raise ValueError(
            f"conv1d channel mismatch: input has {x.shape[1]} channels, kernel expects {cin}"
        )
    if b.shape != (cout,):
        raise ValueError(f"conv1d bias shape {b.shape} != ({cout},)")
    k = backend.get_backend()
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data)
    out = k.conv1d_forward(xd, wd, np.ascontiguousarray(b.data))

    def vjp(g):
        return k.conv1d_backward(xd, wd, np.ascontiguousarray(g))

    return Tensor._from_op(out, (x, w, b), vjp)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with x: T×Din, w: Din×Dout, b: Dout."""
    return x @ w + b


class NormState:
    """Running statistics for batch norm."""

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.1):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.momentum = momentum

    def update(self, mean: np.ndarray, var: np.ndarray) -> None:
        m = self.momentum
        self.mean = (1 - m) * self.mean + m * mean.astype(self.mean.dtype)
        self.var = (1 - m) * self.var + m * var.astype(self.var.dtype)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: NormState,
               training: bool, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over all leading axes (channels last)."""
    if x.shape[-1] != gamma.shape[0]:
        raise ValueError(
            f"batch_norm: {x.shape[-1]} channels vs {gamma.shape[0]} parameters"
        )
    axes = tuple(range(x.ndim - 1))
    if training:
        mu = x.mean(axis=axes, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=axes, keepdims=True)
        state.update(mu.data.reshape(-1), var.data.reshape(-1))
        xn = (x - mu) * ((var + eps) ** -0.5)
    else:
        mu = state.mean
        var = state.var
        xn = (x - as_tensor(mu, like=x)) * as_tensor(
            (var + eps) ** -0.5, like=x
        )
    return xn * gamma + beta


def global_layer_norm(x: Tensor, gamma: Tensor, beta: Tensor,
                      eps: float = 1e-5) -> Tensor:
    """Normalize with scalar mean/var over the whole map, per-channel affine."""
    if x.shape[-1] != gamma.shape[0]:
        raise ValueError(
            f"global_layer_norm: {x.shape[-1]} channels vs {gamma.shape[0]} parameters"
        )
    mu = x.mean()
    var = ((x - mu) ** 2).mean()
    xn = (x - mu) * ((var + eps) ** -0.5)
    return xn * gamma + beta


# -- LSTM --------------------------------------------------------------------
#
# Gate layout along the 4H axis: input, forget, cell candidate, output.


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor,
         reverse: bool = False) -> Tensor:
    """Single-direction LSTM over x: T×D, zero initial state, output T×H."""
    T, D = x.shape
    H = wh.shape[0]
    if wx.shape != (D, 4 * H) or b.shape != (4 * H,) or wh.shape != (H, 4 * H):
        raise ValueError(
            f"lstm parameter shapes inconsistent: x {x.shape}, wx {wx.shape}, "
            f"wh {wh.shape}, b {b.shape}"
        )
    xd = x.data[::-1] if reverse else x.data
    pre = xd @ wx.data + b.data  # T×4H

    i_s = np.empty((T, H), dtype=xd.dtype)
    f_s = np.empty_like(i_s)
    g_s = np.empty_like(i_s)
    o_s = np.empty_like(i_s)
    c_s = np.empty_like(i_s)
    tc_s = np.empty_like(i_s)
    h_s = np.empty_like(i_s)

    h = np.zeros(H, dtype=xd.dtype)
    c = np.zeros(H, dtype=xd.dtype)
    whd = wh.data
    for t in range(T):
        z = pre[t] + h @ whd
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = _sigmoid(z[3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        i_s[t], f_s[t], g_s[t], o_s[t] = i, f, g, o
        c_s[t], tc_s[t], h_s[t] = c, tc, h

    out = h_s[::-1].copy() if reverse else h_s

    def vjp(g_out):
        gh_seq = g_out[::-1] if reverse else g_out
        dz = np.zeros((T, 4 * H), dtype=xd.dtype)
        dh = np.zeros(H, dtype=xd.dtype)
        dc = np.zeros(H, dtype=xd.dtype)
        for t in range(T - 1, -1, -1):
            dh = dh + gh_seq[t]
            i, f, gg, o = i_s[t], f_s[t], g_s[t], o_s[t]
            tc = tc_s[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * gg
            df = dc * (c_s[t - 1] if t > 0 else 0.0)
            dg = dc * i
            dz[t, :H] = di * i * (1.0 - i)
            dz[t, H:2 * H] = df * f * (1.0 - f)
            dz[t, 2 * H:3 * H] = dg * (1.0 - gg * gg)
            dz[t, 3 * H:] = do * o * (1.0 - o)
            dh = dz[t] @ whd.T
            dc = dc * f
        gx = dz @ wx.data.T
        if reverse:
            gx = gx[::-1].copy()
        gwx = xd.T @ dz
        h_prev = np.vstack([np.zeros((1, H), dtype=xd.dtype), h_s[:-1]])
        gwh = h_prev.T @ dz
        gb = dz.sum(axis=0)
        return gx, gwx, gwh, gb

    return Tensor._from_op(out, (x, wx, wh, b), vjp)


def bilstm(x: Tensor, fwd: tuple, bwd: tuple) -> Tensor:
    """Bidirectional LSTM: concat of a forward and a reversed pass, T×2H."""
    if x.shape[0] < 1:
        raise ValueError("bilstm needs at least one timestep")
    out_f = lstm(x, *fwd, reverse=False)
    out_b = lstm(x, *bwd, reverse=True)
    return concat([out_f, out_b], axis=1)
