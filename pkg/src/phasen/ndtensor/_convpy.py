"""Pure-numpy convolution kernels (the fallback backend).

Convolutions are computed as a sum of shifted matrix products, one per
kernel tap, so the heavy lifting lands in BLAS instead of Python loops.
"""

import numpy as np


def conv2d_forward(x, w, b):
    T, F, Cin = x.shape
    kh, kw, _, Cout = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((T + kh - 1, F + kw - 1, Cin), dtype=x.dtype)
    xp[ph:ph + T, pw:pw + F] = x
    out = np.empty((T, F, Cout), dtype=x.dtype)
    out[:] = b
    for u in range(kh):
        for v in range(kw):
            patch = xp[u:u + T, v:v + F].reshape(T * F, Cin)
            out += (patch @ w[u, v]).reshape(T, F, Cout)
    return out


def conv2d_backward(x, w, gy):
    T, F, Cin = x.shape
    kh, kw, _, Cout = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((T + kh - 1, F + kw - 1, Cin), dtype=x.dtype)
    xp[ph:ph + T, pw:pw + F] = x
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    gyf = gy.reshape(T * F, Cout)
    for u in range(kh):
        for v in range(kw):
            patch = xp[u:u + T, v:v + F].reshape(T * F, Cin)
            gw[u, v] = patch.T @ gyf
            gxp[u:u + T, v:v + F] += (gyf @ w[u, v].T).reshape(T, F, Cin)
    gx = gxp[ph:ph + T, pw:pw + F].copy()
    gb = gy.sum(axis=(0, 1))
    return gx, gw, gb


def conv1d_forward(x, w, b):
    T, Cin = x.shape
    k, _, Cout = w.shape
    p = k // 2
    xp = np.zeros((T + k - 1, Cin), dtype=x.dtype)
    xp[p:p + T] = x
    out = np.empty((T, Cout), dtype=x.dtype)
    out[:] = b
    for u in range(k):
        out += xp[u:u + T] @ w[u]
    return out


def conv1d_backward(x, w, gy):
    T, Cin = x.shape
    k, _, Cout = w.shape
    p = k // 2
    xp = np.zeros((T + k - 1, Cin), dtype=x.dtype)
    xp[p:p + T] = x
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    for u in range(k):
        gw[u] = xp[u:u + T].T @ gy
        gxp[u:u + T] += gy @ w[u].T
    gx = gxp[p:p + T].copy()
    gb = gy.sum(axis=0)
    return gx, gw, gb
