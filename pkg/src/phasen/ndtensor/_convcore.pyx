# Compiled convolution kernels: straight loops with a fixed, sequential
# reduction order. Selected at import time by phasen.ndtensor.backend.

import numpy as np
cimport numpy as cnp

ctypedef fused real:
    float
    double


def conv2d_forward(real[:, :, ::1] x, real[:, :, :, ::1] w, real[::1] b):
    cdef Py_ssize_t T = x.shape[0], F = x.shape[1], Cin = x.shape[2]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], Cout = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t t, f, u, v, ci, co, ti, fj

    if real is float:
        out_np = np.empty((T, F, Cout), dtype=np.float32)
    else:
        out_np = np.empty((T, F, Cout), dtype=np.float64)
    cdef real[:, :, ::1] out = out_np
    cdef real xv

    for t in range(T):
        for f in range(F):
            for co in range(Cout):
                out[t, f, co] = b[co]
            for u in range(kh):
                ti = t + u - ph
                if ti < 0 or ti >= T:
                    continue
                for v in range(kw):
                    fj = f + v - pw
                    if fj < 0 or fj >= F:
                        continue
                    for ci in range(Cin):
                        xv = x[ti, fj, ci]
                        for co in range(Cout):
                            out[t, f, co] += xv * w[u, v, ci, co]
    return out_np


def conv2d_backward(real[:, :, ::1] x, real[:, :, :, ::1] w,
                    real[:, :, ::1] gy):
    cdef Py_ssize_t T = x.shape[0], F = x.shape[1], Cin = x.shape[2]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], Cout = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t t, f, u, v, ci, co, ti, fj

    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    gx_np = np.zeros((T, F, Cin), dtype=dt)
    gw_np = np.zeros((kh, kw, Cin, Cout), dtype=dt)
    gb_np = np.zeros((Cout,), dtype=dt)
    cdef real[:, :, ::1] gx = gx_np
    cdef real[:, :, :, ::1] gw = gw_np
    cdef real[::1] gb = gb_np
    cdef real g, acc

    for t in range(T):
        for f in range(F):
            for co in range(Cout):
                gb[co] += gy[t, f, co]
            for u in range(kh):
                ti = t + u - ph
                if ti < 0 or ti >= T:
                    continue
                for v in range(kw):
                    fj = f + v - pw
                    if fj < 0 or fj >= F:
                        continue
                    for ci in range(Cin):
                        acc = 0
                        for co in range(Cout):
                            g = gy[t, f, co]
                            acc += g * w[u, v, ci, co]
                            gw[u, v, ci, co] += g * x[ti, fj, ci]
                        gx[ti, fj, ci] += acc
    return gx_np, gw_np, gb_np


def conv1d_forward(real[:, ::1] x, real[:, :, ::1] w, real[::1] b):
    cdef Py_ssize_t T = x.shape[0], Cin = x.shape[1]
    cdef Py_ssize_t k = w.shape[0], Cout = w.shape[2]
    cdef Py_ssize_t p = k // 2
    cdef Py_ssize_t t, u, ci, co, ti

    if real is float:
        out_np = np.empty((T, Cout), dtype=np.float32)
    else:
        out_np = np.empty((T, Cout), dtype=np.float64)
    cdef real[:, ::1] out = out_np
    cdef real xv

    for t in range(T):
        for co in range(Cout):
            out[t, co] = b[co]
        for u in range(k):
            ti = t + u - p
            if ti < 0 or ti >= T:
                continue
            for ci in range(Cin):
                xv = x[ti, ci]
                for co in range(Cout):
                    out[t, co] += xv * w[u, ci, co]
    return out_np


def conv1d_backward(real[:, ::1] x, real[:, :, ::1] w, real[:, ::1] gy):
    cdef Py_ssize_t T = x.shape[0], Cin = x.shape[1]
    cdef Py_ssize_t k = w.shape[0], Cout = w.shape[2]
    cdef Py_ssize_t p = k // 2
    cdef Py_ssize_t t, u, ci, co, ti

    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    gx_np = np.zeros((T, Cin), dtype=dt)
    gw_np = np.zeros((k, Cin, Cout), dtype=dt)
    gb_np = np.zeros((Cout,), dtype=dt)
    cdef real[:, ::1] gx = gx_np
    cdef real[:, :, ::1] gw = gw_np
    cdef real[::1] gb = gb_np
    cdef real g, acc

    for t in range(T):
        for co in range(Cout):
            gb[co] += gy[t, co]
        for u in range(k):
            ti = t + u - p
            if ti < 0 or ti >= T:
                continue
            for ci in range(Cin):
                acc = 0
                for co in range(Cout):
                    g = gy[t, co]
                    acc += g * w[u, ci, co]
                    gw[u, ci, co] += g * x[ti, ci]
                gx[ti, ci] += acc
    return gx_np, gw_np, gb_np
