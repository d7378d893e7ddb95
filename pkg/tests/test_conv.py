"""Convolution kernels, checked against a nested-loop oracle.

The oracle below is written independently of both production backends
(compiled extension and numpy fallback); both must agree with it and
with each other.
"""

import numpy as np
import pytest

import phasen.ndtensor as nd
from phasen.ndtensor import Tensor, backend


def conv2d_oracle(x, w, b):
    """Same-padded 2-D convolution, naive quintuple loop."""
    T, F, cin = x.shape
    kh, kw, _, cout = w.shape
    ph, pw = kh // 2, kw // 2
    y = np.zeros((T, F, cout), dtype=np.float64)
    for t in range(T):
        for f in range(F):
            for co in range(cout):
                acc = b[co]
                for i in range(kh):
                    for j in range(kw):
                        ti, fj = t + i - ph, f + j - pw
                        if 0 <= ti < T and 0 <= fj < F:
                            acc += float(x[ti, fj] @ w[i, j, :, co])
                y[t, f, co] = acc
    return y


def conv1d_oracle(x, w, b):
    T, din = x.shape
    k, _, dout = w.shape
    p = k // 2
    y = np.zeros((T, dout), dtype=np.float64)
    for t in range(T):
        for o in range(dout):
            acc = b[o]
            for i in range(k):
                ti = t + i - p
                if 0 <= ti < T:
                    acc += float(x[ti] @ w[i, :, o])
            y[t, o] = acc
    return y


BACKENDS = backend.available_backends()


@pytest.fixture(params=BACKENDS)
def be(request):
    return backend.get_backend(request.param)


class TestForwardAgainstOracle:
    @pytest.mark.parametrize("kh,kw", [(1, 1), (3, 3), (1, 7), (7, 1), (5, 5)])
    def test_conv2d(self, be, kh, kw):
        rng = np.random.default_rng(kh * 10 + kw)
        x = rng.normal(size=(6, 8, 3))
        w = rng.normal(size=(kh, kw, 3, 2))
        b = rng.normal(size=2)
        got = be.conv2d_forward(np.ascontiguousarray(x),
                                np.ascontiguousarray(w),
                                np.ascontiguousarray(b))
        np.testing.assert_allclose(got, conv2d_oracle(x, w, b), rtol=1e-10)

    @pytest.mark.parametrize("k", [1, 3, 9])
    def test_conv1d(self, be, k):
        rng = np.random.default_rng(k)
        x = rng.normal(size=(7, 4))
        w = rng.normal(size=(k, 4, 3))
        b = rng.normal(size=3)
        got = be.conv1d_forward(np.ascontiguousarray(x),
                                np.ascontiguousarray(w),
                                np.ascontiguousarray(b))
        np.testing.assert_allclose(got, conv1d_oracle(x, w, b), rtol=1e-10)


class TestBackendsAgree:
    @pytest.mark.skipif(len(BACKENDS) < 2, reason="only one backend built")
    def test_forward_and_backward_agree(self):
        rng = np.random.default_rng(42)
        x = np.ascontiguousarray(rng.normal(size=(20, 33, 4)))
        w = np.ascontiguousarray(rng.normal(size=(5, 5, 4, 6)))
        b = np.ascontiguousarray(rng.normal(size=6))
        b1, b2 = (backend.get_backend(n) for n in BACKENDS[:2])
        y1, y2 = b1.conv2d_forward(x, w, b), b2.conv2d_forward(x, w, b)
        np.testing.assert_allclose(y1, y2, rtol=1e-12, atol=1e-12)
        g = np.ascontiguousarray(rng.normal(size=y1.shape))
        for a1, a2 in zip(b1.conv2d_backward(x, w, g),
                          b2.conv2d_backward(x, w, g)):
            np.testing.assert_allclose(a1, a2, rtol=1e-10, atol=1e-10)

    def test_set_backend_round_trip(self):
        orig = backend.active_backend()
        for name in BACKENDS:
            backend.set_backend(name)
            assert backend.active_backend() == name
        backend.set_backend(orig)
        with pytest.raises(RuntimeError, match="not built"):
            backend.set_backend("cuda")


class TestAutodiffWrapper:
    def test_conv2d_backward_matches_oracle_fd(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.normal(size=(5, 6, 2)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 3, 2, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=2), requires_grad=True)
        g = rng.normal(size=(5, 6, 2))
        (nd.conv2d(x, w, b) * g).sum().backward()
        # finite-difference a few coordinates of each gradient
        h = 1e-6
        for tensor in (x, w, b):
            flat = tensor.data.reshape(-1)
            n_probe = min(4, flat.size)
            for idx in rng.choice(flat.size, size=n_probe, replace=False):
                orig = flat[idx]
                flat[idx] = orig + h
                up = float((conv2d_oracle(x.data, w.data, b.data) * g).sum())
                flat[idx] = orig - h
                dn = float((conv2d_oracle(x.data, w.data, b.data) * g).sum())
                flat[idx] = orig
                np.testing.assert_allclose(
                    tensor.grad.reshape(-1)[idx], (up - dn) / (2 * h),
                    rtol=1e-4, atol=1e-6)

    def test_rejects_even_kernels_and_bad_channels(self):
        x = Tensor(np.zeros((4, 4, 2)))
        with pytest.raises(ValueError, match="odd"):
            nd.conv2d(x, Tensor(np.zeros((2, 3, 2, 2))), Tensor(np.zeros(2)))
        with pytest.raises(ValueError):
            nd.conv2d(x, Tensor(np.zeros((3, 3, 5, 2))), Tensor(np.zeros(2)))
        with pytest.raises(ValueError):
            nd.conv2d(x, Tensor(np.zeros((3, 3, 2, 2))), Tensor(np.zeros(3)))
