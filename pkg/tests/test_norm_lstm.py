"""Normalization layers and the fused LSTM.

The LSTM oracle is a direct transcription of the cell equations with
explicit per-step state, independent of the fused production kernel.
"""

import numpy as np
import pytest

import phasen.ndtensor as nd
from phasen.ndtensor import NormState, Tensor


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_oracle(x, wx, wh, b, reverse=False):
    """Cell equations, one timestep at a time; gates ordered i, f, g, o."""
    xs = x[::-1] if reverse else x
    T, _ = x.shape
    H = wh.shape[0]
    h = np.zeros(H)
    c = np.zeros(H)
    out = np.zeros((T, H))
    for t in range(T):
        z = xs[t] @ wx + h @ wh + b
        i = sigmoid(z[0:H])
        f = sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = sigmoid(z[3 * H:4 * H])
        c = f * c + i * g
        h = o * np.tanh(c)
        out[t] = h
    return out[::-1] if reverse else out


def rand_lstm_params(rng, D, H):
    return (Tensor(rng.normal(size=(D, 4 * H)), requires_grad=True),
            Tensor(rng.normal(size=(H, 4 * H)), requires_grad=True),
            Tensor(rng.normal(size=4 * H), requires_grad=True))


class TestBatchNorm:
    def test_training_normalizes_batch(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(2.0, 3.0, size=(50, 7, 4)))
        g = Tensor(np.ones(4))
        b = Tensor(np.zeros(4))
        st = NormState(4, dtype=np.float64)
        y = nd.batch_norm(x, g, b, st, training=True).data
        np.testing.assert_allclose(y.mean(axis=(0, 1)), 0.0, atol=1e-10)
        np.testing.assert_allclose(y.std(axis=(0, 1)), 1.0, atol=1e-3)

    def test_affine_parameters_apply(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(size=(30, 3)))
        g = Tensor(np.full(3, 2.0))
        b = Tensor(np.full(3, 5.0))
        st = NormState(3, dtype=np.float64)
        y = nd.batch_norm(x, g, b, st, training=True).data
        np.testing.assert_allclose(y.mean(axis=0), 5.0, atol=1e-10)

    def test_running_stats_update_and_eval_uses_them(self):
        rng = np.random.default_rng(2)
        st = NormState(2, dtype=np.float64, momentum=0.1)
        x = rng.normal(3.0, 2.0, size=(400, 2))
        g, b = Tensor(np.ones(2)), Tensor(np.zeros(2))
        for _ in range(100):
            nd.batch_norm(Tensor(x), g, b, st, training=True)
        # EMA converges to the (biased) batch statistics at rate 0.9^n
        np.testing.assert_allclose(st.mean, x.mean(axis=0), rtol=1e-4)
        np.testing.assert_allclose(st.var, x.var(axis=0), rtol=1e-4)
        probe = Tensor(np.array([x.mean(axis=0)]))
        y = nd.batch_norm(probe, g, b, st, training=False).data
        np.testing.assert_allclose(y, 0.0, atol=1e-3)

    def test_eval_mode_is_deterministic_per_sample(self):
        st = NormState(2, dtype=np.float64)
        st.mean[:] = [1.0, -1.0]
        st.var[:] = [4.0, 0.25]
        x = Tensor(np.array([[3.0, 0.0]]))
        g, b = Tensor(np.ones(2)), Tensor(np.zeros(2))
        y = nd.batch_norm(x, g, b, st, training=False).data
        np.testing.assert_allclose(y, [[2.0 / np.sqrt(4 + 1e-5),
                                        1.0 / np.sqrt(0.25 + 1e-5)]])

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ValueError, match="channels"):
            nd.batch_norm(Tensor(np.zeros((2, 3))), Tensor(np.zeros(4)),
                          Tensor(np.zeros(4)), NormState(4), training=True)


class TestGlobalLayerNorm:
    def test_scalar_statistics(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(5.0, 2.0, size=(8, 6, 3)))
        y = nd.global_layer_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3))).data
        assert abs(y.mean()) < 1e-10
        np.testing.assert_allclose(y.std(), 1.0, atol=1e-3)

    def test_invariant_to_global_shift_and_scale(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(5, 4, 2))
        g, b = Tensor(np.ones(2)), Tensor(np.zeros(2))
        y1 = nd.global_layer_norm(Tensor(x), g, b).data
        y2 = nd.global_layer_norm(Tensor(3.0 * x + 7.0), g, b).data
        # exact invariance is broken only by the eps inside the norm
        np.testing.assert_allclose(y1, y2, atol=1e-4)


class TestLstm:
    @pytest.mark.parametrize("reverse", [False, True])
    def test_matches_cell_oracle(self, reverse):
        rng = np.random.default_rng(5)
        T, D, H = 6, 3, 4
        x = Tensor(rng.normal(size=(T, D)))
        wx, wh, b = rand_lstm_params(rng, D, H)
        got = nd.lstm(x, wx, wh, b, reverse=reverse).data
        want = lstm_oracle(x.data, wx.data, wh.data, b.data, reverse=reverse)
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)

    def test_bilstm_is_concat_of_directions(self):
        rng = np.random.default_rng(6)
        T, D, H = 5, 2, 3
        x = Tensor(rng.normal(size=(T, D)))
        fwd = rand_lstm_params(rng, D, H)
        bwd = rand_lstm_params(rng, D, H)
        y = nd.bilstm(x, fwd, bwd).data
        assert y.shape == (T, 2 * H)
        np.testing.assert_allclose(y[:, :H], nd.lstm(x, *fwd).data)
        np.testing.assert_allclose(y[:, H:],
                                   nd.lstm(x, *bwd, reverse=True).data)

    def test_reverse_direction_sees_future_context(self):
        # an impulse at the last step must influence the first output of
        # the reversed pass but not of the forward pass
        rng = np.random.default_rng(7)
        D, H = 2, 3
        wx, wh, b = rand_lstm_params(rng, D, H)
        x0 = np.zeros((4, D))
        x1 = x0.copy()
        x1[-1] = 5.0
        f0 = nd.lstm(Tensor(x0), wx, wh, b).data
        f1 = nd.lstm(Tensor(x1), wx, wh, b).data
        np.testing.assert_allclose(f0[0], f1[0])
        r0 = nd.lstm(Tensor(x0), wx, wh, b, reverse=True).data
        r1 = nd.lstm(Tensor(x1), wx, wh, b, reverse=True).data
        assert np.abs(r0[0] - r1[0]).max() > 1e-6

    def test_shape_validation(self):
        rng = np.random.default_rng(8)
        wx, wh, b = rand_lstm_params(rng, 3, 2)
        with pytest.raises(ValueError, match="inconsistent"):
            nd.lstm(Tensor(np.zeros((4, 5))), wx, wh, b)

    def test_bptt_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        T, D, H = 5, 3, 2
        x = Tensor(rng.normal(size=(T, D)), requires_grad=True)
        wx, wh, b = rand_lstm_params(rng, D, H)
        proj = rng.normal(size=(T, 2 * H))
        fwd = (wx, wh, b)
        bwd = rand_lstm_params(rng, D, H)
        (nd.bilstm(x, fwd, bwd) * proj).sum().backward()
        h = 1e-6
        for tensor in (x, wx, wh, b, *bwd):
            flat = tensor.data.reshape(-1)
            for idx in rng.choice(flat.size, size=min(3, flat.size),
                                  replace=False):
                orig = flat[idx]

                def f():
                    of = lstm_oracle(x.data, wx.data, wh.data, b.data)
                    ob = lstm_oracle(x.data, bwd[0].data, bwd[1].data,
                                     bwd[2].data, reverse=True)
                    return float((np.concatenate([of, ob], axis=1) * proj).sum())

                flat[idx] = orig + h
                up = f()
                flat[idx] = orig - h
                dn = f()
                flat[idx] = orig
                np.testing.assert_allclose(
                    tensor.grad.reshape(-1)[idx], (up - dn) / (2 * h),
                    rtol=2e-4, atol=1e-7)
