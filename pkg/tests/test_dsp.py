"""STFT/iSTFT and spectrogram transforms.

Oracles: an O(N^2) direct DFT (independent of numpy.fft), hand-computed
band indices, Parseval's identity, and closed-form compression values.
"""

import numpy as np
import pytest

from phasen import dsp
from phasen.dsp import (ComplexSpectrogram, StftConfig, Waveform, compress,
                        hann_window, istft, phase_unit, stft)


def direct_dft(x):
    """Brute-force DFT of a real frame; returns the first N//2+1 bins."""
    n = len(x)
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    return (x[None, :] * np.exp(-2j * np.pi * k * t / n)).sum(axis=1)


class TestWindow:
    def test_periodic_hann_closed_form(self):
        n = 16
        w = hann_window(n)
        want = 0.5 * (1 - np.cos(2 * np.pi * np.arange(n) / n))
        np.testing.assert_allclose(w, want)
        # periodic (DFT-even): w[0] == 0 and n/2 sample is the peak 1.0
        assert w[0] == 0.0 and w[n // 2] == 1.0

    def test_matches_scipy_periodic_hann(self):
        scipy_signal = pytest.importorskip("scipy.signal")
        n = 400
        np.testing.assert_allclose(
            hann_window(n), scipy_signal.get_window("hann", n, fftbins=True),
            atol=1e-12)


class TestConfig:
    def test_paper_defaults(self):
        cfg = StftConfig()
        assert cfg.win_length == 400       # 25 ms at 16 kHz
        assert cfg.hop == 160              # 10 ms
        assert cfg.num_bands == 257
        assert cfg.fft_size == 512

    def test_validation(self):
        with pytest.raises(ValueError, match="exceeds fft size"):
            StftConfig(window_ms=50, fft_size=512)
        with pytest.raises(ValueError, match="hop"):
            StftConfig(window_ms=10, hop_ms=10)


class TestStftValues:
    def test_each_frame_matches_direct_dft(self):
        rng = np.random.default_rng(0)
        cfg = StftConfig(window_ms=2, hop_ms=1, fft_size=32)
        w = Waveform(rng.normal(size=300))
        s = stft(w, cfg)
        # rebuild the framing exactly as documented: reflect pad half a
        # window, tail pad, hop-strided windowed frames, centered in FFT
        win, hop, nfft = cfg.win_length, cfg.hop, cfg.fft_size
        pad = win // 2
        x = np.pad(w.samples, (pad, pad), mode="reflect")
        need = win + hop * (s.num_frames - 1)
        x = np.pad(x, (0, max(0, need - x.size)))
        off = (nfft - win) // 2
        for t in [0, 1, s.num_frames // 2, s.num_frames - 1]:
            frame = np.zeros(nfft)
            frame[off:off + win] = x[t * hop:t * hop + win] * hann_window(win)
            np.testing.assert_allclose(s.to_complex()[t], direct_dft(frame),
                                       atol=1e-10)

    def test_pure_tone_peaks_at_expected_band(self):
        # 440 Hz at fft 512 / 16 kHz: 440 / (16000/512) = 14.08 -> band 14
        cfg = StftConfig()
        n = 16000
        tone = np.sin(2 * np.pi * 440 * np.arange(n) / 16000)
        s = stft(Waveform(tone), cfg)
        mean_mag = dsp.amplitude(s).mean(axis=0)
        assert int(np.argmax(mean_mag)) == 14

    def test_parseval_on_one_frame(self):
        # energy of a windowed frame equals its spectrum energy / N
        rng = np.random.default_rng(1)
        cfg = StftConfig(window_ms=2, hop_ms=1, fft_size=32)
        w = Waveform(rng.normal(size=64))
        s = stft(w, cfg)
        z = s.to_complex()[0]
        nfft = cfg.fft_size
        # real-input rfft: double the interior bins
        spec_energy = (np.abs(z[0]) ** 2 + np.abs(z[-1]) ** 2
                       + 2 * (np.abs(z[1:-1]) ** 2).sum()) / nfft
        pad = cfg.win_length // 2
        x = np.pad(w.samples, (pad, pad), mode="reflect")
        frame = x[:cfg.win_length] * hann_window(cfg.win_length)
        np.testing.assert_allclose(spec_energy, (frame ** 2).sum(), rtol=1e-10)

    def test_rejects_empty_and_mismatched_rate(self):
        with pytest.raises(ValueError, match="empty"):
            stft(Waveform(np.array([])), StftConfig())
        with pytest.raises(ValueError, match="sample rate"):
            stft(Waveform(np.ones(100), sample_rate=8000), StftConfig())


class TestRoundTrip:
    @pytest.mark.parametrize("n", [777, 1600, 16000])
    def test_random_signals_reconstruct(self, n):
        rng = np.random.default_rng(n)
        cfg = StftConfig()
        x = rng.normal(size=n)
        y = istft(stft(Waveform(x), cfg), cfg).samples
        assert y.shape == x.shape
        rel = np.linalg.norm(y - x) / np.linalg.norm(x)
        assert rel < 1e-6

    def test_explicit_length_crops(self):
        cfg = StftConfig()
        x = np.random.default_rng(5).normal(size=3000)
        y = istft(stft(Waveform(x), cfg), cfg, length=1000).samples
        assert y.size == 1000
        np.testing.assert_allclose(y, x[:1000], atol=1e-8)

    def test_istft_validates_shape_against_config(self):
        cfg = StftConfig()
        s = stft(Waveform(np.random.default_rng(6).normal(size=2000)), cfg)
        with pytest.raises(ValueError, match="inconsistent"):
            istft(s, StftConfig(fft_size=256, window_ms=12))


class TestCompress:
    def test_closed_form_magnitude(self):
        # |z| = 32 -> |z^c| = 32^0.3 = 2^1.5 = 2.82843...
        s = ComplexSpectrogram(np.array([[[32.0, 0.0]]]), frame_hop=1,
                               fft_size=4)
        c = compress(s, 0.3)
        np.testing.assert_allclose(np.abs(c.to_complex()), 32.0 ** 0.3)
        assert abs(float(np.abs(c.to_complex()[0, 0])) - 2.0 ** 1.5) < 1e-12

    def test_phase_preserved_and_zero_safe(self):
        rng = np.random.default_rng(7)
        data = rng.normal(size=(4, 5, 2))
        data[0, 0] = 0.0
        s = ComplexSpectrogram(data, frame_hop=1, fft_size=8)
        c = compress(s, 0.3)
        z, zc = s.to_complex(), c.to_complex()
        nz = np.abs(z) > 0
        np.testing.assert_allclose(np.angle(zc[nz]), np.angle(z[nz]))
        assert zc[0, 0] == 0.0
        np.testing.assert_allclose(np.abs(zc[nz]), np.abs(z[nz]) ** 0.3)

    def test_identity_at_p_one_and_domain_check(self):
        rng = np.random.default_rng(8)
        s = ComplexSpectrogram(rng.normal(size=(3, 4, 2)), frame_hop=1,
                               fft_size=6)
        np.testing.assert_allclose(compress(s, 1.0).data, s.data, atol=1e-12)
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError, match="exponent"):
                compress(s, bad)


class TestPhaseUnit:
    def test_unit_magnitude_and_degenerate_convention(self):
        rng = np.random.default_rng(9)
        data = rng.normal(size=(4, 6, 2))
        data[2, 3] = 0.0
        s = ComplexSpectrogram(data, frame_hop=1, fft_size=10)
        psi = phase_unit(s)
        np.testing.assert_allclose(np.hypot(psi[..., 0], psi[..., 1]), 1.0,
                                   atol=1e-12)
        np.testing.assert_array_equal(psi[2, 3], [1.0, 0.0])
        nz = np.hypot(data[..., 0], data[..., 1]) > 1e-6
        z = s.to_complex()
        np.testing.assert_allclose(
            np.angle(psi[..., 0][nz] + 1j * psi[..., 1][nz]),
            np.angle(z[nz]), atol=1e-10)
