"""STFT analysis/synthesis and spectrogram transforms.

Defaults follow the enhancement network's front end: 16 kHz audio, 25 ms
periodic Hann window, 10 ms hop, 512-point FFT (257 bands). Frames are
taken after reflective padding of half a window on each side plus enough
tail padding to complete the last frame; synthesis uses the least-squares
window so the round trip is exact on the un-padded region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")


@dataclass
class StftConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    sample_rate: int = 16000

    @property
    def win_length(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    @property
    def num_bands(self) -> int:
        return self.fft_size // 2 + 1

    def __post_init__(self):
        if self.win_length > self.fft_size:
            raise ValueError(
                f"window length {self.win_length} exceeds fft size {self.fft_size}"
            )
        if self.hop >= self.win_length:
            raise ValueError(f"hop {self.hop} must be < window {self.win_length}")


@dataclass
class ComplexSpectrogram:
    """T×F complex values stored as a T×F×2 real array (real, imag)."""

    data: np.ndarray
    frame_hop: int
    fft_size: int
    win_length: int = 0
    orig_len: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 2:
            raise ValueError(f"spectrogram must be T×F×2, got {self.data.shape}")
        if not self.win_length:
            self.win_length = self.fft_size

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def num_bands(self) -> int:
        return self.data.shape[1]

    def to_complex(self) -> np.ndarray:
        return self.data[..., 0] + 1j * self.data[..., 1]

    @classmethod
    def from_complex(cls, z: np.ndarray, like: "ComplexSpectrogram" = None,
                     **kw) -> "ComplexSpectrogram":
        data = np.stack([z.real, z.imag], axis=-1)
        if like is not None:
            kw = dict(frame_hop=like.frame_hop, fft_size=like.fft_size,
                      win_length=like.win_length, orig_len=like.orig_len, **kw)
        return cls(data, **kw)


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length n."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def _frame_layout(num_samples: int, cfg: StftConfig):
    win, hop = cfg.win_length, cfg.hop
    pad = win // 2
    padded = num_samples + 2 * pad
    if padded < win:
        tail = win - padded
    else:
        tail = (-(padded - win)) % hop
    num_frames = (padded + tail - win) // hop + 1
    return pad, tail, num_frames


def stft(w: Waveform, cfg: StftConfig = None) -> ComplexSpectrogram:
    cfg = cfg or StftConfig()
    if w.samples.size == 0:
        raise ValueError("cannot take the STFT of an empty waveform")
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"waveform sample rate {w.sample_rate} != configured {cfg.sample_rate}; "
            "resampling is not supported"
        )
    win, hop, nfft = cfg.win_length, cfg.hop, cfg.fft_size
    pad, tail, num_frames = _frame_layout(w.samples.size, cfg)

    x = np.pad(w.samples, (pad, pad), mode="reflect")
    x = np.pad(x, (0, tail))
    idx = np.arange(win)[None, :] + hop * np.arange(num_frames)[:, None]
    frames = x[idx] * hann_window(win)

    # zero-pad the windowed frame symmetrically to the FFT size
    off = (nfft - win) // 2
    buf = np.zeros((num_frames, nfft))
    buf[:, off:off + win] = frames
    spec = np.fft.rfft(buf, axis=1)
    return ComplexSpectrogram.from_complex(
        spec, frame_hop=hop, fft_size=nfft, win_length=win,
        orig_len=w.samples.size)


def istft(s: ComplexSpectrogram, cfg: StftConfig = None,
          length: int | None = None) -> Waveform:
    cfg = cfg or StftConfig()
    win, hop, nfft = cfg.win_length, cfg.hop, cfg.fft_size
    if s.num_bands != cfg.num_bands or s.frame_hop != hop or s.fft_size != nfft:
        raise ValueError(
            f"spectrogram ({s.num_bands} bands, hop {s.frame_hop}, fft {s.fft_size}) "
            f"inconsistent with config ({cfg.num_bands}, {hop}, {nfft})"
        )
    window = hann_window(win)
    off = (nfft - win) // 2
    frames = np.fft.irfft(s.to_complex(), n=nfft, axis=1)[:, off:off + win]

    T = s.num_frames
    total = win + hop * (T - 1)
    num = np.zeros(total)
    den = np.zeros(total)
    wsq = window * window
    for t in range(T):
        lo = t * hop
        num[lo:lo + win] += frames[t] * window
        den[lo:lo + win] += wsq
    out = num / np.maximum(den, 1e-12)

    pad = win // 2
    if length is None:
        length = s.orig_len if s.orig_len is not None else total - 2 * pad
    return Waveform(out[pad:pad + length], cfg.sample_rate)


def compress(s: ComplexSpectrogram, p: float) -> ComplexSpectrogram:
    """Power-law compression of magnitudes (A -> A^p), phase untouched."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"compression exponent must be in (0, 1], got {p}")
    z = s.to_complex()
    mag = np.abs(z)
    scale = np.zeros_like(mag)
    nz = mag > 0
    scale[nz] = mag[nz] ** (p - 1.0)
    return ComplexSpectrogram.from_complex(z * scale, like=s)


def amplitude(s: ComplexSpectrogram) -> np.ndarray:
    return np.hypot(s.data[..., 0], s.data[..., 1])


def phase_unit(s: ComplexSpectrogram, eps: float = 1e-8) -> np.ndarray:
    """Per-bin unit-magnitude phase as T×F×2; degenerate bins map to (1, 0)."""
    mag = amplitude(s)
    out = np.empty_like(s.data)
    good = mag >= eps
    m = np.where(good, mag, 1.0)
    out[..., 0] = np.where(good, s.data[..., 0] / m, 1.0)
    out[..., 1] = np.where(good, s.data[..., 1] / m, 0.0)
    return out
