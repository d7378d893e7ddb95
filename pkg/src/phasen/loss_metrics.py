"""Composite training loss and evaluation metrics.

Training loss: mean-squared error on power-law compressed spectrograms,
half on the amplitude alone and half on the full complex values, so that
phase errors at loud bins dominate phase errors at quiet ones.

Metrics: SI-SDR, projection SDR (single-source, optional distortion
filter) and segmental SNR, all in dB, plus the phase-difference map
diagnostic that shows whether the phase head actually rotates anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ndtensor as nd
from .dsp import ComplexSpectrogram, phase_unit
from .ndtensor import Tensor

SDR_CAP_DB = 100.0


@dataclass
class LossConfig:
    p: float = 0.3
    w_a: float = 0.5
    w_p: float = 0.5
    mag_floor: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ValueError(f"compression exponent must be in (0, 1], got {self.p}")
        if self.w_a < 0 or self.w_p < 0:
            raise ValueError("loss weights must be non-negative")


def compress_tensor(s: Tensor, p: float, floor: float = 1e-8):
    """Differentiable power-law compression of a T×F×2 tensor.

    Returns (compressed spectrogram T×F×2, compressed amplitude T×F).
    Magnitudes are floored before exponentiation so the A^p gradient stays
    bounded at silent bins.
    """
    re = s[..., 0]
    im = s[..., 1]
    amp = nd.clip_min(nd.sqrt(re * re + im * im), floor)
    amp_c = amp ** p
    scale = (amp ** (p - 1.0)).reshape(s.shape[0], s.shape[1], 1)
    return s * scale, amp_c


def _compress_np(s: np.ndarray, p: float, floor: float):
    amp = np.maximum(np.hypot(s[..., 0], s[..., 1]), floor)
    return s * (amp ** (p - 1.0))[..., None], amp ** p


def phasen_loss(s_out: Tensor, s_gt, cfg: LossConfig = None):
    """L = w_a * L_a + w_p * L_p on compressed spectrograms.

    `s_out` is the network output (T×F×2 tensor on the tape); `s_gt` is the
    clean target as a ComplexSpectrogram or T×F×2 array. Returns
    (L, L_a, L_p) tensors.
    """
    cfg = cfg or LossConfig()
    gt = s_gt.data if isinstance(s_gt, ComplexSpectrogram) else np.asarray(s_gt)
    if tuple(s_out.shape) != tuple(gt.shape):
        raise ValueError(f"loss shapes differ: output {s_out.shape}, target {gt.shape}")
    out_c, out_amp = compress_tensor(s_out, cfg.p, cfg.mag_floor)
    gt_c, gt_amp = _compress_np(gt, cfg.p, cfg.mag_floor)
    d_amp = out_amp - gt_amp.astype(out_amp.dtype)
    d_full = out_c - gt_c.astype(out_c.dtype)
    l_a = (d_amp * d_amp).mean()
    l_p = (d_full * d_full).mean()
    return cfg.w_a * l_a + cfg.w_p * l_p, l_a, l_p


# -- waveform metrics ----------------------------------------------------------


def _as_samples(w) -> np.ndarray:
    return np.asarray(getattr(w, "samples", w), dtype=np.float64)


def _ratio_db(num: float, den: float) -> float:
    if num <= 0.0:
        return -SDR_CAP_DB
    if den <= num * 10.0 ** (-SDR_CAP_DB / 10.0):
        return SDR_CAP_DB
    return 10.0 * np.log10(num / den)


def si_sdr(est, ref) -> float:
    """Scale-invariant SDR in dB, capped at +100 for exact matches."""
    e, r = _as_samples(est), _as_samples(ref)
    if e.shape != r.shape:
        raise ValueError(f"si_sdr lengths differ: {e.shape} vs {r.shape}")
    r_energy = float(r @ r)
    if r_energy == 0.0:
        raise ValueError("si_sdr: reference has zero energy")
    alpha = float(e @ r) / r_energy
    target = alpha * r
    resid = e - target
    return _ratio_db(float(target @ target), float(resid @ resid))


def sdr_projection(est, ref, filter_len: int = 1) -> float:
    """Single-source projection SDR.

    With filter_len 1 this coincides with SI-SDR; larger values project the
    estimate onto delayed copies of the reference (distortion filter).
    """
    if filter_len == 1:
        return si_sdr(est, ref)
    e, r = _as_samples(est), _as_samples(ref)
    if e.shape != r.shape:
        raise ValueError(f"sdr_projection lengths differ: {e.shape} vs {r.shape}")
    if float(r @ r) == 0.0:
        raise ValueError("sdr_projection: reference has zero energy")
    n = e.size
    L = filter_len
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    fr = np.fft.rfft(r, nfft)
    fe = np.fft.rfft(e, nfft)
    acf = np.fft.irfft(fr * np.conj(fr), nfft)[:L]
    xcf = np.fft.irfft(fe * np.conj(fr), nfft)[:L]
    # Toeplitz normal equations for the L-tap distortion filter
    idx = np.abs(np.subtract.outer(np.arange(L), np.arange(L)))
    R = acf[idx] + 1e-12 * acf[0] * np.eye(L)
    h = np.linalg.solve(R, xcf)
    target = np.convolve(r, h)[:n]
    resid = e - target
    return _ratio_db(float(target @ target), float(resid @ resid))


def ssnr(est, ref, frame: int = 400, hop: int = 160,
         floor_db: float = -10.0, ceil_db: float = 35.0,
         silence_eps: float = 1e-8) -> float:
    """Segmental SNR: per-frame SNR clamped to [floor, ceil], averaged over
    frames whose reference energy exceeds the silence threshold."""
    e, r = _as_samples(est), _as_samples(ref)
    if e.shape != r.shape:
        raise ValueError(f"ssnr lengths differ: {e.shape} vs {r.shape}")
    vals = []
    for lo in range(0, r.size - frame + 1, hop):
        rf = r[lo:lo + frame]
        energy = float(rf @ rf)
        if energy <= silence_eps:
            continue
        err = e[lo:lo + frame] - rf
        err_energy = float(err @ err)
        if err_energy == 0.0:
            snr = ceil_db
        else:
            snr = 10.0 * np.log10(energy / err_energy)
        vals.append(min(max(snr, floor_db), ceil_db))
    if not vals:
        raise ValueError("ssnr: reference is silent in every frame")
    return float(np.mean(vals))


def delta_psi(psi: np.ndarray, s_in: ComplexSpectrogram):
    """Phase-difference map: predicted phase divided by the input phase.

    Both operands are unit magnitude, so the complex division reduces to
    multiplication by the conjugate. Returns (T×F×2 map, summary dict).
    """
    psi = np.asarray(psi)
    if psi.shape != s_in.data.shape:
        raise ValueError(f"delta_psi shapes differ: {psi.shape} vs {s_in.data.shape}")
    pin = phase_unit(s_in)
    zp = psi[..., 0] + 1j * psi[..., 1]
    zi = pin[..., 0] + 1j * pin[..., 1]
    dz = zp * np.conj(zi)
    out = np.stack([dz.real, dz.imag], axis=-1)
    summary = {
        "mean_abs_imag": float(np.mean(np.abs(dz.imag))),
        "mean_abs_re_minus_1": float(np.mean(np.abs(dz.real - 1.0))),
    }
    return out, summary


# -- reports -------------------------------------------------------------------

UNSUPPORTED_METRICS = ("pesq", "csig", "cbak", "covl")


@dataclass
class MetricReport:
    """Per-utterance metric rows plus aggregate means."""

    rows: list = field(default_factory=list)

    def add(self, utt_id: str, **metrics) -> None:
        self.rows.append({"id": utt_id, **metrics})

    def aggregate(self) -> dict:
        if not self.rows:
            return {}
        keys = [k for k in self.rows[0] if k != "id"]
        return {k: float(np.mean([row[k] for row in self.rows])) for k in keys}

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "aggregate": self.aggregate(),
            "unsupported": {m: "unsupported" for m in UNSUPPORTED_METRICS},
        }
