"""Ideal-mask oracles and mask application.

The network predicts a bounded amplitude mask and a unit-magnitude phase
map which are applied per T-F bin; the oracles (IRM/PSM/cIRM, plus IBM and
SMM variants) give the upper-bound baselines and the complex-mask-collapse
diagnostic.
"""

from __future__ import annotations

import numpy as np

from .dsp import ComplexSpectrogram, amplitude, phase_unit

EPS = 1e-8


def _check_aligned(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shapes {a.shape} and {b.shape} differ")


def apply_mask(s_in: ComplexSpectrogram, mask: np.ndarray,
               psi: np.ndarray) -> ComplexSpectrogram:
    """Per bin: out = |S_in| * M * Psi, with Psi given as T×F×2."""
    amp = amplitude(s_in)
    _check_aligned(amp, np.asarray(mask), "apply_mask amplitude mask")
    _check_aligned(s_in.data, np.asarray(psi), "apply_mask phase map")
    scaled = amp * mask
    out = np.stack([scaled * psi[..., 0], scaled * psi[..., 1]], axis=-1)
    return ComplexSpectrogram(out, frame_hop=s_in.frame_hop,
                              fft_size=s_in.fft_size,
                              win_length=s_in.win_length,
                              orig_len=s_in.orig_len)


def apply_complex_mask(s_in: ComplexSpectrogram,
                       cmask: np.ndarray) -> ComplexSpectrogram:
    """Complex per-bin product S_in * mask (mask as T×F complex)."""
    z = s_in.to_complex()
    _check_aligned(z, np.asarray(cmask), "apply_complex_mask")
    return ComplexSpectrogram.from_complex(z * cmask, like=s_in)


def cirm_oracle(noisy: ComplexSpectrogram, clean: ComplexSpectrogram,
                eps: float = EPS) -> np.ndarray:
    """Unbounded complex ideal ratio mask clean/noisy (T×F complex)."""
    zn = noisy.to_complex()
    zc = clean.to_complex()
    _check_aligned(zn, zc, "cirm_oracle")
    mag = np.abs(zn)
    unit = np.where(mag > 0, zn / np.where(mag > 0, mag, 1.0), 1.0 + 0.0j)
    return zc / (unit * np.maximum(mag, eps))


def irm_oracle(noisy_amp: np.ndarray, clean_amp: np.ndarray,
               eps: float = EPS) -> np.ndarray:
    """Ideal ratio mask |clean|/|noisy|, clipped to [0, 1]."""
    _check_aligned(noisy_amp, clean_amp, "irm_oracle")
    return np.clip(clean_amp / np.maximum(noisy_amp, eps), 0.0, 1.0)


def psm_oracle(noisy: ComplexSpectrogram, clean: ComplexSpectrogram,
               eps: float = EPS) -> np.ndarray:
    """Phase-sensitive mask: IRM scaled by cos of the phase gap, in [0, 1]."""
    zn = noisy.to_complex()
    zc = clean.to_complex()
    _check_aligned(zn, zc, "psm_oracle")
    ratio = np.abs(zc) / np.maximum(np.abs(zn), eps)
    cos = np.cos(np.angle(zc) - np.angle(zn))
    return np.clip(ratio * cos, 0.0, 1.0)


def ibm_oracle(noisy_amp: np.ndarray, clean_amp: np.ndarray,
               threshold: float = 0.5, eps: float = EPS) -> np.ndarray:
    """Ideal binary mask: IRM thresholded."""
    return (irm_oracle(noisy_amp, clean_amp, eps) >= threshold).astype(float)


def smm_oracle(noisy_amp: np.ndarray, clean_amp: np.ndarray,
               eps: float = EPS) -> np.ndarray:
    """Spectral magnitude mask: unclipped amplitude ratio (flagged unbounded)."""
    _check_aligned(noisy_amp, clean_amp, "smm_oracle")
    return clean_amp / np.maximum(noisy_amp, eps)


def mask_imag_energy(cmask: np.ndarray) -> float:
    """Mean |imag| of a complex mask; near zero means collapse to a real mask."""
    return float(np.mean(np.abs(np.imag(cmask))))


def oracle_mask_spectrogram(kind: str, noisy: ComplexSpectrogram,
                            clean: ComplexSpectrogram) -> ComplexSpectrogram:
    """Apply the named oracle (irm|psm|cirm|ibm|smm) to the noisy input."""
    if kind == "cirm":
        return apply_complex_mask(noisy, cirm_oracle(noisy, clean))
    na, ca = amplitude(noisy), amplitude(clean)
    psi = phase_unit(noisy)
    if kind == "irm":
        mask = irm_oracle(na, ca)
    elif kind == "psm":
        mask = psm_oracle(noisy, clean)
    elif kind == "ibm":
        mask = ibm_oracle(na, ca)
    elif kind == "smm":
        mask = smm_oracle(na, ca)
    else:
        raise ValueError(f"unknown oracle mask {kind!r}; "
                         "expected irm, psm, cirm, ibm or smm")
    return apply_mask(noisy, mask, psi)
