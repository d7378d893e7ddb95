"""Synthetic noisy/clean pair generation and WAV I/O.

Clean signals are harmonic tones (slowly modulated fundamental plus
decaying overtones) so the frequency-transformation matrices have real
harmonic structure to pick up; mixtures follow the fixed additive rule
noisy = clean + weight * noise with no renormalization.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .dsp import Waveform

NOISE_KINDS = ("white", "babble", "band")


@dataclass
class SynthConfig:
    seed: int = 0
    duration_s: float = 3.0
    sample_rate: int = 16000
    num_partials: int = 8
    f0_range: tuple = (80.0, 400.0)
    noise_kind: str = "white"
    noise_rms: float = 0.3
    mix_weight: float = 0.3
    fm_depth: float = 0.04

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"noise_kind must be one of {NOISE_KINDS}")
        if self.f0_range[1] * self.num_partials >= self.sample_rate / 2:
            raise ValueError(
                f"highest partial {self.f0_range[1] * self.num_partials:.0f} Hz "
                f"exceeds Nyquist for sample rate {self.sample_rate}"
            )

    @property
    def num_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate))


def synth_speechlike(seed, cfg: SynthConfig) -> Waveform:
    """Harmonic tone with slow FM and per-partial amplitude envelopes."""
    rng = np.random.default_rng(seed)
    n = cfg.num_samples
    t = np.arange(n) / cfg.sample_rate
    f0 = rng.uniform(*cfg.f0_range)
    fm_rate = rng.uniform(0.5, 3.0)
    fm_phase = rng.uniform(0, 2 * np.pi)
    inst_f0 = f0 * (1.0 + cfg.fm_depth * np.sin(2 * np.pi * fm_rate * t + fm_phase))
    phase0 = 2 * np.pi * np.cumsum(inst_f0) / cfg.sample_rate

    x = np.zeros(n)
    for k in range(1, cfg.num_partials + 1):
        amp = rng.uniform(0.5, 1.0) / k
        env_rate = rng.uniform(0.3, 2.0)
        env_phase = rng.uniform(0, 2 * np.pi)
        env = 0.55 + 0.45 * np.sin(2 * np.pi * env_rate * t + env_phase)
        x += amp * env * np.sin(k * phase0 + rng.uniform(0, 2 * np.pi))

    peak = np.max(np.abs(x))
    if peak > 0:
        x *= 0.5 / peak
    return Waveform(x, cfg.sample_rate)


def synth_noise(seed, cfg: SynthConfig) -> Waveform:
    rng = np.random.default_rng(seed)
    n = cfg.num_samples
    if cfg.noise_kind == "white":
        x = rng.standard_normal(n)
    elif cfg.noise_kind == "babble":
        # sum of amplitude-modulated random tones
        t = np.arange(n) / cfg.sample_rate
        x = np.zeros(n)
        for _ in range(40):
            f = rng.uniform(100.0, 4000.0)
            mod = 0.5 + 0.5 * np.sin(
                2 * np.pi * rng.uniform(0.5, 4.0) * t + rng.uniform(0, 2 * np.pi))
            x += mod * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    else:  # band-limited white
        x = rng.standard_normal(n)
        lo = rng.uniform(300.0, 1000.0)
        hi = rng.uniform(2000.0, 6000.0)
        spec = np.fft.rfft(x)
        freqs = np.fft.rfftfreq(n, 1.0 / cfg.sample_rate)
        spec[(freqs < lo) | (freqs > hi)] = 0.0
        x = np.fft.irfft(spec, n)
    rms = float(np.sqrt(np.mean(x * x)))
    if rms > 0:
        x *= cfg.noise_rms / rms
    return Waveform(x, cfg.sample_rate)


def mix(clean: Waveform, noise: Waveform, w: float = 0.3) -> Waveform:
    if clean.samples.shape != noise.samples.shape:
        raise ValueError(
            f"mix length mismatch: clean {clean.samples.size}, noise {noise.samples.size}"
        )
    return Waveform(clean.samples + w * noise.samples, clean.sample_rate)


# -- WAV I/O (RIFF, PCM16LE, mono) ---------------------------------------------


class WavError(Exception):
    pass


class WavHeaderError(WavError):
    """Not a RIFF/WAVE file or chunk structure is broken."""


class WavEncodingError(WavError):
    """Encoding is not 16-bit integer PCM."""


class WavFormatError(WavError):
    """Channel count or sample rate is unsupported."""


def wav_read(path, expected_rate: int = 16000) -> Waveform:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavHeaderError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavHeaderError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise WavHeaderError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format != 1 or bits != 16:
        raise WavEncodingError(
            f"{path}: only PCM16 is supported (format {audio_format}, {bits} bits)"
        )
    if channels != 1:
        raise WavFormatError(f"{path}: expected mono, got {channels} channels")
    if expected_rate is not None and rate != expected_rate:
        raise WavFormatError(
            f"{path}: expected {expected_rate} Hz, got {rate} Hz "
            "(resampling is out of scope)"
        )
    samples = np.frombuffer(data[:len(data) - len(data) % 2], dtype="<i2")
    return Waveform(samples.astype(np.float64) / 32768.0, rate)


def wav_write(path, w: Waveform) -> None:
    q = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    body = q.tobytes()
    hdr = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    hdr += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, w.sample_rate,
                                 w.sample_rate * 2, 2, 16)
    hdr += b"data" + struct.pack("<I", len(body))
    Path(path).write_bytes(hdr + body)


# -- dataset building -----------------------------------------------------------


@dataclass
class PairManifest:
    pairs: list = field(default_factory=list)  # dicts: id, clean, noisy, split
    root: Path | None = None

    def add(self, pair_id: str, clean: str, noisy: str, split: str) -> None:
        if any(p["id"] == pair_id for p in self.pairs):
            raise ValueError(f"duplicate pair id {pair_id!r}")
        self.pairs.append(
            {"id": pair_id, "clean": clean, "noisy": noisy, "split": split})

    def split(self, tag: str) -> list:
        return [p for p in self.pairs if p["split"] == tag]

    def resolve(self, rel: str) -> Path:
        return (self.root / rel) if self.root else Path(rel)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps({"pairs": self.pairs}, indent=2))

    @classmethod
    def load(cls, path) -> "PairManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        man = cls(pairs=doc["pairs"], root=path.parent)
        for p in man.pairs:
            for key in ("clean", "noisy"):
                if not man.resolve(p[key]).exists():
                    raise FileNotFoundError(
                        f"manifest entry {p['id']}: missing file {man.resolve(p[key])}")
        return man


_SPLIT_CODE = {"train": 1, "val": 2, "test": 3}


def pair_seeds(master_seed: int, split: str, index: int) -> tuple:
    """Disjoint, reproducible (speech, noise) seed pair per utterance."""
    code = _SPLIT_CODE[split]
    return ([master_seed, code, index, 0], [master_seed, code, index, 1])


def generate_pair(cfg: SynthConfig, split: str, index: int):
    s_seed, n_seed = pair_seeds(cfg.seed, split, index)
    clean = synth_speechlike(s_seed, cfg)
    noise = synth_noise(n_seed, cfg)
    return clean, mix(clean, noise, cfg.mix_weight)


def build_dataset(cfg: SynthConfig, n_train: int, n_val: int, out_dir,
                  n_test: int = 0) -> PairManifest:
    """Write seeded WAV pairs plus a JSON manifest; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    man = PairManifest(root=out_dir)
    counts = {"train": n_train, "val": n_val, "test": n_test}
    for split, n in counts.items():
        for i in range(n):
            clean, noisy = generate_pair(cfg, split, i)
            pid = f"{split}_{i:05d}"
            cpath, npath = f"{pid}_clean.wav", f"{pid}_noisy.wav"
            wav_write(out_dir / cpath, clean)
            wav_write(out_dir / npath, noisy)
            man.add(pid, cpath, npath, split)
    man.save(out_dir / "manifest.json")
    return man
