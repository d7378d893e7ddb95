"""Optimization loop, checkpointing and the ablation harness."""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from .datagen import PairManifest, wav_read
from .dsp import ComplexSpectrogram, StftConfig, Waveform
from .loss_metrics import LossConfig, delta_psi, phasen_loss, si_sdr
from .masks import apply_mask
from .model import ABLATIONS, PhasenConfig, PhasenModel


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 2e-4
    batch_size: int = 8
    max_steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_steps: int = 0
    seed: int = 0
    checkpoint_every: int = 0  # 0: only initial + final
    eval_every: int = 0        # 0: never
    crop_frames: int = 300     # ~3 s at a 10 ms hop
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    @classmethod
    def warmup_preset(cls, **kw) -> "TrainConfig":
        """Alternate preset: warm-up 6000 steps, lr 5e-4, batch 12."""
        return cls(lr=5e-4, warmup_steps=6000, batch_size=12, **kw)


# -- Adam -----------------------------------------------------------------------


class AdamState:
    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0


def adam_step(params, state: AdamState, cfg: TrainConfig) -> None:
    """One Adam update over `params` (with populated grads), in place."""
    state.step += 1
    t = state.step
    lr = cfg.lr
    if cfg.warmup_steps and t <= cfg.warmup_steps:
        lr = cfg.lr * t / cfg.warmup_steps
    b1, b2 = cfg.beta1, cfg.beta2
    for p in params:
        if p.grad is None:
            continue
        if not np.isfinite(p.grad).all():
            raise TrainingError(f"non-finite gradient in parameter {p.name!r}")
        m = state.m.setdefault(p.name, np.zeros_like(p.data))
        v = state.v.setdefault(p.name, np.zeros_like(p.data))
        m += (1 - b1) * (p.grad - m)
        v += (1 - b2) * (p.grad * p.grad - v)
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p.data -= (lr * mhat / (np.sqrt(vhat) + cfg.eps)).astype(p.data.dtype)


def clip_gradients(params, max_norm: float) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


# -- checkpoint format ------------------------------------------------------------
#
# little-endian: magic "PHSN", u32 version, u32 header length, JSON header
# (config, ordered array table with shapes and offsets, step, rng state),
# then the raw float32 arrays in header order.

MAGIC = b"PHSN"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, model: PhasenModel, opt: AdamState | None = None,
                    rng_state: dict | None = None) -> None:
    arrays = dict(model.state_arrays())
    step = 0
    if opt is not None:
        step = opt.step
        for name, a in opt.m.items():
            arrays[f"adam.m.{name}"] = a
        for name, a in opt.v.items():
            arrays[f"adam.v.{name}"] = a
    table = []
    offset = 0
    blobs = []
    for name, a in arrays.items():
        a32 = np.ascontiguousarray(a, dtype="<f4")
        table.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a32.tobytes())
        offset += a32.nbytes
    header = json.dumps({
        "config": dataclasses.asdict(model.cfg),
        "arrays": table,
        "step": step,
        "rng_state": rng_state,
    }).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


@dataclass
class Checkpoint:
    config: PhasenConfig
    arrays: dict
    step: int
    rng_state: dict | None

    def build_model(self, dtype=np.float32) -> PhasenModel:
        model = PhasenModel(self.config, dtype=dtype)
        model.load_state_arrays(
            {k: v for k, v in self.arrays.items() if not k.startswith("adam.")})
        return model

    def build_optimizer(self) -> AdamState:
        opt = AdamState()
        opt.step = self.step
        for name, a in self.arrays.items():
            if name.startswith("adam.m."):
                opt.m[name[len("adam.m."):]] = a.copy()
            elif name.startswith("adam.v."):
                opt.v[name[len("adam.v."):]] = a.copy()
        return opt


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if len(raw) < 12 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    header = json.loads(raw[12:12 + hlen])
    body = raw[12 + hlen:]
    arrays = {}
    for ent in header["arrays"]:
        n = int(np.prod(ent["shape"])) if ent["shape"] else 1
        end = ent["offset"] + 4 * n
        if end > len(body):
            raise CheckpointError(f"{path}: truncated array {ent['name']!r}")
        arrays[ent["name"]] = np.frombuffer(
            body, dtype="<f4", count=n, offset=ent["offset"]).reshape(ent["shape"])
    return Checkpoint(config=PhasenConfig(**header["config"]), arrays=arrays,
                      step=header["step"], rng_state=header.get("rng_state"))


# -- enhancement ------------------------------------------------------------------


def enhance(model: PhasenModel, noisy: Waveform, stft_cfg: StftConfig,
            passthrough: bool = False):
    """Denoise one waveform; returns (enhanced Waveform, diagnostics dict)."""
    s_in = dsp.stft(noisy, stft_cfg)
    was_training = model.training if model is not None else False
    if model is not None:
        model.eval()
    try:
        if passthrough:
            mask = np.ones(s_in.data.shape[:2])
            psi = dsp.phase_unit(s_in)
            s_out = apply_mask(s_in, mask, psi)
            mask_np, psi_np = mask, psi
        else:
            mask, psi, s_out_t = model.forward(s_in)
            s_out = ComplexSpectrogram(np.asarray(s_out_t.data, dtype=np.float64),
                                       frame_hop=s_in.frame_hop,
                                       fft_size=s_in.fft_size,
                                       win_length=s_in.win_length,
                                       orig_len=s_in.orig_len)
            mask_np = None if mask is None else mask.data
            psi_np = None if psi is None else psi.data
    finally:
        if was_training:
            model.train()
    out = dsp.istft(s_out, stft_cfg, length=noisy.samples.size)
    return out, {"s_in": s_in, "s_out": s_out, "mask": mask_np, "psi": psi_np}


# -- training loop ------------------------------------------------------------------


def _load_split(manifest: PairManifest, split: str, stft_cfg: StftConfig,
                min_frames: int = 0):
    """STFT cache for one split: list of (id, noisy T×F×2, clean T×F×2)."""
    out = []
    for pair in manifest.split(split):
        noisy = wav_read(manifest.resolve(pair["noisy"]), stft_cfg.sample_rate)
        clean = wav_read(manifest.resolve(pair["clean"]), stft_cfg.sample_rate)
        sn = dsp.stft(noisy, stft_cfg)
        sc = dsp.stft(clean, stft_cfg)
        if min_frames and sn.num_frames < min_frames:
            raise TrainingError(
                f"pair {pair['id']!r} has {sn.num_frames} frames, "
                f"shorter than the {min_frames}-frame training crop")
        out.append((pair["id"], sn.data.astype(np.float32),
                    sc.data.astype(np.float32)))
    return out


def validation_si_sdr(model: PhasenModel, manifest: PairManifest,
                      stft_cfg: StftConfig, split: str = "val",
                      limit: int = 0) -> float:
    pairs = manifest.split(split)
    if limit:
        pairs = pairs[:limit]
    scores = []
    for pair in pairs:
        noisy = wav_read(manifest.resolve(pair["noisy"]), stft_cfg.sample_rate)
        clean = wav_read(manifest.resolve(pair["clean"]), stft_cfg.sample_rate)
        out, _ = enhance(model, noisy, stft_cfg)
        scores.append(si_sdr(out, clean))
    return float(np.mean(scores)) if scores else float("nan")


def train(model: PhasenModel, manifest: PairManifest, tcfg: TrainConfig,
          lcfg: LossConfig = None, stft_cfg: StftConfig = None,
          out_dir=None, log=None) -> list[dict]:
    """Run the optimization loop; returns the metrics history.

    Writes `initial.ckpt` / `final.ckpt` (plus periodic `step_N.ckpt`) and a
    `metrics.jsonl` log when `out_dir` is given.
    """
    lcfg = lcfg or LossConfig()
    stft_cfg = stft_cfg or StftConfig()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    data = _load_split(manifest, "train", stft_cfg, min_frames=tcfg.crop_frames)
    if not data:
        raise TrainingError("manifest has no training pairs")

    rng = np.random.default_rng(tcfg.seed)
    opt = AdamState()
    history: list[dict] = []
    log_fh = open(out_dir / "metrics.jsonl", "w") if out_dir is not None else None

    def emit(rec):
        history.append(rec)
        if log_fh:
            log_fh.write(json.dumps(rec) + "\n")
            log_fh.flush()
        if log:
            log(rec)

    if out_dir is not None:
        save_checkpoint(out_dir / "initial.ckpt", model, opt,
                        rng_state=rng.bit_generator.state)
    model.train()
    try:
        for step in range(1, tcfg.max_steps + 1):
            model.zero_grads()
            tot = la_tot = lp_tot = 0.0
            for _ in range(tcfg.batch_size):
                pid, sn, sc = data[rng.integers(len(data))]
                if sn.shape[0] > tcfg.crop_frames:
                    lo = rng.integers(sn.shape[0] - tcfg.crop_frames + 1)
                else:
                    lo = 0
                hi = lo + tcfg.crop_frames
                try:
                    _, _, s_out = model.forward(sn[lo:hi])
                    loss, l_a, l_p = phasen_loss(s_out, sc[lo:hi], lcfg)
                except ValueError as exc:
                    raise TrainingError(f"pair {pid!r}: {exc}") from exc
                (loss * (1.0 / tcfg.batch_size)).backward()
                tot += loss.item() / tcfg.batch_size
                la_tot += l_a.item() / tcfg.batch_size
                lp_tot += l_p.item() / tcfg.batch_size
            clip_gradients(model.parameters(), tcfg.grad_clip)
            adam_step(model.parameters(), opt, tcfg)

            rec = {"step": step, "loss": tot, "l_a": la_tot, "l_p": lp_tot}
            if tcfg.eval_every and step % tcfg.eval_every == 0:
                rec["val_si_sdr"] = validation_si_sdr(
                    model, manifest, stft_cfg, limit=4)
                model.train()
            emit(rec)
            if (out_dir is not None and tcfg.checkpoint_every
                    and step % tcfg.checkpoint_every == 0):
                save_checkpoint(out_dir / f"step_{step}.ckpt", model, opt,
                                rng_state=rng.bit_generator.state)
    finally:
        if log_fh:
            log_fh.close()
    if out_dir is not None:
        save_checkpoint(out_dir / "final.ckpt", model, opt,
                        rng_state=rng.bit_generator.state)
    return history


# -- ablation harness -----------------------------------------------------------------


def ablation_matrix(base_cfg: PhasenConfig, variants, manifest: PairManifest,
                    tcfg: TrainConfig, lcfg: LossConfig = None,
                    stft_cfg: StftConfig = None, eval_split: str = "val",
                    seeds=(0,), log=None) -> dict:
    """Train each named variant with identical seeds/budget and report
    held-out SI-SDR plus phase-difference summaries per (variant, seed)."""
    lcfg = lcfg or LossConfig()
    stft_cfg = stft_cfg or StftConfig()
    rows = []
    for name in ["full", *[v for v in variants if v != "full"]]:
        if name not in ABLATIONS:
            raise ValueError(
                f"unknown ablation {name!r}; valid: {', '.join(sorted(ABLATIONS))}")
        cfg = base_cfg.with_ablation(name)
        for seed in seeds:
            model = PhasenModel(cfg, seed=seed)
            train(model, manifest,
                  dataclasses.replace(tcfg, seed=seed), lcfg, stft_cfg, log=log)
            scores, imag = [], []
            for pair in manifest.split(eval_split):
                noisy = wav_read(manifest.resolve(pair["noisy"]),
                                 stft_cfg.sample_rate)
                clean = wav_read(manifest.resolve(pair["clean"]),
                                 stft_cfg.sample_rate)
                out, diag = enhance(model, noisy, stft_cfg)
                scores.append(si_sdr(out, clean))
                if diag["psi"] is not None:
                    _, summ = delta_psi(diag["psi"], diag["s_in"])
                    imag.append(summ["mean_abs_imag"])
            rows.append({
                "variant": name,
                "seed": seed,
                "si_sdr": float(np.mean(scores)),
                "mean_abs_imag_dpsi": float(np.mean(imag)) if imag else None,
            })
    rows.sort(key=lambda r: (r["variant"], r["seed"]))
    return {"rows": rows, "budget": {"max_steps": tcfg.max_steps,
                                     "batch_size": tcfg.batch_size},
            "seeds": list(seeds)}
