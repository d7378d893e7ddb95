"""Command-line entry point.

Configuration is a JSON file with sections `model`, `stft`, `loss`,
`train`, `synth`, each mirroring the corresponding dataclass; dotted
`--set section.key=value` overrides win over the file. Every command
echoes its fully resolved configuration for provenance.

Exit codes: 0 success, 2 usage/config error, 3 I/O error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import checks, dsp, trainer
from .datagen import (PairManifest, SynthConfig, WavError, build_dataset,
                      wav_read, wav_write)
from .dsp import StftConfig
from .loss_metrics import (LossConfig, MetricReport, delta_psi, sdr_projection,
                           si_sdr, ssnr)
from .masks import oracle_mask_spectrogram
from .model import ABLATIONS, PhasenConfig, PhasenModel, inspect_ftm
from .trainer import (CheckpointError, TrainConfig, TrainingError,
                      load_checkpoint, save_checkpoint)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

_SECTIONS = {
    "model": PhasenConfig,
    "stft": StftConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "synth": SynthConfig,
}


class ConfigError(ValueError):
    pass


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def load_config(path: str | None, overrides: list[str]) -> dict:
    """Merge config file and dotted overrides into {section: {key: value}}."""
    doc: dict = {}
    if path:
        doc = json.loads(Path(path).read_text())
    for section, body in doc.items():
        if section not in _SECTIONS:
            raise ConfigError(
                f"unknown config section {section!r}; valid: {', '.join(_SECTIONS)}")
        if not isinstance(body, dict):
            raise ConfigError(f"config section {section!r} must be an object")
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, value = item.split("=", 1)
        section, field_name = key.split(".", 1)
        doc.setdefault(section, {})[field_name] = _coerce(value)
    for section, body in doc.items():
        if section not in _SECTIONS:
            raise ConfigError(
                f"unknown config section {section!r}; valid: {', '.join(_SECTIONS)}")
        valid = {f.name for f in dataclasses.fields(_SECTIONS[section])}
        for k in body:
            if k not in valid:
                raise ConfigError(
                    f"unknown key {k!r} in section {section!r}; "
                    f"valid: {', '.join(sorted(valid))}")
    return doc


def _tupled(cls, body: dict) -> dict:
    out = dict(body)
    for k, v in out.items():
        if isinstance(v, list):
            out[k] = tuple(tuple(e) if isinstance(e, list) else e for e in v)
    return out


def build_configs(doc: dict):
    stft_cfg = StftConfig(**doc.get("stft", {}))
    model_body = _tupled(PhasenConfig, doc.get("model", {}))
    # the band count follows the STFT unless pinned explicitly
    model_body.setdefault("num_bands", stft_cfg.num_bands)
    model_cfg = PhasenConfig(**model_body)
    if model_cfg.num_bands != stft_cfg.num_bands:
        raise ConfigError(
            f"model.num_bands={model_cfg.num_bands} inconsistent with the STFT "
            f"band count {stft_cfg.num_bands}")
    return {
        "model": model_cfg,
        "stft": stft_cfg,
        "loss": LossConfig(**doc.get("loss", {})),
        "train": TrainConfig(**doc.get("train", {})),
        "synth": SynthConfig(**doc.get("synth", {})),
    }


def _echo_config(cfgs: dict) -> dict:
    doc = {name: dataclasses.asdict(c) for name, c in cfgs.items()}
    print(json.dumps({"resolved_config": doc}))
    return doc


def write_pgm(path, arr: np.ndarray) -> None:
    """8-bit binary PGM, min-max normalized."""
    a = np.asarray(arr, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = ((a - lo) * scale).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def _dump_map(out_dir: Path, name: str, arr: np.ndarray) -> None:
    np.savetxt(out_dir / f"{name}.csv", arr, delimiter=",")
    write_pgm(out_dir / f"{name}.pgm", arr)


# -- commands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    cfgs = build_configs(load_config(args.config, args.set))
    synth = cfgs["synth"]
    if args.seed is not None:
        synth = dataclasses.replace(synth, seed=args.seed)
    _echo_config({**cfgs, "synth": synth})
    man = build_dataset(synth, args.n_train, args.n_val, args.out,
                        n_test=args.n_test)
    print(json.dumps({"pairs": len(man.pairs), "manifest":
                      str(Path(args.out) / "manifest.json")}))
    return EXIT_OK


def cmd_train(args) -> int:
    cfgs = build_configs(load_config(args.config, args.set))
    model_cfg = cfgs["model"]
    if args.ablation is not None:
        if args.ablation not in ABLATIONS:
            print(f"unknown ablation {args.ablation!r}; valid: "
                  f"{', '.join(sorted(ABLATIONS))}", file=sys.stderr)
            return EXIT_USAGE
        model_cfg = model_cfg.with_ablation(args.ablation)
    doc = _echo_config({**cfgs, "model": model_cfg})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(doc, indent=2))
    manifest = PairManifest.load(args.data)
    model = PhasenModel(model_cfg, seed=cfgs["train"].seed)
    history = trainer.train(model, manifest, cfgs["train"], cfgs["loss"],
                            cfgs["stft"], out_dir=out_dir)
    final = history[-1] if history else None
    print(json.dumps({"steps": len(history), "final": final,
                      "checkpoint": str(out_dir / "final.ckpt")}))
    return EXIT_OK


def _load_model(ckpt_path) -> tuple:
    ck = load_checkpoint(ckpt_path)
    return ck, ck.build_model()


def cmd_enhance(args) -> int:
    cfgs = build_configs(load_config(args.config, args.set))
    _echo_config(cfgs)
    ck, model = _load_model(args.ckpt)
    if model.cfg.num_bands != cfgs["stft"].num_bands:
        raise ConfigError(
            f"checkpoint expects {model.cfg.num_bands} bands but the STFT "
            f"config yields {cfgs['stft'].num_bands}")
    noisy = wav_read(args.infile, cfgs["stft"].sample_rate)
    out, diag = trainer.enhance(model, noisy, cfgs["stft"])
    wav_write(args.outfile, out)
    if args.dump_spectra:
        dump_dir = Path(args.dump_spectra)
        dump_dir.mkdir(parents=True, exist_ok=True)
        _dump_map(dump_dir, "amp_in", dsp.amplitude(diag["s_in"]))
        _dump_map(dump_dir, "amp_out", dsp.amplitude(diag["s_out"]))
        if diag["mask"] is not None:
            _dump_map(dump_dir, "mask", diag["mask"])
        if diag["psi"] is not None:
            dpsi, summ = delta_psi(diag["psi"], diag["s_in"])
            _dump_map(dump_dir, "dpsi_re", dpsi[..., 0])
            _dump_map(dump_dir, "dpsi_im", dpsi[..., 1])
            (dump_dir / "dpsi_summary.json").write_text(json.dumps(summ))
    print(json.dumps({"out": args.outfile, "samples": int(out.samples.size)}))
    return EXIT_OK


def _metric_row(est, ref) -> dict:
    return {
        "si_sdr_db": si_sdr(est, ref),
        "sdr_db": sdr_projection(est, ref),
        "ssnr_db": ssnr(est, ref),
    }


def cmd_eval(args) -> int:
    cfgs = build_configs(load_config(args.config, args.set))
    _echo_config(cfgs)
    stft_cfg = cfgs["stft"]
    model = None
    if not args.passthrough:
        if args.ckpt is None:
            print("eval needs --ckpt unless --passthrough is given",
                  file=sys.stderr)
            return EXIT_USAGE
        _, model = _load_model(args.ckpt)
    manifest = PairManifest.load(args.data)
    report = MetricReport()
    for pair in manifest.split(args.split):
        noisy = wav_read(manifest.resolve(pair["noisy"]), stft_cfg.sample_rate)
        clean = wav_read(manifest.resolve(pair["clean"]), stft_cfg.sample_rate)
        if args.passthrough:
            out, _ = trainer.enhance(None, noisy, stft_cfg, passthrough=True)
        else:
            out, _ = trainer.enhance(model, noisy, stft_cfg)
        report.add(pair["id"], **_metric_row(out, clean))
    Path(args.report).write_text(json.dumps(report.to_dict(), indent=2))
    print(json.dumps({"rows": len(report.rows), "aggregate": report.aggregate()}))
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfgs = build_configs(load_config(args.config, args.set))
    _echo_config(cfgs)
    stft_cfg = cfgs["stft"]
    manifest = PairManifest.load(args.data)
    report = MetricReport()
    for pair in manifest.split(args.split):
        noisy = wav_read(manifest.resolve(pair["noisy"]), stft_cfg.sample_rate)
        clean = wav_read(manifest.resolve(pair["clean"]), stft_cfg.sample_rate)
        s_noisy = dsp.stft(noisy, stft_cfg)
        s_clean = dsp.stft(clean, stft_cfg)
        s_out = oracle_mask_spectrogram(args.mask, s_noisy, s_clean)
        out = dsp.istft(s_out, stft_cfg, length=noisy.samples.size)
        report.add(pair["id"], **_metric_row(out, clean))
    Path(args.report).write_text(json.dumps(report.to_dict(), indent=2))
    print(json.dumps({"rows": len(report.rows), "aggregate": report.aggregate()}))
    return EXIT_OK


def cmd_inspect_ftm(args) -> int:
    cfgs = build_configs(load_config(args.config, args.set))
    _echo_config(cfgs)
    _, model = _load_model(args.ckpt)
    result = inspect_ftm(model, args.tsb, args.which)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump_map(out_dir, "ftm_energy", result["energy"])
    for h, t in result["templates"].items():
        _dump_map(out_dir, f"template_H{h}", t)
    sidecar = {"tsb": args.tsb, "which": args.which,
               "correlation": {str(h): c for h, c in result["correlation"].items()}}
    (out_dir / "correlations.json").write_text(json.dumps(sidecar, indent=2))
    print(json.dumps(sidecar))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results, failures = checks.run_suites(args.module)
    for key, (err, tol) in sorted(results.items()):
        status = "ok" if err < tol else "FAIL"
        print(f"{status:4s} {key:30s} max_rel_err={err:.3e} tol={tol:g}")
    if failures:
        print(f"gradcheck failed for: {', '.join(failures)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="phasen",
        description="Two-stream phase-aware speech enhancement toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="override a config value by dotted key")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, required=True)
    p.add_argument("--n-val", type=int, required=True)
    p.add_argument("--n-test", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data", required=True, help="manifest JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--ablation", default=None,
                   choices=None, help=f"one of: {', '.join(sorted(ABLATIONS))}")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("enhance", help="denoise one WAV file")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--dump-spectra", default=None)
    p.set_defaults(fn=cmd_enhance)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    common(p)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--passthrough", action="store_true",
                   help="identity mask (noisy baseline row)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("oracle", help="evaluate an ideal-mask upper bound")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--mask", required=True,
                   choices=["irm", "psm", "cirm", "ibm", "smm"])
    p.add_argument("--report", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("inspect-ftm",
                       help="dump a frequency-transformation matrix")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--tsb", type=int, required=True)
    p.add_argument("--which", required=True, choices=["in", "out"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_inspect_ftm)

    p = sub.add_parser("gradcheck", help="verify gradients of the autodiff ops")
    p.add_argument("--module", default=None,
                   help=f"one of: {', '.join(checks.SUITES)}")
    p.set_defaults(fn=cmd_gradcheck)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (WavError, CheckpointError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
