"""End-to-end command-line tests: every subcommand, exit codes, config
handling and artifact layout. Everything runs on a miniature STFT
(fft 64 -> 33 bands) and a micro model so the whole file stays fast."""

import json

import numpy as np
import pytest

from phasen.cli import main, write_pgm

MICRO = [
    "--set", "stft.fft_size=64", "--set", "stft.window_ms=3",
    "--set", "stft.hop_ms=1.5",
    "--set", "model.c_a=4", "--set", "model.c_p=2",
    "--set", "model.ftb_cr=2", "--set", "model.head_cr=2",
    "--set", "model.bilstm_hidden=3", "--set", "model.fc_widths=[5,5]",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset + trained micro checkpoint shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    rc = main(["synth", "--set", "synth.duration_s=0.4",
               "--set", "synth.seed=5", "--out", str(data),
               "--n-train", "2", "--n-val", "1", "--n-test", "1"])
    assert rc == 0
    run = root / "run"
    rc = main(["train", *MICRO, "--set", "train.max_steps=3",
               "--set", "train.batch_size=1", "--set", "train.crop_frames=16",
               "--data", str(data / "manifest.json"), "--out", str(run)])
    assert rc == 0
    return {"root": root, "data": data / "manifest.json",
            "ckpt": run / "final.ckpt", "run": run,
            "noisy": data / "test_00000_noisy.wav"}


class TestSynth:
    def test_writes_manifest_and_pairs(self, tmp_path, capsys):
        rc = main(["synth", "--set", "synth.duration_s=0.2", "--out",
                   str(tmp_path / "d"), "--n-train", "1", "--n-val", "1"])
        assert rc == 0
        man = json.loads((tmp_path / "d" / "manifest.json").read_text())
        assert len(man["pairs"]) == 2
        out = capsys.readouterr().out
        assert json.loads(out.splitlines()[-1])["pairs"] == 2

    def test_echoes_resolved_config(self, tmp_path, capsys):
        main(["synth", "--set", "synth.duration_s=0.2", "--seed", "9",
              "--out", str(tmp_path / "d"), "--n-train", "1", "--n-val", "0"])
        first = json.loads(capsys.readouterr().out.splitlines()[0])
        assert first["resolved_config"]["synth"]["seed"] == 9

    def test_config_file_plus_override(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"synth": {"duration_s": 0.2, "seed": 3}}))
        main(["synth", "--config", str(cfg), "--set", "synth.seed=4",
              "--out", str(tmp_path / "d"), "--n-train", "1", "--n-val", "0"])
        first = json.loads(capsys.readouterr().out.splitlines()[0])
        assert first["resolved_config"]["synth"]["seed"] == 4
        assert first["resolved_config"]["synth"]["duration_s"] == 0.2


class TestConfigErrors:
    def test_unknown_key_exits_2(self, tmp_path):
        assert main(["synth", "--set", "synth.durashun=1", "--out",
                     str(tmp_path / "d"), "--n-train", "1", "--n-val", "0"]) == 2

    def test_unknown_section_exits_2(self, tmp_path):
        assert main(["synth", "--set", "audio.rate=8000", "--out",
                     str(tmp_path / "d"), "--n-train", "1", "--n-val", "0"]) == 2

    def test_malformed_override_exits_2(self, tmp_path):
        assert main(["synth", "--set", "justakey", "--out",
                     str(tmp_path / "d"), "--n-train", "1", "--n-val", "0"]) == 2

    def test_band_mismatch_exits_2(self, tmp_path):
        assert main(["synth", "--set", "model.num_bands=99", "--out",
                     str(tmp_path / "d"), "--n-train", "1", "--n-val", "0"]) == 2


class TestTrain:
    def test_writes_config_and_checkpoints(self, workspace):
        run = workspace["run"]
        assert (run / "config.json").exists()
        assert (run / "initial.ckpt").exists()
        assert (run / "final.ckpt").exists()
        doc = json.loads((run / "config.json").read_text())
        assert doc["model"]["c_a"] == 4
        assert len((run / "metrics.jsonl").read_text().splitlines()) == 3

    def test_unknown_ablation_exits_2(self, workspace, tmp_path):
        rc = main(["train", *MICRO, "--data", str(workspace["data"]),
                   "--out", str(tmp_path), "--ablation", "w/o-magic"])
        assert rc == 2

    def test_ablation_variant_trains(self, workspace, tmp_path, capsys):
        rc = main(["train", *MICRO, "--set", "train.max_steps=1",
                   "--set", "train.batch_size=1",
                   "--set", "train.crop_frames=16",
                   "--data", str(workspace["data"]),
                   "--out", str(tmp_path / "abl"), "--ablation", "w/o-A2PP2A"])
        assert rc == 0
        first = json.loads(capsys.readouterr().out.splitlines()[0])
        assert first["resolved_config"]["model"]["disable_a2p"] is True

    def test_missing_manifest_exits_3(self, tmp_path):
        rc = main(["train", *MICRO, "--data", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "o")])
        assert rc == 3


class TestEnhance:
    def test_writes_wav_and_dumps(self, workspace, tmp_path):
        out_wav = tmp_path / "enh.wav"
        dumps = tmp_path / "dumps"
        rc = main(["enhance", *MICRO, "--ckpt", str(workspace["ckpt"]),
                   "--in", str(workspace["noisy"]), "--out", str(out_wav),
                   "--dump-spectra", str(dumps)])
        assert rc == 0
        assert out_wav.exists()
        for stem in ("amp_in", "amp_out", "mask", "dpsi_re", "dpsi_im"):
            assert (dumps / f"{stem}.csv").exists()
            assert (dumps / f"{stem}.pgm").exists()
        summ = json.loads((dumps / "dpsi_summary.json").read_text())
        assert "mean_abs_imag" in summ
        mask = np.loadtxt(dumps / "mask.csv", delimiter=",")
        assert mask.min() >= 0.0 and mask.max() <= 1.0

    def test_missing_input_exits_3(self, workspace, tmp_path):
        rc = main(["enhance", *MICRO, "--ckpt", str(workspace["ckpt"]),
                   "--in", str(tmp_path / "missing.wav"),
                   "--out", str(tmp_path / "o.wav")])
        assert rc == 3

    def test_band_mismatch_with_checkpoint_exits_2(self, workspace, tmp_path):
        rc = main(["enhance", "--ckpt", str(workspace["ckpt"]),
                   "--in", str(workspace["noisy"]),
                   "--out", str(tmp_path / "o.wav")])  # default 257-band stft
        assert rc == 2


class TestEvalAndOracle:
    def test_eval_passthrough_report(self, workspace, tmp_path, capsys):
        rep = tmp_path / "rep.json"
        rc = main(["eval", *MICRO, "--data", str(workspace["data"]),
                   "--report", str(rep), "--split", "test", "--passthrough"])
        assert rc == 0
        doc = json.loads(rep.read_text())
        assert len(doc["rows"]) == 1
        agg = doc["aggregate"]
        # aggregate is the mean of the row values
        for k, v in agg.items():
            np.testing.assert_allclose(
                v, np.mean([r[k] for r in doc["rows"]]))
        assert doc["unsupported"]["pesq"] == "unsupported"

    def test_eval_with_model(self, workspace, tmp_path):
        rep = tmp_path / "rep2.json"
        rc = main(["eval", *MICRO, "--ckpt", str(workspace["ckpt"]),
                   "--data", str(workspace["data"]), "--report", str(rep),
                   "--split", "val"])
        assert rc == 0
        assert json.loads(rep.read_text())["rows"]

    def test_eval_without_ckpt_or_passthrough_exits_2(self, workspace,
                                                      tmp_path):
        rc = main(["eval", *MICRO, "--data", str(workspace["data"]),
                   "--report", str(tmp_path / "r.json")])
        assert rc == 2

    def test_oracle_cirm_beats_passthrough(self, workspace, tmp_path):
        rep_o = tmp_path / "oracle.json"
        rc = main(["oracle", *MICRO, "--data", str(workspace["data"]),
                   "--mask", "cirm", "--report", str(rep_o),
                   "--split", "test"])
        assert rc == 0
        rep_p = tmp_path / "pass.json"
        main(["eval", *MICRO, "--data", str(workspace["data"]),
              "--report", str(rep_p), "--split", "test", "--passthrough"])
        o = json.loads(rep_o.read_text())["aggregate"]["si_sdr_db"]
        p = json.loads(rep_p.read_text())["aggregate"]["si_sdr_db"]
        assert o > p


class TestInspectFtm:
    def test_artifacts_and_sidecar(self, workspace, tmp_path, capsys):
        out = tmp_path / "ftm"
        rc = main(["inspect-ftm", *MICRO, "--ckpt", str(workspace["ckpt"]),
                   "--tsb", "0", "--which", "in", "--out", str(out)])
        assert rc == 0
        assert (out / "ftm_energy.csv").exists()
        assert (out / "ftm_energy.pgm").exists()
        for h in (1, 2, 3):
            assert (out / f"template_H{h}.csv").exists()
        side = json.loads((out / "correlations.json").read_text())
        assert set(side["correlation"]) == {"1", "2", "3"}
        energy = np.loadtxt(out / "ftm_energy.csv", delimiter=",")
        assert energy.shape == (33, 33)

    def test_out_of_range_tsb_exits_2(self, workspace, tmp_path):
        rc = main(["inspect-ftm", *MICRO, "--ckpt", str(workspace["ckpt"]),
                   "--tsb", "7", "--which", "in",
                   "--out", str(tmp_path / "x")])
        assert rc == 2


class TestGradcheckCommand:
    def test_ops_module_passes(self, capsys):
        assert main(["gradcheck", "--module", "ops"]) == 0
        out = capsys.readouterr().out
        assert "ops.matmul" in out and "FAIL" not in out

    def test_unknown_module_exits_2(self):
        assert main(["gradcheck", "--module", "quantum"]) == 2


class TestPgm:
    def test_header_and_range(self, tmp_path):
        arr = np.linspace(0, 1, 12).reshape(3, 4)
        p = tmp_path / "img.pgm"
        write_pgm(p, arr)
        raw = p.read_bytes()
        assert raw.startswith(b"P5\n4 3\n255\n")
        pix = np.frombuffer(raw[len(b"P5\n4 3\n255\n"):], dtype=np.uint8)
        assert pix.min() == 0 and pix.max() == 255
        # constant image must not divide by zero
        write_pgm(tmp_path / "c.pgm", np.ones((2, 2)))
