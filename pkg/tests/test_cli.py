import numpy as np
import pytest

from speechmotion import load_matrix
from speechmotion.cli import main


TINY_CONFIG = """
# desk-scale test model
dim = 8
heads = 2
period = 3
encoder_layers = 1
decoder_layers = 1
ff_dim = 16
encoder_dim = 8
encoder_heads = 2
epochs = 2
seed = 5
lr = 0.001
"""


@pytest.fixture
def dataset_dir(tmp_path):
    out = tmp_path / "data"
    code = main([
        "gen-synthetic", "--out", str(out), "--identities", "2",
        "--sequences", "2", "--frames", "4", "--vertices", "2",
        "--feature-dim", "3", "--seed", "1",
    ])
    assert code == 0
    return out


@pytest.fixture
def trained(tmp_path, dataset_dir):
    cfg_path = tmp_path / "train.cfg"
    cfg_path.write_text(TINY_CONFIG)
    ckpt = tmp_path / "model.ckpt"
    code = main([
        "train", "--config", str(cfg_path), "--data", str(dataset_dir),
        "--out", str(ckpt),
    ])
    assert code == 0
    return ckpt


class TestGenSynthetic:
    def test_writes_expected_files(self, dataset_dir):
        for name in ("dataset.cfg", "samples.tsv", "lips.txt",
                     "seq000.audio.f32mat", "seq001.motion.f32mat"):
            assert (dataset_dir / name).exists()


class TestTrain:
    def test_writes_checkpoint_and_loss_csv(self, tmp_path, trained):
        assert trained.exists()
        loss_csv = tmp_path / "model.ckpt.loss.csv"
        lines = loss_csv.read_text().splitlines()
        assert lines[0] == "step,epoch,sample,loss,rmse"
        assert len(lines) == 1 + 2 * 2  # epochs * sequences

    def test_double_train_bitwise_identical(self, tmp_path, dataset_dir):
        cfg_path = tmp_path / "train.cfg"
        cfg_path.write_text(TINY_CONFIG)
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        for out in (a, b):
            assert main([
                "train", "--config", str(cfg_path), "--data", str(dataset_dir),
                "--out", str(out),
            ]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_config_dataset_conflict_is_data_error(self, tmp_path, dataset_dir):
        cfg_path = tmp_path / "train.cfg"
        cfg_path.write_text(TINY_CONFIG + "vertices = 99\n")
        code = main([
            "train", "--config", str(cfg_path), "--data", str(dataset_dir),
            "--out", str(tmp_path / "x.ckpt"),
        ])
        assert code == 2


class TestInfer:
    def test_frames_flag_sets_row_count(self, tmp_path, trained, dataset_dir):
        out = tmp_path / "motion.f32mat"
        code = main([
            "infer", "--ckpt", str(trained),
            "--audio", str(dataset_dir / "seq000.audio.f32mat"),
            "--identity", "1", "--frames", "3", "--out", str(out),
        ])
        assert code == 0
        motion = load_matrix(out)
        assert motion.shape == (3, 6)

    def test_frames_default_from_audio(self, tmp_path, trained, dataset_dir):
        out = tmp_path / "motion.f32mat"
        assert main([
            "infer", "--ckpt", str(trained),
            "--audio", str(dataset_dir / "seq000.audio.f32mat"),
            "--identity", "0", "--out", str(out),
        ]) == 0
        assert load_matrix(out).shape == (4, 6)  # 8 feature rows at 50 Hz

    def test_missing_audio_is_data_error(self, tmp_path, trained):
        assert main([
            "infer", "--ckpt", str(trained), "--audio", str(tmp_path / "nope.f32mat"),
            "--identity", "0", "--out", str(tmp_path / "m.f32mat"),
        ]) == 2

    def test_waveform_input(self, tmp_path, trained):
        import wave

        r = np.random.Generator(np.random.PCG64(2))
        samples = (r.normal(size=16000) * 4000).astype("<i2")
        wav_path = tmp_path / "speech.wav"
        with wave.open(str(wav_path), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(16000)
            fh.writeframes(samples.tobytes())
        out = tmp_path / "motion.f32mat"
        assert main([
            "infer", "--ckpt", str(trained), "--audio", str(wav_path),
            "--identity", "0", "--frames", "5", "--out", str(out),
        ]) == 0
        assert load_matrix(out).shape == (5, 6)


class TestEvalLip:
    def test_identical_files_print_zero(self, tmp_path, dataset_dir, capsys):
        motion = dataset_dir / "seq000.motion.f32mat"
        lips = dataset_dir / "lips.txt"
        assert main(["eval-lip", str(motion), str(motion), str(lips)]) == 0
        assert capsys.readouterr().out.strip() == "0"

    def test_known_displacement(self, tmp_path, dataset_dir, capsys):
        from speechmotion import save_matrix

        truth = load_matrix(dataset_dir / "seq000.motion.f32mat")
        pred = truth.copy()
        pred[:, 2] += 0.5  # vertex 0 (a lip vertex) moved along z
        pred_path = tmp_path / "pred.f32mat"
        save_matrix(pred_path, pred)
        assert main([
            "eval-lip", str(pred_path), str(dataset_dir / "seq000.motion.f32mat"),
            str(dataset_dir / "lips.txt"),
        ]) == 0
        assert float(capsys.readouterr().out) == pytest.approx(0.5, abs=1e-6)


class TestExportAttn:
    def test_writes_per_module_csvs(self, tmp_path, trained, dataset_dir):
        out_dir = tmp_path / "attn"
        code = main([
            "export-attn", "--ckpt", str(trained),
            "--audio", str(dataset_dir / "seq000.audio.f32mat"),
            "--identity", "0", "--out-dir", str(out_dir),
        ])
        assert code == 0
        names = {p.name for p in out_dir.iterdir()}
        assert names == {"encoder_self.csv", "decoder_self.csv", "decoder_cross.csv"}


class TestInspect:
    def test_matrix(self, dataset_dir, capsys):
        assert main(["inspect", str(dataset_dir / "seq000.audio.f32mat")]) == 0
        assert "8x3" in capsys.readouterr().out

    def test_checkpoint(self, trained, capsys):
        assert main(["inspect", str(trained)]) == 0
        out = capsys.readouterr().out
        assert "entries:" in out and "motion_dec.w" in out

    def test_unknown_magic(self, tmp_path, capsys):
        path = tmp_path / "junk"
        path.write_bytes(b"????1234")
        assert main(["inspect", str(path)]) == 2


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["infer", "--bogus"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_corrupt_checkpoint_is_data_error(self, tmp_path, trained, dataset_dir, capsys):
        blob = bytearray(trained.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(bytes(blob))
        code = main([
            "infer", "--ckpt", str(bad),
            "--audio", str(dataset_dir / "seq000.audio.f32mat"),
            "--identity", "0", "--out", str(tmp_path / "m.f32mat"),
        ])
        assert code == 2
        assert "CRC" in capsys.readouterr().err

    def test_bad_ff_log_is_usage_error(self, monkeypatch):
        monkeypatch.setenv("FF_LOG", "loudly")
        assert main(["inspect", "whatever"]) == 1
