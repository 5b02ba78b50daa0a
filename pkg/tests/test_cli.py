import json
import struct

import numpy as np
import pytest

from fdfnet.audio import read_wav, write_wav
from fdfnet.checkpoint import MAGIC, load_checkpoint
from fdfnet.cli import build_parser, main
from fdfnet.config import RunConfig, save_config
from fdfnet.corpus import load_manifest


@pytest.fixture
def config_path(tiny_config, tmp_path):
    path = tmp_path / "run.json"
    save_config(tiny_config, path)
    return str(path)


@pytest.fixture
def corpus(config_path, tiny_config):
    assert main(["synth", "--config", config_path]) == 0
    return tiny_config.train_manifest


def _noisy_input(manifest, tmp_path, name="noisy.wav"):
    item = load_manifest(manifest).split("test").load_items()[0]
    path = tmp_path / "in" / name
    write_wav(path, item.noisy, "FLOAT")
    return path


class TestInspect:
    def test_default_config_report(self, tmp_path, capsys):
        path = tmp_path / "default.json"
        save_config(RunConfig(), path)
        assert main(["inspect", str(path)]) == 0
        out = capsys.readouterr().out
        assert "fme parameters: 1,843,937" in out
        assert "dsr parameters: 1,974,785" in out
        assert "total parameters: 3,818,722" in out
        assert "FME-Net frequency ladder: 257 -> 129 -> 65 -> 33 -> 17 -> 9" in out
        assert "DSR-Net frequency ladder: 512 -> 256 -> 128 -> 64 -> 32 -> 16" in out
        assert "FME-Net FC units: 2304" in out

    def test_corrupt_checkpoint(self, tmp_path, capsys):
        path = tmp_path / "broken.ckpt"
        path.write_bytes(MAGIC + b"\x01\x00")
        assert main(["inspect", str(path)]) == 2
        assert "truncated" in capsys.readouterr().err

    def test_incomplete_header(self, tmp_path, capsys):
        path = tmp_path / "partial.ckpt"
        body = json.dumps({"stage": "fme"}).encode("utf-8")
        path.write_bytes(struct.pack("<8sII", MAGIC, 1, len(body)) + body)
        assert main(["inspect", str(path)]) == 2
        err = capsys.readouterr().err
        assert "missing 'fingerprint'" in err
        assert "Traceback" not in err

    def test_missing_path(self, tmp_path):
        assert main(["inspect", str(tmp_path / "nothing")]) == 1


class TestErrors:
    def test_stage2_before_stage1(self, config_path, corpus, capsys):
        assert main(["train", "--stage", "2", "--config", config_path]) == 1
        err = capsys.readouterr().err
        assert "fme.ckpt" in err
        assert "--stage 1" in err

    def test_bad_config(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"frame": {"hop": 0}}))
        assert main(["train", "--stage", "1", "--config", str(path)]) == 1
        assert main(["train", "--stage", "1", "--config", str(tmp_path / "missing.json")]) == 1

    def test_argument_errors_exit_1(self):
        with pytest.raises(SystemExit) as info:
            main(["train"])
        assert info.value.code == 1
        with pytest.raises(SystemExit):
            build_parser().parse_args(["eval", "--manifest", "m.csv", "--mode", "perfect"])

    def test_model_eval_needs_checkpoint(self, corpus):
        assert main(["eval", "--manifest", corpus]) == 1

    def test_chunk_must_be_positive(self, tmp_path):
        assert main(["enhance", "--input", "a.wav", "--checkpoint", "x.ckpt", "--chunk", "0"]) == 1


class TestOracleEval:
    def test_clean_mode_caps_scores(self, config_path, corpus, capsys):
        capsys.readouterr()
        assert main(["eval", "--manifest", corpus, "--config", config_path, "--mode", "clean"]) == 0
        out = capsys.readouterr().out
        assert "100.000" in out
        assert "mean" in out

    def test_oracle_mask_writes_csv(self, config_path, corpus, tmp_path):
        target = tmp_path / "scores.csv"
        assert main(["eval", "--manifest", corpus, "--config", config_path, "--mode", "oracle-mask",
                     "--output", str(target)]) == 0
        lines = target.read_text().splitlines()
        assert lines[0].startswith("file,mode,si_sdr")
        assert len(lines) == 1 + 2 + 1


class TestEndToEnd:
    def test_train_enhance_eval(self, config_path, corpus, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", "--stage", "1", "--config", config_path]) == 0
        assert (out / "fme.ckpt").is_file()
        log = [json.loads(line) for line in (out / "fme_log.jsonl").read_text().splitlines()]
        assert [row["epoch"] for row in log] == [1, 2]

        assert main(["train", "--stage", "2", "--config", config_path]) == 0
        assert len((out / "dsr_log.jsonl").read_text().splitlines()) == 2
        full = load_checkpoint(out / "fdfnet.ckpt", tiny_config.fingerprint())
        assert full.stage == "full" and full.nets() == ["dsr", "fme"]
        assert full.metadata["stage1_fingerprint"] == tiny_config.fingerprint()
        assert len(full.metadata["stage1_sha256"]) == 64

        source = _noisy_input(corpus, tmp_path)
        ckpt = str(out / "fdfnet.ckpt")
        capsys.readouterr()
        assert main(["enhance", "--input", str(source), "--checkpoint", ckpt,
                     "--output-dir", str(tmp_path / "offline")]) == 0
        assert capsys.readouterr().out.strip() == str(tmp_path / "offline" / "noisy.wav")
        assert main(["enhance", "--input", str(source), "--checkpoint", ckpt, "--streaming", "--chunk", "37",
                     "--output-dir", str(tmp_path / "streamed")]) == 0
        offline = read_wav(tmp_path / "offline" / "noisy.wav")
        streamed = read_wav(tmp_path / "streamed" / "noisy.wav")
        original = read_wav(source)
        assert len(offline) == len(streamed) == len(original)
        assert offline.encoding == streamed.encoding == original.encoding
        np.testing.assert_allclose(streamed.samples, offline.samples, atol=1e-4)

        capsys.readouterr()
        assert main(["eval", "--manifest", corpus, "--checkpoint", ckpt, "--mode", "stage1"]) == 0
        out_table = capsys.readouterr().out
        assert "stage1" in out_table and "mean" in out_table

        assert main(["inspect", ckpt]) == 0
        assert "stage full" in capsys.readouterr().out

    @pytest.mark.slow
    def test_parallel_enhance(self, config_path, corpus, tmp_path, capsys):
        assert main(["train", "--stage", "1", "--config", config_path]) == 0
        assert main(["train", "--stage", "2", "--config", config_path]) == 0
        sources = [_noisy_input(corpus, tmp_path, name) for name in ("a.wav", "b.wav")]
        capsys.readouterr()
        args = ["enhance", "--input", *map(str, sources), "--checkpoint", str(tmp_path / "run" / "fdfnet.ckpt"),
                "--output-dir", str(tmp_path / "out"), "--workers", "2"]
        assert main(args) == 0
        assert len(capsys.readouterr().out.split()) == 2
        np.testing.assert_array_equal(read_wav(tmp_path / "out" / "a.wav").samples,
                                      read_wav(tmp_path / "out" / "b.wav").samples)
