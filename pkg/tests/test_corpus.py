import numpy as np
import pandas as pd
import pytest

from fdfnet.audio import write_wav
from fdfnet.config import SynthConfig
from fdfnet.corpus import (MANIFEST_COLUMNS, DatasetManifest, SyntheticCorpusGenerator, load_manifest,
                           mix_at_snr, synth_dataset)
from fdfnet.dsp import Waveform
from fdfnet.errors import DatasetError, DomainError


def _energy_db(a, b):
    return 10 * np.log10(np.dot(a, a) / np.dot(b, b))


class TestMixAtSnr:
    @pytest.mark.parametrize("snr_db", [-5.0, 0.0, 7.5, 20.0])
    def test_hits_requested_snr(self, rng, snr_db):
        clean = Waveform(0.1 * rng.standard_normal(500))
        noise = Waveform(rng.standard_normal(800))
        mix = mix_at_snr(clean, noise, snr_db, seed=3)
        assert _energy_db(mix.clean.samples, mix.noise.samples) == pytest.approx(snr_db, abs=1e-9)
        np.testing.assert_allclose(mix.noisy.samples, mix.clean.samples + mix.noise.samples)
        assert mix.snr_db == snr_db

    def test_short_noise_is_tiled(self):
        mix = mix_at_snr(Waveform(np.ones(10) * 0.1), Waveform(np.array([1.0, -1.0, 0.5])), 0.0)
        pattern = mix.noise.samples / mix.noise.samples[0]
        np.testing.assert_allclose(pattern, np.tile([1.0, -1.0, 0.5], 4)[:10])

    def test_long_noise_crop_is_seeded(self, rng):
        clean, noise = Waveform(rng.standard_normal(100) * 0.1), Waveform(rng.standard_normal(1000))
        a = mix_at_snr(clean, noise, 5.0, seed=11)
        b = mix_at_snr(clean, noise, 5.0, seed=11)
        np.testing.assert_array_equal(a.noisy.samples, b.noisy.samples)

    def test_clipping_rescales_everything(self, rng):
        mix = mix_at_snr(Waveform(np.full(200, 0.9)), Waveform(rng.standard_normal(200)), -10.0)
        assert np.max(np.abs(mix.noisy.samples)) == pytest.approx(1.0)
        assert _energy_db(mix.clean.samples, mix.noise.samples) == pytest.approx(-10.0, abs=1e-9)
        np.testing.assert_allclose(mix.noisy.samples, mix.clean.samples + mix.noise.samples)

    @pytest.mark.parametrize("clean, noise, snr_db", [
        (np.ones(4), np.ones(4), float("nan")),
        (np.ones(4), np.ones(4), float("inf")),
        (np.zeros(4), np.ones(4), 0.0),
        (np.ones(4), np.zeros(4), 0.0),
        (np.ones(4), np.zeros(0), 0.0),
    ])
    def test_domain_errors(self, clean, noise, snr_db):
        with pytest.raises(DomainError):
            mix_at_snr(Waveform(clean), Waveform(noise), snr_db)

    def test_rate_mismatch(self):
        with pytest.raises(DomainError, match="Hz"):
            mix_at_snr(Waveform(np.ones(4)), Waveform(np.ones(4), sample_rate=8000), 0.0)


class TestSyntheticCorpus:
    def test_items_are_deterministic(self):
        config = SynthConfig(duration_s=0.1, seed=5)
        a = SyntheticCorpusGenerator(config).generate_item("train", 2)
        b = SyntheticCorpusGenerator(config).generate_item("train", 2)
        np.testing.assert_array_equal(a[0].samples, b[0].samples)
        np.testing.assert_array_equal(a[1].samples, b[1].samples)
        assert a[2:] == b[2:]

    def test_items_differ_across_splits(self):
        gen = SyntheticCorpusGenerator(SynthConfig(duration_s=0.1))
        assert gen.item_seed("train", 0) != gen.item_seed("test", 0)
        assert gen.item_seed("train", 0) != gen.item_seed("train", 1)

    @pytest.mark.parametrize("index", range(6))
    def test_item_ranges(self, index):
        config = SynthConfig(duration_s=0.2, snr_range=(-5.0, 15.0))
        clean, noise, snr_db, _ = SyntheticCorpusGenerator(config).generate_item("val", index)
        assert len(clean) == 3200 and len(noise) == 4000
        assert np.max(np.abs(clean.samples)) == pytest.approx(0.5)
        assert -5.0 <= snr_db <= 15.0

    @pytest.mark.parametrize("split", ["train", "val", "test"])
    def test_short_items_are_never_silent(self, split):
        gen = SyntheticCorpusGenerator(SynthConfig(duration_s=0.05))
        for index in range(40):
            clean, _, _, _ = gen.generate_item(split, index)
            assert np.max(np.abs(clean.samples)) == pytest.approx(0.5)

    def test_burst_gate_keeps_energy(self):
        gen = SyntheticCorpusGenerator(SynthConfig(duration_s=0.05))
        t = np.arange(gen.n_samples) / gen.config.sample_rate
        for seed in range(20):
            x = gen._burst(np.random.default_rng(seed), t)
            assert np.sum(x[-200:] ** 2) > 0

    def test_generate_and_reload(self, tmp_path):
        config = SynthConfig(n_train=3, n_val=2, n_test=1, duration_s=0.05)
        synth_dataset(config, tmp_path / "corpus")
        table = pd.read_csv(tmp_path / "corpus" / "manifest.csv")
        assert list(table.columns) == MANIFEST_COLUMNS
        assert not table["clean"].str.startswith("/").any()

        manifest = load_manifest(tmp_path / "corpus" / "manifest.csv")
        assert len(manifest) == 6
        assert [len(manifest.split(s)) for s in ("train", "val", "test")] == [3, 2, 1]
        items = manifest.split("train").load_items()
        clean, noise, snr_db, seed = SyntheticCorpusGenerator(config).generate_item("train", 0)
        expected = mix_at_snr(clean, noise, snr_db, seed)
        np.testing.assert_allclose(items[0].noisy.samples, expected.noisy.samples, atol=1e-6)
        assert items[0].name == "train_0000"


class TestManifest:
    @pytest.fixture
    def wavs(self, tmp_path):
        write_wav(tmp_path / "c.wav", Waveform(np.full(50, 0.25)))
        write_wav(tmp_path / "m.wav", Waveform(np.full(50, 0.5)))
        write_wav(tmp_path / "short.wav", Waveform(np.full(20, 0.5)))
        write_wav(tmp_path / "slow.wav", Waveform(np.zeros(20), sample_rate=8000))
        return tmp_path

    def _write(self, root, rows, columns=MANIFEST_COLUMNS):
        path = root / "manifest.csv"
        pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
        return path

    def test_mixture_rows(self, wavs):
        path = self._write(wavs, [["test", "c.wav", "m.wav", "mixture", 0.0, 0]])
        (item,) = load_manifest(path).load_items()
        np.testing.assert_allclose(item.noise.samples, 0.25)
        np.testing.assert_allclose(item.noisy.samples, 0.5)

    def test_mixture_length_mismatch(self, wavs):
        path = self._write(wavs, [["test", "c.wav", "short.wav", "mixture", 0.0, 0]])
        with pytest.raises(DatasetError, match="length"):
            load_manifest(path).load_items()

    @pytest.mark.parametrize("row, match", [
        (["dev", "c.wav", "m.wav", "noise", 0.0, 0], "split"),
        (["train", "c.wav", "m.wav", "speech", 0.0, 0], "other_kind"),
        (["train", "c.wav", "gone.wav", "noise", 0.0, 0], "not found"),
        (["train", "c.wav", "slow.wav", "noise", 0.0, 0], "8000"),
    ])
    def test_bad_rows(self, wavs, row, match):
        with pytest.raises(DatasetError, match=match):
            load_manifest(self._write(wavs, [row]))

    def test_missing_columns(self, wavs):
        path = self._write(wavs, [["train", "c.wav"]], columns=["split", "clean"])
        with pytest.raises(DatasetError, match="missing columns"):
            load_manifest(path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            load_manifest(tmp_path / "none.csv")

    def test_save_uses_relative_paths(self, wavs):
        path = self._write(wavs, [["val", "c.wav", "m.wav", "mixture", 1.5, 7]])
        manifest = load_manifest(path)
        manifest.save(wavs / "copy.csv")
        again = load_manifest(wavs / "copy.csv")
        assert again.records == manifest.records
        assert isinstance(again, DatasetManifest)
