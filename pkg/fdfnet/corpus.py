"""
Mixtures, the synthetic desk-scale corpus and dataset manifests.

A manifest is a UTF-8 CSV with the columns ``split, clean, other, other_kind,
snr_db, seed``. ``other`` is either a noise recording (``other_kind = noise``),
mixed on load with :func:`mix_at_snr`, or a ready-made mixture
(``other_kind = mixture``). Paths are relative to the manifest file.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import scipy.fft
from scipy import signal

from .audio import inspect_riff, read_wav, write_wav
from .config import SynthConfig
from .dsp import Waveform
from .errors import AudioIOError, DatasetError, DomainError
from .fileio import atomic_write_text

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
OTHER_KINDS = ("noise", "mixture")
MANIFEST_COLUMNS = ["split", "clean", "other", "other_kind", "snr_db", "seed"]
NOISE_KINDS = ("white", "pink", "babble")
SPEECH_KINDS = ("harmonic", "chirp", "burst")
BURST_FLOOR = 0.3


@dataclass(frozen=True)
class MixtureSpec:
    clean_id: str
    noise_id: str
    snr_db: float
    seed: int

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise DomainError(f"SNR must be finite, got {self.snr_db}")


@dataclass(frozen=True, eq=False)
class Mixture:
    noisy: Waveform
    clean: Waveform
    noise: Waveform
    snr_db: float
    name: str = ""


def mix_at_snr(s: Waveform, n: Waveform, snr_db: float, seed: int = 0, name: str = "") -> Mixture:
    """Scale ``n`` so that the clean-to-noise energy ratio is ``snr_db`` and add it to ``s``.

    Noise shorter than the clean signal is tiled, longer noise is cropped at a
    seeded random offset. If the mixture clips, all three signals are divided by
    the same peak factor.
    """
    if not math.isfinite(snr_db):
        raise DomainError(f"SNR must be finite, got {snr_db}")
    if s.sample_rate != n.sample_rate:
        raise DomainError(f"clean is {s.sample_rate} Hz but noise is {n.sample_rate} Hz")
    clean = s.samples.astype(np.float64)
    clean_energy = float(np.dot(clean, clean))
    if clean_energy == 0.0:
        raise DomainError("clean source is silent")
    noise = n.samples.astype(np.float64)
    if noise.shape[0] == 0:
        raise DomainError("noise source is empty")
    if noise.shape[0] < clean.shape[0]:
        noise = np.tile(noise, -(-clean.shape[0] // noise.shape[0]))[: clean.shape[0]]
    elif noise.shape[0] > clean.shape[0]:
        start = np.random.default_rng(seed).integers(0, noise.shape[0] - clean.shape[0] + 1)
        noise = noise[start : start + clean.shape[0]]
    noise_energy = float(np.dot(noise, noise))
    if noise_energy == 0.0:
        raise DomainError("noise source is silent")

    alpha = math.sqrt(clean_energy / (noise_energy * 10.0 ** (snr_db / 10.0)))
    scaled = alpha * noise
    noisy = clean + scaled
    peak = float(np.max(np.abs(noisy)))
    if peak > 1.0:
        noisy, clean, scaled = noisy / peak, clean / peak, scaled / peak
    rate = s.sample_rate
    return Mixture(Waveform(noisy, rate), Waveform(clean, rate), Waveform(scaled, rate), snr_db, name)


@dataclass(frozen=True)
class ManifestRecord:
    split: str
    clean: Path
    other: Path
    other_kind: str
    snr_db: float
    seed: int


@dataclass
class DatasetManifest:
    records: List[ManifestRecord]
    sample_rate: int = 16000
    root: Path = field(default_factory=Path)

    def __len__(self):
        return len(self.records)

    def split(self, name: str) -> "DatasetManifest":
        return DatasetManifest([r for r in self.records if r.split == name], self.sample_rate, self.root)

    def to_frame(self) -> pd.DataFrame:
        rows = [{
            "split": r.split,
            "clean": _relative(r.clean, self.root),
            "other": _relative(r.other, self.root),
            "other_kind": r.other_kind,
            "snr_db": r.snr_db,
            "seed": r.seed,
        } for r in self.records]
        return pd.DataFrame(rows, columns=MANIFEST_COLUMNS)

    def save(self, path) -> None:
        path = Path(path)
        self.root = path.parent
        atomic_write_text(path, self.to_frame().to_csv(index=False, float_format="%.17g"))

    def load_items(self) -> List[Mixture]:
        """Read every record, in manifest order, as a :class:`Mixture`."""
        items = []
        for record in self.records:
            clean = read_wav(record.clean, self.sample_rate)
            other = read_wav(record.other, self.sample_rate)
            name = record.clean.stem
            if record.other_kind == "noise":
                items.append(mix_at_snr(clean, other, record.snr_db, record.seed, name))
            else:
                if len(other) != len(clean):
                    raise DatasetError(f"{record.other}: mixture length differs from {record.clean}")
                noise = Waveform(other.samples - clean.samples, clean.sample_rate)
                items.append(Mixture(other, clean, noise, record.snr_db, name))
        return items


def _relative(path: Path, root: Path) -> str:
    try:
        return Path(path).relative_to(root).as_posix()
    except ValueError:
        return Path(path).as_posix()


def load_manifest(path, sample_rate: int = 16000) -> DatasetManifest:
    """Parse and validate a manifest: columns, enums, file existence and sample rates."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    try:
        table = pd.read_csv(path, dtype={"split": str, "clean": str, "other": str, "other_kind": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DatasetError(f"{path}: unreadable manifest ({e})")
    missing = [c for c in MANIFEST_COLUMNS if c not in table.columns]
    if missing:
        raise DatasetError(f"{path}: missing columns {missing}")

    root = path.parent
    records = []
    for line, row in enumerate(table.itertuples(index=False), start=2):
        if row.split not in SPLITS:
            raise DatasetError(f"{path}:{line}: unknown split {row.split!r}")
        if row.other_kind not in OTHER_KINDS:
            raise DatasetError(f"{path}:{line}: unknown other_kind {row.other_kind!r}")
        record = ManifestRecord(row.split, root / row.clean, root / row.other, row.other_kind,
                                float(row.snr_db), int(row.seed))
        for wav in (record.clean, record.other):
            try:
                info = inspect_riff(wav)
            except AudioIOError as e:
                raise DatasetError(f"{path}:{line}: {e}")
            if info.sample_rate != sample_rate:
                raise DatasetError(f"{path}:{line}: {wav} is {info.sample_rate} Hz, expected {sample_rate} Hz")
        records.append(record)
    logger.info("loaded manifest %s: %d records", path, len(records))
    return DatasetManifest(records, sample_rate, root)


class SyntheticCorpusGenerator:
    """Deterministic speech-like signals and noises for desk-scale runs.

    "Speech" items are harmonic tones with vibrato and a syllable-rate
    envelope, amplitude-modulated chirps, or band-passed noise bursts. Noises
    are white, pink (1/f power) or babble-like (several overlapping
    harmonic talkers).
    """

    def __init__(self, config: SynthConfig = SynthConfig()):
        self.config = config
        self.n_samples = int(round(config.duration_s * config.sample_rate))

    def item_seed(self, split: str, index: int) -> int:
        seq = np.random.SeedSequence([self.config.seed, SPLITS.index(split), index])
        return int(seq.generate_state(1)[0])

    def _envelope(self, rng, t):
        rate = rng.uniform(3.0, 6.0)
        phase = rng.uniform(0, 2 * np.pi)
        return 0.5 * (1.0 - np.cos(2 * np.pi * rate * t + phase)) ** 1.5

    def _harmonic(self, rng, t):
        f0 = rng.uniform(100.0, 250.0)
        vibrato = 1.0 + 0.03 * np.sin(2 * np.pi * rng.uniform(4.0, 7.0) * t)
        phase = 2 * np.pi * np.cumsum(f0 * vibrato) / self.config.sample_rate
        tone = sum(np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k for k in range(1, 7))
        return tone * self._envelope(rng, t)

    def _chirp(self, rng, t):
        f_start, f_end = rng.uniform(150.0, 400.0), rng.uniform(1200.0, 3000.0)
        sweep = signal.chirp(t, f0=f_start, t1=t[-1], f1=f_end, method="logarithmic")
        return sweep * self._envelope(rng, t)

    def _burst(self, rng, t):
        sr = self.config.sample_rate
        low = rng.uniform(300.0, 1000.0)
        sos = signal.butter(4, [low, min(low * 3.0, 0.45 * sr)], btype="bandpass", fs=sr, output="sos")
        noise = signal.sosfilt(sos, rng.standard_normal(t.shape[0]))
        gate = (np.sin(2 * np.pi * rng.uniform(2.0, 4.0) * t + rng.uniform(0, 2 * np.pi)) > 0).astype(float)
        gate = signal.lfilter([0.01], [1.0, -0.99], gate)
        # gate never closes fully, so short clips still carry energy
        return noise * (BURST_FLOOR + (1.0 - BURST_FLOOR) * gate)

    def _speech_like(self, rng, n):
        t = np.arange(n) / self.config.sample_rate
        kind = SPEECH_KINDS[rng.integers(len(SPEECH_KINDS))]
        x = getattr(self, f"_{kind}")(rng, t)
        peak = np.max(np.abs(x))
        return 0.5 * x / peak if peak > 0 else x, kind

    def _noise(self, rng, n):
        kind = NOISE_KINDS[rng.integers(len(NOISE_KINDS))]
        if kind == "white":
            x = rng.standard_normal(n)
        elif kind == "pink":
            spectrum = scipy.fft.rfft(rng.standard_normal(n))
            freqs = np.arange(spectrum.shape[0])
            freqs[0] = 1
            x = scipy.fft.irfft(spectrum / np.sqrt(freqs), n=n)
        else:
            t = np.arange(n) / self.config.sample_rate
            x = sum(np.roll(self._harmonic(rng, t), rng.integers(n)) for _ in range(6))
        return x / np.max(np.abs(x)) * 0.5, kind

    def generate_item(self, split: str, index: int):
        """Return ``(clean, noise, snr_db, seed)`` for one corpus item."""
        seed = self.item_seed(split, index)
        rng = np.random.default_rng(seed)
        clean, _ = self._speech_like(rng, self.n_samples)
        noise, _ = self._noise(rng, self.n_samples + self.n_samples // 4)
        snr_db = float(rng.uniform(*self.config.snr_range))
        rate = self.config.sample_rate
        return Waveform(clean, rate), Waveform(noise, rate), snr_db, seed

    def generate_data(self, output_dir) -> DatasetManifest:
        """Write clean and noise WAVs plus ``manifest.csv`` under ``output_dir``."""
        root = Path(output_dir)
        records = []
        counts = {"train": self.config.n_train, "val": self.config.n_val, "test": self.config.n_test}
        for split in SPLITS:
            for index in range(counts[split]):
                clean, noise, snr_db, seed = self.generate_item(split, index)
                clean_path = root / "clean" / f"{split}_{index:04d}.wav"
                noise_path = root / "noise" / f"{split}_{index:04d}.wav"
                write_wav(clean_path, clean, "FLOAT")
                write_wav(noise_path, noise, "FLOAT")
                records.append(ManifestRecord(split, clean_path, noise_path, "noise", snr_db, seed))
        manifest = DatasetManifest(records, self.config.sample_rate, root)
        manifest.save(root / "manifest.csv")
        logger.info("generated %d items under %s", len(records), root)
        return manifest


def synth_dataset(config: SynthConfig, output_dir) -> DatasetManifest:
    return SyntheticCorpusGenerator(config).generate_data(output_dir)
