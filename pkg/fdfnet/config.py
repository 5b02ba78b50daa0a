"""
Configuration dataclasses for framing, both sub-networks, training and runs.

Defaults follow the published FDFNet setup except where desk-scale values are
noted (batch size, epoch count).
"""
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from .errors import ConfigurationError
from .fileio import atomic_write_text

WINDOW_KINDS = ("hamming",)
TRAIN_STAGES = ("fme", "dsr")


def conv_output_extent(extent: int, kernel: int, stride: int) -> int:
    """Frequency extent after a stride-`stride` conv with symmetric kernel//2 padding."""
    pad = kernel // 2
    return (extent + 2 * pad - kernel) // stride + 1


@dataclass(frozen=True)
class FrameConfig:
    """Analysis/synthesis framing shared by STFT and STDCT"""
    window_len: int = 512
    hop: int = 128
    transform_points: int = 512
    window_kind: str = "hamming"

    def __post_init__(self):
        if self.window_len <= 0:
            raise ConfigurationError(f"window_len must be positive, got {self.window_len}")
        if not 0 < self.hop <= self.window_len:
            raise ConfigurationError(f"hop must lie in (0, window_len], got {self.hop}")
        if self.transform_points < self.window_len:
            raise ConfigurationError(
                f"transform_points ({self.transform_points}) must be >= window_len ({self.window_len})"
            )
        if self.window_kind not in WINDOW_KINDS:
            raise ConfigurationError(f"unsupported window kind {self.window_kind!r}")

    @property
    def stft_bins(self) -> int:
        return self.transform_points // 2 + 1

    @property
    def edge_pad(self) -> int:
        """Zeros added before and after the signal prior to framing."""
        return self.window_len - self.hop


@dataclass(frozen=True)
class FmeNetConfig:
    """STFT magnitude enhancement CRN (stage 1)"""
    encoder_channels: Tuple[int, ...] = (16, 32, 64, 128, 256)
    decoder_channels: Tuple[int, ...] = (128, 64, 32, 16, 1)
    kernel: Tuple[int, int] = (3, 2)
    stride: Tuple[int, int] = (2, 1)
    gru_hidden: Tuple[int, ...] = (128, 64, 32)
    fc_units: int = 2304
    input_bins: int = 257
    bottleneck: str = "gru"
    tfsm_hidden: Tuple[int, ...] = (128, 64, 32)

    def __post_init__(self):
        _check_ladders(self.encoder_channels, self.decoder_channels)
        if self.bottleneck not in ("gru", "tfsm"):
            raise ConfigurationError(f"FME-Net bottleneck must be 'gru' or 'tfsm', got {self.bottleneck!r}")
        flat = self.encoder_channels[-1] * self.freq_ladder()[-1]
        if self.bottleneck == "gru" and flat != self.fc_units:
            raise ConfigurationError(
                f"fc_units={self.fc_units} does not match the bottleneck width "
                f"{self.encoder_channels[-1]} channels x {self.freq_ladder()[-1]} bins = {flat}"
            )

    def freq_ladder(self):
        return _ladder(self.input_bins, len(self.encoder_channels), self.kernel[0], self.stride[0])


@dataclass(frozen=True)
class DsrNetConfig:
    """STDCT spectrum refinement CRN with TFSM blocks (stage 2)"""
    encoder_channels: Tuple[int, ...] = (16, 32, 64, 128, 256)
    decoder_channels: Tuple[int, ...] = (128, 64, 32, 16, 1)
    kernel: Tuple[int, int] = (5, 2)
    stride: Tuple[int, int] = (2, 1)
    tfsm_blocks: int = 3
    tfsm_hidden: Tuple[int, ...] = (128, 64, 32)
    input_bins: int = 512
    input_channels: int = 2
    bottleneck: str = "tfsm"
    tfsm_input_projection: bool = False
    gru_hidden: Tuple[int, ...] = (128, 64, 32)

    def __post_init__(self):
        _check_ladders(self.encoder_channels, self.decoder_channels)
        if self.bottleneck not in ("tfsm", "gru"):
            raise ConfigurationError(f"DSR-Net bottleneck must be 'tfsm' or 'gru', got {self.bottleneck!r}")
        if len(self.tfsm_hidden) != self.tfsm_blocks:
            raise ConfigurationError(
                f"tfsm_hidden has {len(self.tfsm_hidden)} entries for {self.tfsm_blocks} blocks"
            )
        if self.input_channels != 2:
            raise ConfigurationError("DSR-Net stacks noisy and pre-enhanced spectra: input_channels must be 2")

    def freq_ladder(self):
        return _ladder(self.input_bins, len(self.encoder_channels), self.kernel[0], self.stride[0])


@dataclass(frozen=True)
class TrainSchedule:
    """Optimizer and learning-rate schedule for one training stage"""
    learning_rate: float = 2e-4
    halve_patience: int = 5
    batch_size: int = 4          # 16 for full-scale runs
    max_epochs: int = 30         # 80 for full-scale runs
    stage: str = "fme"
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-8
    mask_clip: float = 2.0
    segment_samples: Optional[int] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.halve_patience < 1:
            raise ConfigurationError(f"halve_patience must be >= 1, got {self.halve_patience}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("batch_size and max_epochs must be >= 1")
        if self.stage not in TRAIN_STAGES:
            raise ConfigurationError(f"stage must be one of {TRAIN_STAGES}, got {self.stage!r}")
        if not 0.0 <= self.rmsprop_rho < 1.0:
            raise ConfigurationError(f"rmsprop_rho must lie in [0, 1), got {self.rmsprop_rho}")
        if self.mask_clip <= 0:
            raise ConfigurationError(f"mask_clip must be positive, got {self.mask_clip}")


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic corpus generator settings"""
    n_train: int = 16
    n_val: int = 4
    n_test: int = 4
    duration_s: float = 1.0
    sample_rate: int = 16000
    snr_range: Tuple[float, float] = (-5.0, 15.0)
    seed: int = 0

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ConfigurationError("item counts must be non-negative")
        if self.duration_s <= 0 or self.sample_rate <= 0:
            raise ConfigurationError("duration_s and sample_rate must be positive")
        if self.snr_range[0] > self.snr_range[1]:
            raise ConfigurationError(f"snr_range must be ordered, got {self.snr_range}")


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs: models, schedule, data and output locations"""
    frame: FrameConfig = field(default_factory=FrameConfig)
    fme: FmeNetConfig = field(default_factory=FmeNetConfig)
    dsr: DsrNetConfig = field(default_factory=DsrNetConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    synth: SynthConfig = field(default_factory=SynthConfig)
    train_manifest: Optional[str] = None
    val_manifest: Optional[str] = None
    test_manifest: Optional[str] = None
    sample_rate: int = 16000
    seed: int = 0
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.frame.stft_bins != self.fme.input_bins:
            raise ConfigurationError(
                f"FME-Net expects {self.fme.input_bins} bins but framing yields {self.frame.stft_bins}"
            )
        if self.frame.transform_points != self.dsr.input_bins:
            raise ConfigurationError(
                f"DSR-Net expects {self.dsr.input_bins} bins but framing yields {self.frame.transform_points}"
            )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(cls, data, "config")

    def fingerprint(self) -> str:
        shape_relevant = {
            "frame": dataclasses.asdict(self.frame),
            "fme": dataclasses.asdict(self.fme),
            "dsr": dataclasses.asdict(self.dsr),
        }
        canonical = json.dumps(shape_relevant, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})")
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path) -> None:
    atomic_write_text(path, json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


_NESTED = {
    "frame": FrameConfig,
    "fme": FmeNetConfig,
    "dsr": DsrNetConfig,
    "schedule": TrainSchedule,
    "synth": SynthConfig,
}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        nested = _NESTED.get(name) if cls is RunConfig else None
        if nested is not None:
            kwargs[name] = _build(nested, value, f"{where}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigurationError(f"{where}: {e}")


def _check_ladders(encoder, decoder):
    if len(encoder) != len(decoder):
        raise ConfigurationError("encoder and decoder must have the same number of blocks")
    if decoder[-1] != 1:
        raise ConfigurationError("the last decoder block must output a single channel")
    if list(decoder[:-1]) != list(encoder[-2::-1]):
        raise ConfigurationError(
            f"decoder channels {decoder} must mirror encoder channels {encoder} for the skip connections"
        )


def _ladder(bins, blocks, kernel, stride):
    ladder = [bins]
    for _ in range(blocks):
        ladder.append(conv_output_extent(ladder[-1], kernel, stride))
    return ladder
