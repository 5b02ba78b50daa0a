"""
Two-stage training.

Stage 1 fits FME-Net on the magnitude MSE. Stage 2 freezes FME-Net and fits
DSR-Net on the hybrid loss, recomputing the DCTIRM target from the frozen
stage-1 output for every batch. Both stages use RMSprop, halve the learning
rate when the validation loss plateaus and keep the best-validation weights.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from .autograd import GradientTape, backward, no_grad
from .config import DsrNetConfig, FmeNetConfig, FrameConfig, TrainSchedule
from .corpus import Mixture
from .errors import NumericError, UsageError
from .models import build_dsr_params, build_fme_params
from .optim import PlateauHalver, RmspropState, rmsprop_step
from .params import ParamStore
from .pipeline import dsr_batch_loss, fme_batch_loss

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    stage: str
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float
    halved: bool


@dataclass
class StageResult:
    stage: str
    params: ParamStore
    optimizer: RmspropState
    history: pd.DataFrame
    best_val_loss: float
    best_epoch: int

    @property
    def train_losses(self) -> List[float]:
        return self.history["train_loss"].tolist()


def crop_batch(items: Sequence[Mixture], rng: np.random.Generator, segment: Optional[int] = None):
    """Stack noisy/clean pairs cropped to a common length: the shortest clip or ``segment``."""
    length = min(len(item.clean) for item in items)
    if segment:
        length = min(length, segment)
    noisy, clean = [], []
    for item in items:
        start = int(rng.integers(0, len(item.clean) - length + 1)) if len(item.clean) > length else 0
        noisy.append(item.noisy.samples[start : start + length])
        clean.append(item.clean.samples[start : start + length])
    return np.stack(noisy), np.stack(clean)


class StageTrainer:
    """Epoch loop shared by both stages.

    ``loss_fn(noisy, clean, training)`` returns the scalar loss tensor of one batch.
    """

    def __init__(self, stage: str, params: ParamStore, schedule: TrainSchedule,
                 loss_fn: Callable, seed: int = 0,
                 epoch_callback: Optional[Callable[[EpochRecord], None]] = None):
        self.stage = stage
        self.params = params
        self.schedule = schedule
        self.loss_fn = loss_fn
        self.rng = np.random.default_rng([seed, 1])
        self.optimizer = RmspropState(schedule.learning_rate, schedule.rmsprop_rho, schedule.rmsprop_eps)
        self.halver = PlateauHalver(schedule.halve_patience)
        self.epoch_callback = epoch_callback

    def _batches(self, items, shuffle):
        order = self.rng.permutation(len(items)) if shuffle else np.arange(len(items))
        size = self.schedule.batch_size
        for start in range(0, len(order), size):
            yield [items[i] for i in order[start : start + size]]

    def train_epoch(self, items) -> float:
        losses = []
        for batch in self._batches(items, shuffle=True):
            noisy, clean = crop_batch(batch, self.rng, self.schedule.segment_samples)
            with GradientTape() as tape:
                loss = self.loss_fn(noisy, clean, True)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(f"{self.stage} loss became {value}")
            grads = backward(loss, tape)
            for tensor in self.params.tensors():
                g = grads.get(tensor)
                if g is not None and not np.all(np.isfinite(g)):
                    raise NumericError(f"non-finite gradient for {tensor.name}")
            rmsprop_step(self.params, grads, self.optimizer)
            losses.append(value)
        return float(np.mean(losses))

    def evaluate(self, items) -> float:
        rng = np.random.default_rng(0)
        losses = []
        with no_grad():
            for batch in self._batches(items, shuffle=False):
                noisy, clean = crop_batch(batch, rng, self.schedule.segment_samples)
                losses.append(float(self.loss_fn(noisy, clean, False).data))
        return float(np.mean(losses))

    def run(self, train_items: Sequence[Mixture], val_items: Sequence[Mixture] = ()) -> StageResult:
        if not train_items:
            raise UsageError(f"cannot train {self.stage}: the training set is empty",
                             hint="check the manifest's train split")
        best = math.inf
        best_epoch = 0
        best_params = self.params.copy()
        records = []
        for epoch in range(1, self.schedule.max_epochs + 1):
            train_loss = self.train_epoch(train_items)
            val_loss = self.evaluate(val_items) if val_items else train_loss
            if val_loss < best:
                best, best_epoch = val_loss, epoch
                best_params = self.params.copy()
            halved = self.halver.step(val_loss, self.optimizer)
            record = EpochRecord(self.stage, epoch, train_loss, val_loss, self.optimizer.learning_rate, halved)
            records.append(record)
            logger.info("stage=%s epoch=%d train_loss=%.6f val_loss=%.6f lr=%.3g",
                        self.stage, epoch, train_loss, val_loss, self.optimizer.learning_rate)
            if self.epoch_callback is not None:
                self.epoch_callback(record)
        history = pd.DataFrame([asdict(r) for r in records])
        return StageResult(self.stage, best_params, self.optimizer, history, best, best_epoch)


def train_stage1(train_items: Sequence[Mixture], schedule: TrainSchedule,
                 fme_config: FmeNetConfig = FmeNetConfig(), frame: FrameConfig = FrameConfig(),
                 seed: int = 0, val_items: Sequence[Mixture] = (),
                 epoch_callback=None) -> StageResult:
    """Fit FME-Net from scratch; returns the best-validation weights."""
    if schedule.stage != "fme":
        raise UsageError(f"stage 1 needs a schedule with stage='fme', got {schedule.stage!r}")
    params = build_fme_params(fme_config, np.random.default_rng(seed))

    def loss_fn(noisy, clean, training):
        return fme_batch_loss(noisy, clean, params, fme_config, frame, training)

    return StageTrainer("fme", params, schedule, loss_fn, seed, epoch_callback).run(train_items, val_items)


def train_stage2(train_items: Sequence[Mixture], fme_params: Optional[ParamStore], schedule: TrainSchedule,
                 dsr_config: DsrNetConfig = DsrNetConfig(), fme_config: FmeNetConfig = FmeNetConfig(),
                 frame: FrameConfig = FrameConfig(), seed: int = 0, val_items: Sequence[Mixture] = (),
                 epoch_callback=None) -> StageResult:
    """Fit DSR-Net behind a frozen FME-Net."""
    if fme_params is None:
        raise UsageError("stage 2 needs a trained FME-Net", hint="run `fdfnet train --stage 1` first")
    if schedule.stage != "dsr":
        raise UsageError(f"stage 2 needs a schedule with stage='dsr', got {schedule.stage!r}")
    fme_params.freeze()
    params = build_dsr_params(dsr_config, np.random.default_rng([seed, 2]))

    def loss_fn(noisy, clean, training):
        return dsr_batch_loss(noisy, clean, fme_params, fme_config, params, dsr_config, frame,
                              schedule.mask_clip, training)

    return StageTrainer("dsr", params, schedule, loss_fn, seed, epoch_callback).run(train_items, val_items)
