#!/usr/bin/env python3
"""
Desk-scale acceptance run on the synthetic corpus.

    python benchmarks/desk_acceptance.py [--skip-training] [--stage1-epochs 20] [--stage2-epochs 30]

Checks the oracle bounds of the two-stage signal flow, then trains a narrow
seeded model in both stages and reports pass/fail for every criterion.
"""
import argparse
import time

import numpy as np

from fdfnet.config import DsrNetConfig, FmeNetConfig, FrameConfig, SynthConfig, TrainSchedule
from fdfnet.corpus import SyntheticCorpusGenerator, mix_at_snr
from fdfnet.logging_setup import configure_logging
from fdfnet.metrics import si_sdr
from fdfnet.pipeline import FdfnetPipeline
from fdfnet.training import train_stage1, train_stage2

DESK_FME = FmeNetConfig(encoder_channels=(8, 16, 32, 64, 128), decoder_channels=(64, 32, 16, 8, 1),
                        gru_hidden=(64, 32, 16), fc_units=128 * 9)
DESK_DSR = DsrNetConfig(encoder_channels=(8, 16, 32, 64, 128), decoder_channels=(64, 32, 16, 8, 1),
                        tfsm_hidden=(64, 32, 16))


def mixtures(split, count, duration_s=1.0, seed=0):
    generator = SyntheticCorpusGenerator(SynthConfig(duration_s=duration_s, snr_range=(0.0, 10.0), seed=seed))
    items = []
    for index in range(count):
        clean, noise, snr_db, item_seed = generator.generate_item(split, index)
        items.append(mix_at_snr(clean, noise, snr_db, item_seed, name=f"{split}_{index:04d}"))
    return items


class DeskAcceptance:
    def __init__(self, frame: FrameConfig = FrameConfig()):
        self.frame = frame
        self.checks = []

    def check(self, label, passed, detail):
        self.checks.append((label, passed))
        print(f"  {'✅' if passed else '❌'} {label}: {detail}")

    def oracle_bounds(self, count=20):
        print("\n🔮 Oracle bounds")
        print("-" * 40)
        started = time.perf_counter()
        pipeline = FdfnetPipeline(self.frame, None)
        double, gains = [], []
        for item in mixtures("test", count):
            double.append(si_sdr(pipeline.enhance(item.noisy, "double-oracle", item.clean), item.clean))
            estimate = pipeline.enhance(item.noisy, "oracle-mask", item.clean)
            gains.append(si_sdr(estimate, item.clean) - si_sdr(item.noisy, item.clean))
        self.check("double oracle mean SI-SDR >= 30 dB", np.mean(double) >= 30.0,
                   f"mean {np.mean(double):.1f} dB, worst {min(double):.1f} dB over {count} mixtures")
        self.check("oracle DCTIRM improvement >= 10 dB", np.mean(gains) >= 10.0,
                   f"mean {np.mean(gains):.1f} dB")
        print(f"  Runtime: {time.perf_counter() - started:.1f}s")

    def training(self, stage1_epochs, stage2_epochs, seed=0):
        print("\n🏋️  Two-stage training")
        print("-" * 40)
        started = time.perf_counter()
        train = mixtures("train", 16, seed=seed)
        held_out = mixtures("val", 4, seed=seed)

        schedule = TrainSchedule(batch_size=4, max_epochs=stage1_epochs)
        stage1 = train_stage1(train, schedule, DESK_FME, self.frame, seed)
        losses = stage1.train_losses
        self.check("stage-1 loss halves", min(losses) <= 0.5 * losses[0],
                   f"{losses[0]:.4g} -> {min(losses):.4g} in {stage1_epochs} epochs")

        fme = stage1.params
        frozen = {name: tensor.data.tobytes() for name, tensor in fme.items()}
        schedule = TrainSchedule(batch_size=4, max_epochs=stage2_epochs, stage="dsr")
        stage2 = train_stage2(train, fme, schedule, DESK_DSR, DESK_FME, self.frame, seed)
        losses = stage2.train_losses
        self.check("stage-2 loss halves", min(losses) <= 0.5 * losses[0],
                   f"{losses[0]:.4g} -> {min(losses):.4g} in {stage2_epochs} epochs")
        unchanged = all(tensor.data.tobytes() == frozen[name] for name, tensor in fme.items())
        self.check("FME-Net untouched by stage 2", unchanged, f"{fme.count():,} parameters compared")

        pipeline = FdfnetPipeline(self.frame, fme, DESK_FME, stage2.params, DESK_DSR)
        gains = [si_sdr(pipeline.full_forward(item.noisy), item.clean) - si_sdr(item.noisy, item.clean)
                 for item in held_out]
        self.check("held-out SI-SDR improvement >= 3 dB", np.mean(gains) >= 3.0, f"mean {np.mean(gains):.2f} dB")
        print(f"  Runtime: {(time.perf_counter() - started) / 60:.1f}min")

    def print_summary(self):
        passed = sum(ok for _, ok in self.checks)
        print("\n🎯 Acceptance Summary")
        print("=" * 60)
        print(f"  {passed}/{len(self.checks)} checks passed")
        return passed == len(self.checks)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--skip-training", action="store_true")
    parser.add_argument("--stage1-epochs", type=int, default=20)
    parser.add_argument("--stage2-epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    configure_logging()

    print("🧪 FDFNet Desk-Scale Acceptance")
    print("=" * 60)
    run = DeskAcceptance()
    run.oracle_bounds()
    if not args.skip_training:
        run.training(args.stage1_epochs, args.stage2_epochs, args.seed)
    raise SystemExit(0 if run.print_summary() else 1)
