"""
``fdfnet`` command line.

    fdfnet synth   --config run.json
    fdfnet train   --stage 1 --config run.json
    fdfnet train   --stage 2 --config run.json
    fdfnet enhance --input a.wav b.wav --checkpoint runs/default/fdfnet.ckpt [--streaming --chunk 128]
    fdfnet eval    --manifest data/manifest.csv --checkpoint runs/default/fdfnet.ckpt [--mode model]
    fdfnet inspect runs/default/fdfnet.ckpt | run.json

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""
import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from .audio import read_wav, write_wav
from .checkpoint import (MAGIC, Checkpoint, add_optimizer, add_store, check_fingerprint, file_sha256,
                         load_checkpoint, restore_store, save_checkpoint)
from .config import RunConfig, load_config
from .corpus import load_manifest, synth_dataset
from .dsp import Waveform
from .errors import FdfnetError, UsageError
from .fileio import atomic_write_text
from .logging_setup import configure_logging
from .metrics import score_row, summarize
from .models import build_dsr_params, build_fme_params, parameter_report
from .pipeline import EVAL_MODES, FdfnetPipeline
from .streaming import enhance_streaming
from .training import train_stage1, train_stage2

logger = logging.getLogger(__name__)

REFERENCE_PARAMS = 4.43e6
ORACLE_MODES = ("clean", "oracle-mask", "double-oracle")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"error: {message}\n")


# -- shared helpers -----------------------------------------------------------

def load_pipeline(checkpoint, config: Optional[RunConfig] = None, allow_mismatch: bool = False):
    """Rebuild the pipeline stored in ``checkpoint``.

    Without ``config`` the configuration embedded in the checkpoint is used.
    """
    ckpt = load_checkpoint(checkpoint)
    embedded = RunConfig.from_dict(ckpt.config) if ckpt.config else None
    config = config or embedded
    if config is None:
        raise UsageError(f"{checkpoint} carries no configuration", hint="pass --config")
    check_fingerprint(ckpt, config.fingerprint(), allow_mismatch, checkpoint)
    fme = dsr = None
    if "fme" in ckpt.nets():
        fme = restore_store(ckpt, "fme", build_fme_params(config.fme, np.random.default_rng(0)))
    if "dsr" in ckpt.nets():
        dsr = restore_store(ckpt, "dsr", build_dsr_params(config.dsr, np.random.default_rng(0)))
    pipeline = FdfnetPipeline(config.frame, fme, config.fme, dsr, config.dsr, config.schedule.mask_clip)
    return pipeline, config, ckpt


def _load_items(manifest_path, split, sample_rate):
    if manifest_path is None:
        return []
    return load_manifest(manifest_path, sample_rate).split(split).load_items()


def _training_data(config: RunConfig):
    if config.train_manifest is None:
        raise UsageError("config has no train_manifest", hint="run `fdfnet synth` and point train_manifest at it")
    train = _load_items(config.train_manifest, "train", config.sample_rate)
    val = _load_items(config.val_manifest or config.train_manifest, "val", config.sample_rate)
    logger.info("training on %d items, validating on %d", len(train), len(val))
    return train, val


def _write_epoch_log(path, history: pd.DataFrame) -> None:
    lines = [json.dumps(row, sort_keys=True) for row in history.to_dict(orient="records")]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def _training_metadata(result, config):
    return {
        "epochs": int(len(result.history)),
        "best_epoch": int(result.best_epoch),
        "best_val_loss": float(result.best_val_loss),
        "seed": config.seed,
    }


# -- train ----------------------------------------------------------------------

def cmd_train(args) -> int:
    config = load_config(args.config)
    out = Path(config.output_dir)
    fingerprint = config.fingerprint()
    if args.stage == 1:
        train, val = _training_data(config)
        schedule = dataclasses.replace(config.schedule, stage="fme")
        result = train_stage1(train, schedule, config.fme, config.frame, config.seed, val)
        ckpt = Checkpoint("fme", fingerprint, config=config.to_dict(), metadata=_training_metadata(result, config))
        add_store(ckpt, "fme", result.params)
        add_optimizer(ckpt, "fme", result.optimizer)
        save_checkpoint(out / "fme.ckpt", ckpt)
        _write_epoch_log(out / "fme_log.jsonl", result.history)
        return 0

    stage1_path = out / "fme.ckpt"
    if not stage1_path.is_file():
        raise UsageError(f"stage 2 needs the stage-1 checkpoint {stage1_path}, which does not exist",
                         hint=f"run `fdfnet train --stage 1 --config {args.config}` first")
    stage1 = load_checkpoint(stage1_path, fingerprint, args.allow_mismatch)
    fme = restore_store(stage1, "fme", build_fme_params(config.fme, np.random.default_rng(0)))
    train, val = _training_data(config)
    schedule = dataclasses.replace(config.schedule, stage="dsr")
    result = train_stage2(train, fme, schedule, config.dsr, config.fme, config.frame, config.seed, val)

    metadata = _training_metadata(result, config)
    metadata.update(stage1_fingerprint=stage1.fingerprint, stage1_sha256=file_sha256(stage1_path))
    dsr_ckpt = Checkpoint("dsr", fingerprint, config=config.to_dict(), metadata=dict(metadata))
    add_store(dsr_ckpt, "dsr", result.params)
    add_optimizer(dsr_ckpt, "dsr", result.optimizer)
    full = Checkpoint("full", fingerprint, config=config.to_dict(), metadata=dict(metadata))
    add_store(full, "fme", fme)
    add_store(full, "dsr", result.params)
    save_checkpoint(out / "dsr.ckpt", dsr_ckpt)
    save_checkpoint(out / "fdfnet.ckpt", full)
    _write_epoch_log(out / "dsr_log.jsonl", result.history)
    return 0


# -- enhance --------------------------------------------------------------------

_WORKER = {}


def _init_worker(checkpoint, config_path, allow_mismatch):
    config = load_config(config_path) if config_path else None
    pipeline, config, _ = load_pipeline(checkpoint, config, allow_mismatch)
    _WORKER.update(pipeline=pipeline, sample_rate=config.sample_rate)


def enhance_file(source, target, streaming=False, chunk=128) -> str:
    """Enhance one WAV file with the pipeline loaded by :func:`_init_worker`."""
    pipeline = _WORKER["pipeline"]
    x = read_wav(source, _WORKER["sample_rate"])
    if streaming:
        chunks = (x.samples[i : i + chunk] for i in range(0, len(x), chunk))
        y = np.concatenate(list(enhance_streaming(chunks, pipeline)))
    else:
        y = pipeline.full_forward(x).samples
    write_wav(target, Waveform(y, x.sample_rate), x.encoding)
    logger.info("enhanced %s -> %s (%.2f s)", source, target, x.duration)
    return str(target)


def cmd_enhance(args) -> int:
    if args.chunk < 1:
        raise UsageError(f"--chunk must be >= 1, got {args.chunk}")
    out_dir = Path(args.output_dir)
    jobs = []
    for source in map(Path, args.input):
        target = out_dir / source.name
        if target.resolve() == source.resolve():
            raise UsageError(f"output {target} would overwrite its input", hint="pick another --output-dir")
        jobs.append((source, target, args.streaming, args.chunk))

    init_args = (args.checkpoint, args.config, args.allow_mismatch)
    if args.workers <= 1 or len(jobs) == 1:
        _init_worker(*init_args)
        written = [enhance_file(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(args.workers, initializer=_init_worker, initargs=init_args) as pool:
            written = list(pool.map(enhance_file, *zip(*jobs)))
    for path in written:
        print(path)
    return 0


# -- eval -----------------------------------------------------------------------

def cmd_eval(args) -> int:
    config = load_config(args.config) if args.config else None
    if args.checkpoint:
        pipeline, config, _ = load_pipeline(args.checkpoint, config, args.allow_mismatch)
    elif args.mode in ORACLE_MODES:
        config = config or RunConfig()
        pipeline = FdfnetPipeline(config.frame, None, config.fme, None, config.dsr, config.schedule.mask_clip)
    else:
        raise UsageError(f"mode {args.mode!r} needs --checkpoint")
    if args.mode == "stage1" and pipeline.fme_params is None:
        raise UsageError(f"{args.checkpoint} holds no FME-Net parameters")

    items = load_manifest(args.manifest, config.sample_rate).split(args.split).load_items()
    if not items:
        raise UsageError(f"manifest has no {args.split!r} items", hint="pick another --split")
    rows = []
    for item in items:
        estimate = pipeline.enhance(item.noisy, args.mode, item.clean)
        rows.append(score_row(item.name, estimate, item.noisy, item.clean))
    table = summarize(rows)
    table.insert(1, "mode", args.mode)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    if args.output:
        atomic_write_text(args.output, table.to_csv(index=False))
    return 0


# -- inspect --------------------------------------------------------------------

def _is_checkpoint(path: Path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(MAGIC)) == MAGIC


def inspect_report(path) -> str:
    """Per-layer table, totals and frequency ladders for a checkpoint or a config file."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"nothing to inspect at {path}")
    if _is_checkpoint(path):
        pipeline, config, ckpt = load_pipeline(path, allow_mismatch=True)
        fme, dsr = pipeline.fme_params, pipeline.dsr_params
        title = f"checkpoint {path} (stage {ckpt.stage}, fingerprint {ckpt.fingerprint})"
    else:
        config = load_config(path)
        fme = build_fme_params(config.fme, np.random.default_rng(0))
        dsr = build_dsr_params(config.dsr, np.random.default_rng(0))
        title = f"config {path} (fingerprint {config.fingerprint()})"

    stores = {"fme": fme, "dsr": dsr}
    present = {net: store for net, store in stores.items() if store is not None}
    if len(present) == 2:
        table = parameter_report(fme, dsr)
    else:
        (net, store), = present.items()
        table = store.layer_table()
        table.insert(0, "net", net)

    lines = [title, "", table.to_string(index=False), ""]
    for net, store in present.items():
        lines.append(f"{net} parameters: {store.count():,}")
    total = sum(store.count() for store in present.values())
    lines.append(f"total parameters: {total:,} ({total / REFERENCE_PARAMS:.1%} of {REFERENCE_PARAMS / 1e6:.2f}M)")
    lines.append("FME-Net frequency ladder: " + " -> ".join(map(str, config.fme.freq_ladder())))
    lines.append("DSR-Net frequency ladder: " + " -> ".join(map(str, config.dsr.freq_ladder())))
    if config.fme.bottleneck == "gru":
        lines.append(f"FME-Net FC units: {config.fme.encoder_channels[-1] * config.fme.freq_ladder()[-1]}")
    return "\n".join(lines)


def cmd_inspect(args) -> int:
    print(inspect_report(args.path))
    return 0


# -- synth ----------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = load_config(args.config)
    out = Path(args.output_dir or Path(config.output_dir) / "corpus")
    manifest = synth_dataset(config.synth, out)
    print(out / "manifest.csv")
    logger.info("%d train / %d val / %d test items", len(manifest.split("train")),
                len(manifest.split("val")), len(manifest.split("test")))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fdfnet", description="Two-stage STFT/STDCT speech enhancement")
    parser.add_argument("--log-level", default=None, help="overrides $FDFNET_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one stage")
    train.add_argument("--stage", type=int, choices=(1, 2), required=True)
    train.add_argument("--config", required=True)
    train.add_argument("--allow-mismatch", action="store_true", help="accept a stage-1 fingerprint mismatch")
    train.set_defaults(handler=cmd_train)

    enhance = sub.add_parser("enhance", help="enhance WAV files")
    enhance.add_argument("--input", nargs="+", required=True)
    enhance.add_argument("--checkpoint", required=True)
    enhance.add_argument("--config", default=None)
    enhance.add_argument("--output-dir", default="enhanced")
    enhance.add_argument("--streaming", action="store_true")
    enhance.add_argument("--chunk", type=int, default=128)
    enhance.add_argument("--workers", type=int, default=1)
    enhance.add_argument("--allow-mismatch", action="store_true")
    enhance.set_defaults(handler=cmd_enhance)

    evaluate = sub.add_parser("eval", help="score a manifest split")
    evaluate.add_argument("--manifest", required=True)
    evaluate.add_argument("--checkpoint", default=None)
    evaluate.add_argument("--config", default=None)
    evaluate.add_argument("--mode", choices=EVAL_MODES, default="model")
    evaluate.add_argument("--split", default="test")
    evaluate.add_argument("--output", default=None, help="also write the table as CSV")
    evaluate.add_argument("--allow-mismatch", action="store_true")
    evaluate.set_defaults(handler=cmd_eval)

    inspect = sub.add_parser("inspect", help="parameter report of a checkpoint or config")
    inspect.add_argument("path")
    inspect.set_defaults(handler=cmd_inspect)

    synth = sub.add_parser("synth", help="write the synthetic corpus")
    synth.add_argument("--config", required=True)
    synth.add_argument("--output-dir", default=None)
    synth.set_defaults(handler=cmd_synth)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except FdfnetError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
