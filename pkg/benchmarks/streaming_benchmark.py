#!/usr/bin/env python3
"""
Streaming inference benchmark: per-hop compute latency and real-time factor.

    python benchmarks/streaming_benchmark.py [--checkpoint runs/default/fdfnet.ckpt] [--seconds 5]

Without a checkpoint the full-size networks are randomly initialized; the
timings do not depend on the weights.
"""
import argparse
import time

import numpy as np

from fdfnet.cli import load_pipeline
from fdfnet.config import RunConfig, SynthConfig
from fdfnet.corpus import SyntheticCorpusGenerator, mix_at_snr
from fdfnet.models import build_dsr_params, build_fme_params
from fdfnet.pipeline import FdfnetPipeline
from fdfnet.streaming import StreamingEnhancer, algorithmic_latency


class StreamingBenchmark:
    """Push one synthetic mixture hop by hop and record what every hop costs."""

    def __init__(self, pipeline: FdfnetPipeline, seconds: float):
        self.pipeline = pipeline
        self.frame = pipeline.frame
        generator = SyntheticCorpusGenerator(SynthConfig(duration_s=seconds, snr_range=(0.0, 10.0)))
        clean, noise, snr_db, seed = generator.generate_item("test", 0)
        self.noisy = mix_at_snr(clean, noise, snr_db, seed).noisy
        self.results = {}

    def warm_up(self):
        # keep one-time setup out of the timings
        enhancer = StreamingEnhancer(self.pipeline)
        enhancer.push(np.zeros(self.frame.window_len * 2))
        enhancer.flush()

    def run(self):
        print("🎧 FDFNet Streaming Benchmark")
        print("=" * 60)
        self.warm_up()

        hop = self.frame.hop
        samples = self.noisy.samples
        enhancer = StreamingEnhancer(self.pipeline, timing_window=None)
        push_ns = []
        started = time.perf_counter_ns()
        for i in range(0, len(samples), hop):
            t0 = time.perf_counter_ns()
            enhancer.push(samples[i : i + hop])
            push_ns.append(time.perf_counter_ns() - t0)
        enhancer.flush()
        total_ns = time.perf_counter_ns() - started

        audio_s = self.noisy.duration
        self.results = {
            "hops": len(push_ns),
            "push_ns": np.array(push_ns),
            "stage1_ns": np.array(enhancer.hop_timings_ns),
            "rtf": total_ns / 1e9 / audio_s,
            "audio_s": audio_s,
        }
        self.print_summary()

    def print_summary(self):
        r = self.results
        hop_ms = self.frame.hop / self.noisy.sample_rate * 1e3
        p50, p95, p99 = np.percentile(r["push_ns"], [50, 95, 99])
        print(f"\n📊 Per-hop latency ({r['hops']:,} hops of {self.frame.hop} samples = {hop_ms:.1f}ms)")
        print("-" * 40)
        print(f"  P50:  {p50 / 1e6:.2f}ms")
        print(f"  P95:  {p95 / 1e6:.2f}ms")
        print(f"  P99:  {p99 / 1e6:.2f}ms")
        print(f"  Max:  {r['push_ns'].max() / 1e6:.2f}ms")
        print(f"  Stage-1 share (mean per frame): {r['stage1_ns'].mean() / 1e6:.2f}ms")

        latency = algorithmic_latency(self.frame)
        print("\n⏱️  Real-time behaviour")
        print("-" * 40)
        print(f"  Audio: {r['audio_s']:.2f}s")
        print(f"  Real-time factor: {r['rtf']:.3f}")
        print(f"  Algorithmic latency: {latency} samples ({latency / self.noisy.sample_rate * 1e3:.1f}ms)")
        verdict = "✅" if p99 / 1e6 < hop_ms else "❌"
        print(f"  {verdict} P99 hop cost {'within' if verdict == '✅' else 'exceeds'} the {hop_ms:.1f}ms hop budget")


def build_pipeline(checkpoint=None) -> FdfnetPipeline:
    if checkpoint:
        pipeline, _, _ = load_pipeline(checkpoint)
        return pipeline
    config = RunConfig()
    rng = np.random.default_rng(0)
    return FdfnetPipeline(config.frame, build_fme_params(config.fme, rng), config.fme,
                          build_dsr_params(config.dsr, rng), config.dsr)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--checkpoint", default=None)
    parser.add_argument("--seconds", type=float, default=5.0)
    args = parser.parse_args()

    StreamingBenchmark(build_pipeline(args.checkpoint), args.seconds).run()
    print("\n✅ Benchmarking complete!")
