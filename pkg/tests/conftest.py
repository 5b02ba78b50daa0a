import logging

import numpy as np
import pytest

from fdfnet.config import DsrNetConfig, FmeNetConfig, FrameConfig, RunConfig, SynthConfig, TrainSchedule
from fdfnet.dsp import Waveform
from fdfnet.models import build_dsr_params, build_fme_params
from fdfnet.pipeline import FdfnetPipeline

TINY_FRAME = FrameConfig(window_len=32, hop=8, transform_points=32)
TINY_FME = FmeNetConfig(encoder_channels=(4, 8), decoder_channels=(4, 1), gru_hidden=(8,),
                        fc_units=40, input_bins=17)
TINY_DSR = DsrNetConfig(encoder_channels=(4, 8), decoder_channels=(4, 1), tfsm_blocks=1,
                        tfsm_hidden=(6,), input_bins=32)


@pytest.fixture(autouse=True)
def _reset_fdfnet_logger():
    # the command line installs its own handler and stops propagation
    yield
    logger = logging.getLogger("fdfnet")
    logger.handlers.clear()
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_frame():
    return TINY_FRAME


@pytest.fixture
def tiny_config(tmp_path):
    return RunConfig(
        frame=TINY_FRAME,
        fme=TINY_FME,
        dsr=TINY_DSR,
        schedule=TrainSchedule(batch_size=2, max_epochs=2),
        synth=SynthConfig(n_train=3, n_val=1, n_test=2, duration_s=0.05),
        train_manifest=str(tmp_path / "run" / "corpus" / "manifest.csv"),
        output_dir=str(tmp_path / "run"),
    )


@pytest.fixture
def tiny_fme_params():
    return build_fme_params(TINY_FME, np.random.default_rng(0)).astype(np.float64)


@pytest.fixture
def tiny_dsr_params():
    return build_dsr_params(TINY_DSR, np.random.default_rng(1)).astype(np.float64)


@pytest.fixture
def tiny_pipeline(tiny_fme_params, tiny_dsr_params):
    return FdfnetPipeline(TINY_FRAME, tiny_fme_params, TINY_FME, tiny_dsr_params, TINY_DSR)


def tone_in_noise(rng, n=400, snr_scale=0.3, rate=16000):
    t = np.arange(n) / rate
    clean = 0.4 * np.sin(2 * np.pi * 440.0 * t) + 0.2 * np.sin(2 * np.pi * 1320.0 * t + 0.3)
    noise = snr_scale * rng.standard_normal(n)
    return Waveform(clean + noise, rate), Waveform(clean, rate)
