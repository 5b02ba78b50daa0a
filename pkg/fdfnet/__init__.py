"""FDFNet: two-stage STFT magnitude / STDCT spectrum speech enhancement."""
from .config import DsrNetConfig, FmeNetConfig, FrameConfig, RunConfig, SynthConfig, TrainSchedule
from .dsp import Waveform, istdct, istft, stdct, stft
from .errors import FdfnetError
from .pipeline import FdfnetPipeline, compute_dctirm, full_forward, stage1_enhance
from .streaming import StreamingEnhancer, algorithmic_latency, enhance_streaming
from .training import train_stage1, train_stage2

__version__ = "0.1.0"

__all__ = [
    "DsrNetConfig",
    "FdfnetError",
    "FdfnetPipeline",
    "FmeNetConfig",
    "FrameConfig",
    "RunConfig",
    "StreamingEnhancer",
    "SynthConfig",
    "TrainSchedule",
    "Waveform",
    "algorithmic_latency",
    "compute_dctirm",
    "enhance_streaming",
    "full_forward",
    "istdct",
    "istft",
    "stage1_enhance",
    "stdct",
    "stft",
    "train_stage1",
    "train_stage2",
]
