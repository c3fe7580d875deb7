"""Voice conversion trained against speech-language-model critics."""

from .audio import MelSpectrogram, Waveform, compute_mel, read_wav, resample, write_wav
from .config import (
    AudioConfig,
    LossWeights,
    NetworkConfig,
    OptimConfig,
    RunConfig,
    TrainSchedule,
    load_config,
    save_config,
    toy_config,
)
from .data import DatasetManifest, TrainingSet, ingest, make_batch
from .estimator import SLMGANVoiceConverter
from .inference import RtfReport, analyze_weights, bench_rtf, convert_waveform
from .slm import SlmFeatureStack, extract_slm, layer_importance
from .training import build_models, run_training
from .validation import ConfigurationError, InvalidInputError, TrainingDivergedError

__all__ = [
    "AudioConfig",
    "ConfigurationError",
    "DatasetManifest",
    "InvalidInputError",
    "LossWeights",
    "MelSpectrogram",
    "NetworkConfig",
    "OptimConfig",
    "RtfReport",
    "RunConfig",
    "SLMGANVoiceConverter",
    "SlmFeatureStack",
    "TrainSchedule",
    "TrainingDivergedError",
    "TrainingSet",
    "Waveform",
    "analyze_weights",
    "bench_rtf",
    "build_models",
    "compute_mel",
    "convert_waveform",
    "extract_slm",
    "ingest",
    "layer_importance",
    "load_config",
    "make_batch",
    "read_wav",
    "resample",
    "run_training",
    "save_config",
    "toy_config",
    "write_wav",
]
