"""Conversion with a trained model set, projection-head analysis and real-time-factor timing."""

from __future__ import annotations

import csv
import platform
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .audio import MelAnalyzer, Waveform, read_wav, resample, write_wav
from .slm import N_LAYERS, layer_importance
from .validation import InvalidInputError, check_waveform_tensor

REFERENCE_GPU_RTF = 0.0076


def _prepare(models, wav: Waveform) -> torch.Tensor:
    sr = models.vocoder.sample_rate_hz
    if wav.sample_rate_hz != sr:
        wav = resample(wav, sr)
    return check_waveform_tensor(wav.samples).float()


@torch.no_grad()
def convert_waveform(models, source: Waveform, reference: Waveform) -> Waveform:
    """Mel of ``source`` -> F0 features -> style of ``reference`` -> generator -> vocoder."""
    analyzer = MelAnalyzer(models.vocoder.cfg)
    x_src = analyzer(_prepare(models, source).unsqueeze(0))
    x_ref = analyzer(_prepare(models, reference).unsqueeze(0))
    s = models.style_encoder(x_ref)
    out = models.generator(x_src, s, models.f0_net(x_src).h_f0)
    return Waveform(models.vocoder(out)[0], models.vocoder.sample_rate_hz)


def convert_file(models, src_path, ref_path, out_path) -> Waveform:
    out = convert_waveform(models, read_wav(src_path), read_wav(ref_path))
    write_wav(out_path, out)
    return out


def write_importance_csv(importance, out_csv) -> Path:
    importance = np.asarray(importance, dtype=float)
    if importance.shape != (N_LAYERS,):
        raise InvalidInputError(f"expected {N_LAYERS} importance values, got shape {importance.shape}")
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer_index", "importance"])
        for i, v in enumerate(importance):
            writer.writerow([i, repr(float(v))])
    return out_csv


def read_importance_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["importance"]) for r in rows])


def analyze_weights(models, out_csv=None, norm: str = "fro") -> np.ndarray:
    """Per-layer importance of the SLM critic's projection head, optionally written as CSV."""
    critic = getattr(models, "slm_critic", None)
    if critic is None:
        raise InvalidInputError("model set has no SLM critic")
    importance = layer_importance(critic.head, norm)
    if out_csv is not None:
        write_importance_csv(importance, out_csv)
    return importance


@dataclass(frozen=True)
class RtfReport:
    audio_seconds: float
    processing_seconds: float
    hardware: str

    def __post_init__(self):
        if self.audio_seconds <= 0 or self.processing_seconds <= 0:
            raise InvalidInputError("audio and processing durations must be positive")

    @property
    def rtf(self) -> float:
        return self.processing_seconds / self.audio_seconds

    def to_dict(self) -> dict:
        return {**asdict(self), "rtf": self.rtf, "reference_rtf_gpu": REFERENCE_GPU_RTF}


def hardware_string(device="cpu") -> str:
    dev = str(device)
    if dev.startswith("cuda") and torch.cuda.is_available():
        return torch.cuda.get_device_name(torch.device(dev))
    return f"{platform.processor() or platform.machine()} CPU, {torch.get_num_threads()} thread(s)"


def bench_rtf(models, wav_paths, reference_path=None, device="cpu") -> RtfReport:
    """Time conversion of each file (reference defaults to the first file); return wall-clock / audio time."""
    wav_paths = list(wav_paths)
    if not wav_paths:
        raise InvalidInputError("bench-rtf needs at least one input file")
    waves = [read_wav(p) for p in wav_paths]
    reference = read_wav(reference_path) if reference_path else waves[0]
    audio_seconds = sum(w.duration for w in waves)
    start = time.perf_counter()
    for w in waves:
        convert_waveform(models, w, reference)
    elapsed = time.perf_counter() - start
    return RtfReport(audio_seconds, elapsed, hardware_string(device))
