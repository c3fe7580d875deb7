"""Audio representations: waveforms, log-mel analysis, resampling, frame norms."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy.io import wavfile

from .config import AudioConfig
from .validation import (
    ConfigurationError,
    InvalidInputError,
    check_mel_tensor,
    check_positive_int,
    check_waveform_tensor,
)


@dataclass(frozen=True)
class Waveform:
    """Mono audio. ``samples`` is a 1-D tensor (or ``(B, L)`` for batches)."""

    samples: torch.Tensor
    sample_rate_hz: int

    def __post_init__(self):
        object.__setattr__(self, "samples", check_waveform_tensor(self.samples))
        check_positive_int(self.sample_rate_hz, "sample_rate_hz")

    def __len__(self):
        return self.samples.shape[-1]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate_hz

    def numpy(self) -> np.ndarray:
        return self.samples.detach().cpu().numpy()


@dataclass(frozen=True)
class MelSpectrogram:
    """Natural-log mel magnitudes, shape ``(N, T)`` or ``(B, N, T)``."""

    values: torch.Tensor

    def __post_init__(self):
        object.__setattr__(self, "values", check_mel_tensor(self.values))

    @property
    def n_bands(self) -> int:
        return self.values.shape[-2]

    @property
    def n_frames(self) -> int:
        return self.values.shape[-1]


def _hz_to_mel(f):
    # Slaney scale: linear below 1 kHz, logarithmic above.
    f = np.asarray(f, dtype=np.float64)
    f_sp = 200.0 / 3
    mel = f / f_sp
    min_log_hz, min_log_mel, logstep = 1000.0, 1000.0 / f_sp, math.log(6.4) / 27.0
    return np.where(f >= min_log_hz, min_log_mel + np.log(np.maximum(f, 1e-10) / min_log_hz) / logstep, mel)


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f_sp = 200.0 / 3
    f = f_sp * m
    min_log_hz, min_log_mel, logstep = 1000.0, 1000.0 / f_sp, math.log(6.4) / 27.0
    return np.where(m >= min_log_mel, min_log_hz * np.exp(logstep * (m - min_log_mel)), f)


@functools.lru_cache(maxsize=16)
def _mel_filterbank_cached(sr, n_fft, n_mels, f_min, f_max):
    fft_freqs = np.linspace(0, sr / 2, n_fft // 2 + 1)
    mel_f = _mel_to_hz(np.linspace(_hz_to_mel(f_min), _hz_to_mel(f_max), n_mels + 2))
    fdiff = np.diff(mel_f)
    ramps = mel_f[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0, np.minimum(lower, upper))
    weights *= (2.0 / (mel_f[2:] - mel_f[:-2]))[:, None]
    weights.flags.writeable = False
    return weights


def mel_filterbank(cfg: AudioConfig) -> np.ndarray:
    """Slaney-normalised triangular mel filterbank, shape ``(n_mels, n_fft // 2 + 1)``."""
    return _mel_filterbank_cached(cfg.sample_rate_hz, cfg.fft_size, cfg.n_mel_bands, cfg.f_min, cfg.f_max)


def n_frames_for(n_samples: int, hop_length: int) -> int:
    """Frame count of centred STFT framing."""
    return n_samples // hop_length + 1


class MelAnalyzer(torch.nn.Module):
    """Batched log-mel front end on tensors, ``(B, L) -> (B, N, T)``."""

    def __init__(self, cfg: AudioConfig):
        super().__init__()
        self.cfg = cfg
        self.register_buffer("fb", torch.from_numpy(np.array(mel_filterbank(cfg), dtype=np.float32)))
        self.register_buffer("window", torch.hann_window(cfg.window_length, periodic=True))

    def forward(self, samples: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        squeeze = samples.dim() == 1
        x = samples.unsqueeze(0) if squeeze else samples
        pad = cfg.fft_size // 2
        mode = "reflect" if x.shape[-1] > pad else "constant"
        x = F.pad(x.unsqueeze(1), (pad, pad), mode=mode).squeeze(1)
        spec = torch.stft(
            x,
            n_fft=cfg.fft_size,
            hop_length=cfg.hop_length,
            win_length=cfg.window_length,
            window=self.window.to(x.dtype),
            center=False,
            return_complex=True,
        )
        mel = torch.matmul(self.fb.to(x.dtype), spec.abs())
        out = torch.log(torch.clamp(mel, min=cfg.log_floor))
        return out[0] if squeeze else out


@functools.lru_cache(maxsize=4)
def _analyzer(cfg: AudioConfig) -> MelAnalyzer:
    return MelAnalyzer(cfg)


def compute_mel(wav: Waveform, cfg: AudioConfig | None = None) -> MelSpectrogram:
    """Log-mel spectrogram of ``wav`` with centred framing.

    The waveform must already be at ``cfg.sample_rate_hz``; use :func:`resample`
    first otherwise.
    """
    cfg = cfg or AudioConfig()
    if wav.sample_rate_hz != cfg.sample_rate_hz:
        raise ConfigurationError(
            f"waveform is at {wav.sample_rate_hz} Hz, analysis expects {cfg.sample_rate_hz} Hz"
        )
    samples = wav.samples
    if not samples.is_floating_point():
        samples = samples.float()
    return MelSpectrogram(_analyzer(cfg)(samples))


@functools.lru_cache(maxsize=16)
def _sinc_kernel(orig: int, new: int, width: int, rolloff: float):
    base = min(orig, new) * rolloff
    half = math.ceil(width * orig / base)
    idx = np.arange(-half, half + orig, dtype=np.float64)[None, :] / orig
    t = np.arange(0, -new, -1, dtype=np.float64)[:, None] / new + idx
    t = np.clip(t * base, -width, width)
    window = np.cos(t * math.pi / width / 2) ** 2
    t = t * math.pi
    with np.errstate(invalid="ignore", divide="ignore"):
        sinc = np.where(t == 0, 1.0, np.sin(t) / t)
    kernel = sinc * window * (base / orig)
    return kernel, half


def resample_tensor(x: torch.Tensor, orig_rate: int, target_rate: int,
                    lowpass_width: int = 6, rolloff: float = 0.99) -> torch.Tensor:
    """Band-limited (Hann-windowed sinc) resampling along the last axis.

    Differentiable, and the output has ``round(L * target / orig)`` samples.
    """
    check_positive_int(target_rate, "target_rate_hz")
    check_positive_int(orig_rate, "orig_rate_hz")
    if orig_rate == target_rate:
        return x
    n_in = x.shape[-1]
    n_out = int(round(n_in * target_rate / orig_rate))
    g = math.gcd(orig_rate, target_rate)
    orig, new = orig_rate // g, target_rate // g
    kernel_np, half = _sinc_kernel(orig, new, lowpass_width, rolloff)
    kernel = torch.as_tensor(kernel_np, dtype=x.dtype, device=x.device).unsqueeze(1)
    lead = x.shape[:-1]
    flat = x.reshape(-1, 1, n_in)
    flat = F.pad(flat, (half, half + orig))
    y = F.conv1d(flat, kernel, stride=orig)  # (B, new, frames)
    y = y.transpose(1, 2).reshape(flat.shape[0], -1)
    if y.shape[-1] < n_out:
        y = F.pad(y, (0, n_out - y.shape[-1]))
    return y[:, :n_out].reshape(*lead, n_out)


def resample(wav: Waveform, target_rate_hz: int) -> Waveform:
    """Resample ``wav`` to ``target_rate_hz``; identity when the rates match."""
    if isinstance(target_rate_hz, bool) or not isinstance(target_rate_hz, int) or target_rate_hz <= 0:
        raise InvalidInputError(f"target_rate_hz must be a positive integer, got {target_rate_hz!r}")
    if target_rate_hz == wav.sample_rate_hz:
        return Waveform(wav.samples.clone(), target_rate_hz)
    out = resample_tensor(wav.samples, wav.sample_rate_hz, target_rate_hz)
    if out.shape[-1] < 1:
        raise InvalidInputError("resampled waveform would be empty")
    return Waveform(out, target_rate_hz)


def frame_norms(mel: torch.Tensor) -> torch.Tensor:
    """L1 norm of every frame (column): ``(..., N, T) -> (..., T)``."""
    return mel.abs().sum(dim=-2)


def frame_norm(mel: MelSpectrogram, t: int) -> float:
    """Sum of absolute values of frame ``t`` (1-based, ``1 <= t <= T``)."""
    values = mel.values
    if values.dim() != 2:
        raise InvalidInputError("frame_norm expects a single (N, T) spectrogram")
    if isinstance(t, bool) or not isinstance(t, (int, np.integer)) or not 1 <= t <= values.shape[-1]:
        raise IndexError(f"frame index {t!r} outside 1..{values.shape[-1]}")
    return float(values[:, t - 1].abs().sum())


def read_wav(path) -> Waveform:
    """Read a mono PCM WAV (16-bit integer or 32-bit float) as floats in [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.ndim > 1:
        raise InvalidInputError(f"{path}: only mono audio is supported, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float32) - 128.0) / 128.0
    else:
        data = data.astype(np.float32)
    if data.size == 0:
        raise InvalidInputError(f"{path}: empty waveform")
    return Waveform(torch.from_numpy(np.ascontiguousarray(data)), int(rate))


def write_wav(path, wav: Waveform, subtype: str = "float32") -> None:
    """Write ``wav`` as mono PCM; ``subtype`` is ``"float32"`` or ``"int16"``."""
    data = wav.numpy().astype(np.float32)
    if data.ndim != 1:
        raise InvalidInputError("write_wav expects a single 1-D waveform")
    if subtype == "int16":
        data = (np.clip(data, -1.0, 1.0) * 32767.0).round().astype(np.int16)
    elif subtype != "float32":
        raise InvalidInputError(f"unsupported WAV subtype {subtype!r}")
    wavfile.write(path, wav.sample_rate_hz, data)
