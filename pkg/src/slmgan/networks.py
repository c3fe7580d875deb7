"""Generator stack: AdaIN generator, style encoder, frozen F0 network and vocoder."""

from __future__ import annotations

import hashlib
import math
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .audio import mel_filterbank
from .config import AudioConfig, NetworkConfig
from .validation import InvalidInputError, check_mel_tensor

ADAIN_EPS = 1e-8
F0_SEED = 20231
LRELU_SLOPE = 0.2


def param_hash(module: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state-dict order."""
    h = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def freeze(module: nn.Module) -> nn.Module:
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def pad_frames(x: torch.Tensor, multiple: int) -> torch.Tensor:
    """Right-pad the time axis of ``(B, N, T)`` to a multiple of ``multiple`` (edge replicate)."""
    extra = (-x.shape[-1]) % multiple
    if extra == 0:
        return x
    return torch.cat([x, x[..., -1:].expand(*x.shape[:-1], extra)], dim=-1)


def adain(features: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """Adaptive instance normalisation.

    ``features`` is ``(B, C, *spatial)``; every channel is normalised over its
    spatial axes with population std (plus ``ADAIN_EPS``) then scaled by
    ``gamma`` and shifted by ``beta``, both ``(B, C)``.
    """
    dims = tuple(range(2, features.dim()))
    mean = features.mean(dim=dims, keepdim=True)
    std = features.var(dim=dims, keepdim=True, unbiased=False).sqrt() + ADAIN_EPS
    shape = gamma.shape + (1,) * len(dims)
    return gamma.reshape(shape) * (features - mean) / std + beta.reshape(shape)


class AdaIN(nn.Module):
    def __init__(self, style_dim: int, num_features: int):
        super().__init__()
        self.fc = nn.Linear(style_dim, num_features * 2)
        with torch.no_grad():
            self.fc.bias[:num_features].fill_(1.0)
            self.fc.bias[num_features:].zero_()

    def forward(self, x, s):
        gamma, beta = self.fc(s).chunk(2, dim=1)
        return adain(x, gamma, beta)


class ResBlk(nn.Module):
    def __init__(self, dim_in, dim_out, downsample=False, normalize=True):
        super().__init__()
        self.downsample = downsample
        self.normalize = normalize
        self.conv1 = nn.Conv2d(dim_in, dim_in, 3, 1, 1)
        self.conv2 = nn.Conv2d(dim_in, dim_out, 3, 1, 1)
        if normalize:
            self.norm1 = nn.InstanceNorm2d(dim_in, affine=True)
            self.norm2 = nn.InstanceNorm2d(dim_in, affine=True)
        self.shortcut = nn.Conv2d(dim_in, dim_out, 1, 1, 0, bias=False) if dim_in != dim_out else None

    def _shortcut(self, x):
        if self.shortcut is not None:
            x = self.shortcut(x)
        if self.downsample:
            x = F.avg_pool2d(x, 2)
        return x

    def _residual(self, x):
        if self.normalize:
            x = self.norm1(x)
        x = self.conv1(F.leaky_relu(x, LRELU_SLOPE))
        if self.downsample:
            x = F.avg_pool2d(x, 2)
        if self.normalize:
            x = self.norm2(x)
        return self.conv2(F.leaky_relu(x, LRELU_SLOPE))

    def forward(self, x):
        return (self._shortcut(x) + self._residual(x)) / math.sqrt(2)


class AdainResBlk(nn.Module):
    def __init__(self, dim_in, dim_out, style_dim, upsample=False):
        super().__init__()
        self.upsample = upsample
        self.norm1 = AdaIN(style_dim, dim_in)
        self.conv1 = nn.Conv2d(dim_in, dim_out, 3, 1, 1)
        self.norm2 = AdaIN(style_dim, dim_out)
        self.conv2 = nn.Conv2d(dim_out, dim_out, 3, 1, 1)
        self.shortcut = nn.Conv2d(dim_in, dim_out, 1, 1, 0, bias=False) if dim_in != dim_out else None

    def forward(self, x, s):
        sc = F.interpolate(x, scale_factor=2, mode="nearest") if self.upsample else x
        if self.shortcut is not None:
            sc = self.shortcut(sc)
        r = F.leaky_relu(self.norm1(x, s), LRELU_SLOPE)
        if self.upsample:
            r = F.interpolate(r, scale_factor=2, mode="nearest")
        r = self.conv1(r)
        r = self.conv2(F.leaky_relu(self.norm2(r, s), LRELU_SLOPE))
        return (sc + r) / math.sqrt(2)


class Generator(nn.Module):
    """Mel-to-mel generator conditioned on a style vector and F0 features.

    The encoder halves both mel and time axes ``n_stages`` times; its output
    ``h_x`` is concatenated channel-wise with ``h_f0`` and decoded through
    AdaIN residual blocks back to the input shape.
    """

    def __init__(self, audio: AudioConfig, net: NetworkConfig):
        super().__init__()
        self.n_bands = audio.n_mel_bands
        self.factor = 2**net.n_stages
        self.mel_mean, self.mel_std = net.mel_mean, net.mel_std
        widths = net.widths()
        self.stem = nn.Conv2d(1, widths[0], 3, 1, 1)
        self.encoder = nn.ModuleList(
            ResBlk(widths[i], widths[i + 1], downsample=True) for i in range(net.n_stages)
        )
        top = widths[-1]
        self.fuse = nn.Conv2d(top + net.f0_channels, top, 1)
        self.bottleneck = nn.ModuleList(
            AdainResBlk(top, top, net.style_dim) for _ in range(net.n_adain_blocks)
        )
        self.decoder = nn.ModuleList(
            AdainResBlk(widths[i + 1], widths[i], net.style_dim, upsample=True)
            for i in reversed(range(net.n_stages))
        )
        self.out = nn.Sequential(
            nn.InstanceNorm2d(widths[0], affine=True),
            nn.LeakyReLU(LRELU_SLOPE),
            nn.Conv2d(widths[0], 1, 1),
        )

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """``(B, N, T) -> h_x`` of shape ``(B, C, N / 2**k, ceil(T / 2**k))``."""
        x = (check_mel_tensor(x, self.n_bands) - self.mel_mean) / self.mel_std
        h = self.stem(pad_frames(x, self.factor).unsqueeze(1))
        for blk in self.encoder:
            h = blk(h)
        return h

    def forward(self, x: torch.Tensor, s: torch.Tensor, h_f0: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 2
        if squeeze:
            x, s, h_f0 = x.unsqueeze(0), s.unsqueeze(0), h_f0.unsqueeze(0)
        n_frames = x.shape[-1]
        h_x = self.encode(x)
        if h_f0.shape[0] != h_x.shape[0] or h_f0.shape[2:] != h_x.shape[2:]:
            raise InvalidInputError(
                f"F0 features {tuple(h_f0.shape)} do not align with encoder output {tuple(h_x.shape)}"
            )
        h = self.fuse(torch.cat([h_x, h_f0], dim=1))
        for blk in self.bottleneck:
            h = blk(h, s)
        for blk in self.decoder:
            h = blk(h, s)
        out = self.out(h).squeeze(1)[..., :n_frames] * self.mel_std + self.mel_mean
        return out[0] if squeeze else out


class StyleEncoder(nn.Module):
    """Reference mel -> style vector through one shared head (no per-speaker projection)."""

    def __init__(self, audio: AudioConfig, net: NetworkConfig):
        super().__init__()
        self.n_bands = audio.n_mel_bands
        widths = net.widths()
        self.stem = nn.Conv2d(1, widths[0], 3, 1, 1)
        self.blocks = nn.Sequential(
            *(ResBlk(widths[i], widths[i + 1], downsample=True, normalize=False) for i in range(net.n_stages))
        )
        self.head = nn.Linear(widths[-1], net.style_dim)
        self.factor = 2**net.n_stages
        self.mel_mean, self.mel_std = net.mel_mean, net.mel_std

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = check_mel_tensor(x, self.n_bands, "reference mel")
        squeeze = x.dim() == 2
        if squeeze:
            x = x.unsqueeze(0)
        x = (x - self.mel_mean) / self.mel_std
        h = self.blocks(self.stem(pad_frames(x, self.factor).unsqueeze(1)))
        h = F.leaky_relu(h, LRELU_SLOPE).mean(dim=(2, 3))
        s = self.head(h)
        return s[0] if squeeze else s


class F0Features(NamedTuple):
    h_f0: torch.Tensor
    f0_hz: torch.Tensor


class PitchHead(nn.Module):
    """Differentiable pitch tracker on log-mel frames.

    Each frame (square-root magnitude, unit-normalised) is scored against
    cosine harmonic templates for candidate pitches; a softmax over the
    scores gives a log-pitch expectation, which a two-parameter log-linear
    map calibrates against synthetic harmonic tones. Frames whose peak band
    sits within ``voicing_db`` of the silence floor report 0 Hz.
    """

    def __init__(self, audio: AudioConfig, f_lo=60.0, f_hi=600.0, n_candidates=161,
                 temperature=0.01, max_harmonic_hz=5000.0, voicing_margin=4.0):
        super().__init__()
        self.temperature = temperature
        self.voicing_threshold = math.log(audio.log_floor) + voicing_margin
        fb = np.asarray(mel_filterbank(audio))
        freqs = np.linspace(0, audio.sample_rate_hz / 2, audio.fft_size // 2 + 1)
        cands = np.geomspace(f_lo, f_hi, n_candidates)
        templates = []
        for f in cands:
            kernel = np.zeros_like(freqs)
            band = (freqs >= f / 2) & (freqs <= min(max_harmonic_hz, 20 * f) + f / 2)
            kernel[band] = np.cos(2 * np.pi * freqs[band] / f) / np.sqrt(freqs[band])
            t = fb @ kernel
            templates.append(t / np.linalg.norm(t))
        self.register_buffer("templates", torch.tensor(np.array(templates), dtype=torch.float32))
        self.register_buffer("log_cands", torch.tensor(np.log(cands), dtype=torch.float32))
        self.register_buffer("calibration", torch.tensor([1.0, 0.0]))
        self._calibrate(audio)

    def raw_log_pitch(self, x: torch.Tensor) -> torch.Tensor:
        mag = torch.exp(0.5 * x)
        mag = mag / mag.norm(dim=-2, keepdim=True).clamp_min(1e-12)
        scores = torch.einsum("kn,...nt->...kt", self.templates.to(x.dtype), mag)
        p = torch.softmax(scores / self.temperature, dim=-2)
        return torch.einsum("k,...kt->...t", self.log_cands.to(x.dtype), p)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        slope, offset = self.calibration.to(x.dtype)
        f0 = torch.exp(slope * self.raw_log_pitch(x) + offset)
        voiced = x.amax(dim=-2) > self.voicing_threshold
        return torch.where(voiced, f0, torch.zeros_like(f0))

    @torch.no_grad()
    def _calibrate(self, audio: AudioConfig):
        from .audio import MelAnalyzer

        rng = np.random.default_rng(F0_SEED)
        analyzer = MelAnalyzer(audio)
        sr = audio.sample_rate_hz
        t = np.arange(int(0.25 * sr)) / sr
        targets, estimates = [], []
        for f0 in np.geomspace(120, 450, 24):
            tilt = rng.uniform(0.6, 1.4)
            n_harm = int(min(5000, sr / 2) / f0)
            x = sum(np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k**tilt
                    for k in range(1, n_harm + 1))
            mel = analyzer(torch.tensor(x / np.abs(x).max() * 0.5, dtype=torch.float32))
            estimates.append(float(self.raw_log_pitch(mel).median()))
            targets.append(math.log(f0))
        slope, offset = np.polyfit(estimates, targets, 1)
        self.calibration.copy_(torch.tensor([slope, offset]))


class F0Network(nn.Module):
    """Frozen F0 extractor: conv features ``h_f0`` for conditioning plus a pitch track.

    The conv stack is randomly initialised from a fixed seed and never
    trained, so every run sees the same network.
    """

    def __init__(self, audio: AudioConfig, net: NetworkConfig, seed: int = F0_SEED):
        super().__init__()
        self.n_bands = audio.n_mel_bands
        self.factor = 2**net.n_stages
        self.mel_mean, self.mel_std = net.mel_mean, net.mel_std
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            layers = [nn.Conv2d(1, net.f0_channels, 3, 1, 1)]
            for _ in range(net.n_stages):
                layers += [nn.LeakyReLU(LRELU_SLOPE), nn.Conv2d(net.f0_channels, net.f0_channels, 3, 2, 1)]
            self.convs = nn.Sequential(*layers)
        self.pitch = PitchHead(audio)
        freeze(self)

    def train(self, mode: bool = True):
        return super().train(False)

    def conv_features(self, x: torch.Tensor) -> torch.Tensor:
        x = (x - self.mel_mean) / self.mel_std
        return self.convs(pad_frames(x, self.factor).unsqueeze(1))

    def forward(self, x: torch.Tensor) -> F0Features:
        x = check_mel_tensor(x, self.n_bands)
        squeeze = x.dim() == 2
        if squeeze:
            x = x.unsqueeze(0)
        h, f0 = self.conv_features(x), self.pitch(x)
        return F0Features(h[0], f0[0]) if squeeze else F0Features(h, f0)


class Vocoder(nn.Module):
    """Frozen linear vocoder: filterbank pseudo-inverse, zero-phase inverse STFT.

    ``(B, N, T)`` log-mel maps to ``(B, hop * (T - 1))`` samples. Every step
    is differentiable and nothing is trained.
    """

    def __init__(self, audio: AudioConfig):
        super().__init__()
        self.cfg = audio
        fb = np.asarray(mel_filterbank(audio), dtype=np.float64)
        self.register_buffer("inv_fb", torch.tensor(np.linalg.pinv(fb), dtype=torch.float32))
        win = torch.hann_window(audio.window_length, periodic=True)
        lpad = (audio.fft_size - audio.window_length) // 2
        win = F.pad(win, (lpad, audio.fft_size - audio.window_length - lpad))
        self.register_buffer("window", win)
        freeze(self)

    def train(self, mode: bool = True):
        return super().train(False)

    @property
    def sample_rate_hz(self) -> int:
        return self.cfg.sample_rate_hz

    def output_length(self, n_frames: int) -> int:
        return self.cfg.hop_length * (n_frames - 1)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        mel = check_mel_tensor(mel, self.cfg.n_mel_bands)
        squeeze = mel.dim() == 2
        if squeeze:
            mel = mel.unsqueeze(0)
        n_fft, hop = self.cfg.fft_size, self.cfg.hop_length
        n_frames = mel.shape[-1]
        mag = torch.relu(torch.matmul(self.inv_fb.to(mel.dtype), torch.exp(mel)))
        frames = torch.fft.irfft(mag, n=n_fft, dim=-2)
        frames = torch.roll(frames, n_fft // 2, dims=-2) * self.window.to(mel.dtype)[:, None]
        total = n_fft + hop * (n_frames - 1)
        wav = F.fold(frames, output_size=(1, total), kernel_size=(1, n_fft), stride=(1, hop)).reshape(-1, total)
        wsq = (self.window.to(mel.dtype) ** 2)[None, :, None].expand(1, n_fft, n_frames)
        env = F.fold(wsq, output_size=(1, total), kernel_size=(1, n_fft), stride=(1, hop)).reshape(1, total)
        wav = wav / env.clamp_min(1e-8)
        wav = wav[:, n_fft // 2 : n_fft // 2 + self.output_length(n_frames)]
        return wav[0] if squeeze else wav
