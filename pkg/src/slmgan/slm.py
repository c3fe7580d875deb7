"""Speech-language-model features: frozen 13-layer backbone, layer slicing, projection head.

The backbone here is a surrogate for a 12-block self-supervised encoder: a
strided conv front end (total stride 320 at 16 kHz) feeding twelve residual
blocks, every one of which, plus the front end, emits a 768-dim frame map.
Weights come from a fixed seed and are never trained. Anything exposing
``forward(wav_16k) -> (B, 13, T', 768)`` can stand in for it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .audio import Waveform, resample_tensor
from .networks import freeze
from .validation import InvalidInputError, check_waveform_tensor

N_LAYERS = 13
FEATURE_DIM = 768
PROJECTION_DIM = 256
SLM_RATE_HZ = 16000
FRAME_STRIDE = 320
CONSISTENCY_LAYERS = (6, 7, 8, 9)
SLM_SEED = 4242


@dataclass(frozen=True)
class SlmFeatureStack:
    """Per-layer frame features, ``layers`` shaped ``(..., 13, T', 768)``."""

    layers: torch.Tensor
    input_rate_hz: int = SLM_RATE_HZ
    frame_stride_samples: int = FRAME_STRIDE

    def __post_init__(self):
        x = self.layers
        if x.dim() < 3 or x.shape[-3] != N_LAYERS or x.shape[-1] != FEATURE_DIM:
            raise InvalidInputError(
                f"feature stack must be (..., {N_LAYERS}, T', {FEATURE_DIM}), got {tuple(x.shape)}"
            )
        if self.input_rate_hz != SLM_RATE_HZ:
            raise InvalidInputError(f"feature stacks are defined at {SLM_RATE_HZ} Hz")

    @property
    def n_frames(self) -> int:
        return self.layers.shape[-2]


class _Block(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.mix = nn.Conv1d(dim, dim, 3, padding=1, groups=dim)
        self.norm2 = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, h):
        h = h + self.mix(self.norm1(h).transpose(1, 2)).transpose(1, 2)
        return h + self.fc2(F.gelu(self.fc1(self.norm2(h))))


class SurrogateSLM(nn.Module):
    """Frozen random-feature backbone with the 13-layer, 768-dim, 50 Hz interface."""

    sample_rate_hz = SLM_RATE_HZ

    def __init__(self, seed: int = SLM_SEED, hidden: int = 128):
        super().__init__()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            chans, strides = (1, 32, 64, 128, 256), (5, 4, 4, 4)
            layers = []
            for c_in, c_out, k in zip(chans[:-1], chans[1:], strides):
                layers += [nn.Conv1d(c_in, c_out, k, stride=k), nn.GELU()]
            self.frontend = nn.Sequential(*layers)
            self.embed = nn.Sequential(nn.Linear(chans[-1], FEATURE_DIM), nn.LayerNorm(FEATURE_DIM))
            self.blocks = nn.ModuleList(_Block(FEATURE_DIM, hidden) for _ in range(N_LAYERS - 1))
        freeze(self)

    def train(self, mode: bool = True):
        return super().train(False)

    def forward(self, wav: torch.Tensor) -> torch.Tensor:
        """``(B, L)`` 16 kHz samples -> ``(B, 13, L // 320, 768)``."""
        n_frames = wav.shape[-1] // FRAME_STRIDE
        if n_frames < 1:
            raise InvalidInputError(
                f"need at least {FRAME_STRIDE} samples at {SLM_RATE_HZ} Hz, got {wav.shape[-1]}"
            )
        x = wav[..., : n_frames * FRAME_STRIDE].unsqueeze(1)
        h = self.embed(self.frontend(x).transpose(1, 2))
        outs = [h]
        for blk in self.blocks:
            h = blk(h)
            outs.append(h)
        return torch.stack(outs, dim=1)


def slm_layers(backbone: nn.Module, samples: torch.Tensor, rate_hz: int) -> torch.Tensor:
    """Tensor-level extraction: resample to 16 kHz and run the backbone."""
    squeeze = samples.dim() == 1
    x = samples.unsqueeze(0) if squeeze else samples
    x = resample_tensor(x, rate_hz, SLM_RATE_HZ)
    out = backbone(x)
    return out[0] if squeeze else out


def extract_slm(wav: Waveform, backbone: nn.Module | None = None) -> SlmFeatureStack:
    """Feature stack of ``wav`` (any sample rate); differentiable w.r.t. the samples."""
    backbone = backbone if backbone is not None else default_backbone()
    samples = check_waveform_tensor(wav.samples)
    return SlmFeatureStack(slm_layers(backbone, samples, wav.sample_rate_hz))


_DEFAULT = None


def default_backbone() -> SurrogateSLM:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = SurrogateSLM()
    return _DEFAULT


def consistency_features(stack) -> torch.Tensor:
    """Layers 6-9 of a stack, in order: ``(..., 4, T', 768)``."""
    layers = stack.layers if isinstance(stack, SlmFeatureStack) else stack
    return layers[..., CONSISTENCY_LAYERS[0] : CONSISTENCY_LAYERS[-1] + 1, :, :]


class ProjectionHead(nn.Module):
    """Affine map from the 13 concatenated layer vectors (9984 dims) to 256 channels.

    ``weight`` is stored as ``(13 * 768, 256)``; rows ``l*768 : (l+1)*768`` read layer ``l``.
    """

    def __init__(self, n_layers: int = N_LAYERS, feature_dim: int = FEATURE_DIM, out_dim: int = PROJECTION_DIM):
        super().__init__()
        self.n_layers, self.feature_dim, self.out_dim = n_layers, feature_dim, out_dim
        fan_in = n_layers * feature_dim
        bound = 1.0 / np.sqrt(fan_in)
        self.weight = nn.Parameter(torch.empty(fan_in, out_dim).uniform_(-bound, bound))
        self.bias = nn.Parameter(torch.empty(out_dim).uniform_(-bound, bound))

    def forward(self, layers: torch.Tensor) -> torch.Tensor:
        """``(B, 13, T', 768) -> (B, T', 256)``."""
        if layers.shape[-3] != self.n_layers or layers.shape[-1] != self.feature_dim:
            raise InvalidInputError(
                f"projection head expects (..., {self.n_layers}, T', {self.feature_dim}), "
                f"got {tuple(layers.shape)}"
            )
        x = layers.transpose(-3, -2)
        x = x.reshape(*x.shape[:-2], self.n_layers * self.feature_dim)
        return x @ self.weight + self.bias


def project(stack, head: ProjectionHead) -> torch.Tensor:
    layers = stack.layers if isinstance(stack, SlmFeatureStack) else stack
    return head(layers)


def layer_importance(head: ProjectionHead, norm: str = "fro") -> np.ndarray:
    """Share of projection weight magnitude attributable to each input layer.

    ``norm="fro"`` uses the Frobenius norm of each layer's row block,
    ``norm="l1"`` the sum of absolute values. The bias is ignored. An all-zero
    weight gives the uniform vector (with a warning).
    """
    w = head.weight.detach().double().reshape(head.n_layers, head.feature_dim, head.out_dim)
    if norm == "fro":
        mags = w.pow(2).sum(dim=(1, 2)).sqrt()
    elif norm == "l1":
        mags = w.abs().sum(dim=(1, 2))
    else:
        raise InvalidInputError(f"unknown norm {norm!r}; use 'fro' or 'l1'")
    total = mags.sum()
    if total == 0:
        warnings.warn("projection head weight is all zero; reporting uniform importance", RuntimeWarning)
        return np.full(head.n_layers, 1.0 / head.n_layers)
    return (mags / total).numpy()
