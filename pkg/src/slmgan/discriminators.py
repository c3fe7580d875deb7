"""Adversarial critics: speaker-conditional mel critic, SLM-feature critic, SLM source classifier."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .audio import MelSpectrogram, Waveform
from .config import AudioConfig, NetworkConfig
from .slm import ProjectionHead, SlmFeatureStack, default_backbone, slm_layers
from .validation import check_mel_tensor, check_speaker_ids, check_waveform_tensor

LRELU_SLOPE = 0.1


def conv_stack(in_channels: int, width: int, n_layers: int = 4) -> nn.ModuleList:
    """Strided 2-D convs (stride 2 on both axes), each followed by a leaky ReLU in ``run_convs``."""
    chans = [in_channels] + [width] * n_layers
    return nn.ModuleList(
        nn.Conv2d(c_in, c_out, (3, 5), stride=(2, 2), padding=(1, 2)) for c_in, c_out in zip(chans[:-1], chans[1:])
    )


def run_convs(convs: nn.ModuleList, x: torch.Tensor) -> torch.Tensor:
    for conv in convs:
        x = F.leaky_relu(conv(x), LRELU_SLOPE)
    return x


def select_speaker_score(out_map: torch.Tensor, y) -> torch.Tensor:
    """Mean of channel ``y[b]`` of ``out_map[b]`` (shape ``(B, n_speakers, H, W)``) per sample."""
    y = check_speaker_ids(y, out_map.shape[1])
    if y.dim() == 0:
        y = y.expand(out_map.shape[0])
    picked = out_map[torch.arange(out_map.shape[0]), y]
    return picked.flatten(1).mean(dim=1)


def _batched(layers: torch.Tensor) -> torch.Tensor:
    return layers.unsqueeze(0) if layers.dim() == 3 else layers


class MelDiscriminator(nn.Module):
    """Conv critic over ``(B, N, T)`` log-mels with one output channel per training speaker."""

    def __init__(self, audio: AudioConfig, net: NetworkConfig, n_speakers: int):
        super().__init__()
        self.n_bands = audio.n_mel_bands
        self.n_speakers = n_speakers
        self.mel_mean, self.mel_std = net.mel_mean, net.mel_std
        self.convs = conv_stack(1, net.critic_width)
        self.conv_post = nn.Conv2d(net.critic_width, n_speakers, 3, padding=1)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        mel = check_mel_tensor(mel, self.n_bands)
        if mel.dim() == 2:
            mel = mel.unsqueeze(0)
        x = ((mel - self.mel_mean) / self.mel_std).unsqueeze(1)
        return self.conv_post(run_convs(self.convs, x))

    def score(self, mel: torch.Tensor, y) -> torch.Tensor:
        return select_speaker_score(self(mel), y)


class SlmDiscriminator(nn.Module):
    """Unconditional real/fake critic on projected SLM features.

    The 256 projected channels are laid out as the height axis of a single
    input plane, as in spectrogram critics.
    """

    def __init__(self, net: NetworkConfig):
        super().__init__()
        self.head = ProjectionHead()
        self.convs = conv_stack(1, net.critic_width)
        self.conv_post = nn.Conv2d(net.critic_width, 1, 3, padding=1)

    def forward(self, layers: torch.Tensor) -> torch.Tensor:
        """``(B, 13, T', 768)`` stack -> ``(B, 1, H, W)`` score map."""
        layers = _batched(layers)
        x = self.head(layers).transpose(-1, -2).unsqueeze(1)
        return self.conv_post(run_convs(self.convs, x))

    def score(self, layers: torch.Tensor) -> torch.Tensor:
        return self(layers).flatten(1).mean(dim=1)


class SourceClassifier(nn.Module):
    """Predicts the training speaker a waveform's content came from, from SLM features."""

    def __init__(self, net: NetworkConfig, n_speakers: int):
        super().__init__()
        self.n_speakers = n_speakers
        self.head = ProjectionHead()
        self.convs = conv_stack(1, net.critic_width)
        self.fc = nn.Linear(net.critic_width, n_speakers)

    def forward(self, layers: torch.Tensor) -> torch.Tensor:
        x = self.head(_batched(layers)).transpose(-1, -2).unsqueeze(1)
        h = run_convs(self.convs, x).mean(dim=(2, 3))
        return self.fc(h)


def _stack_layers(wav, backbone):
    if isinstance(wav, SlmFeatureStack):
        return wav.layers if wav.layers.dim() == 4 else wav.layers.unsqueeze(0)
    backbone = backbone if backbone is not None else default_backbone()
    samples = check_waveform_tensor(wav.samples)
    if samples.dim() == 1:
        samples = samples.unsqueeze(0)
    return slm_layers(backbone, samples, wav.sample_rate_hz)


def d_mel(critic: MelDiscriminator, mel, y) -> torch.Tensor:
    """Speaker-``y`` score of ``mel``: spatial mean of output channel ``y``."""
    values = mel.values if isinstance(mel, MelSpectrogram) else mel
    return critic.score(values, y)


def d_slm(critic: SlmDiscriminator, wav: Waveform | SlmFeatureStack, backbone=None) -> torch.Tensor:
    """Real/fake score of a waveform (resampled to 16 kHz and featurised internally)."""
    return critic.score(_stack_layers(wav, backbone))


def classify_source(classifier: SourceClassifier, wav: Waveform | SlmFeatureStack, backbone=None) -> torch.Tensor:
    """Logits over the training roster."""
    return classifier(_stack_layers(wav, backbone))

