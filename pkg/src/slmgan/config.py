"""Configuration dataclasses and the JSON run-config format.

A run config is a JSON object with one sub-object per section::

    {
      "audio":    {"sample_rate_hz": 22050, "n_mel_bands": 80, ...},
      "network":  {"style_dim": 64, "base_width": 32, ...},
      "weights":  {"cls": 0.1, "advcls": 0.5, ...},
      "schedule": {"total_epochs": 90, "slm_d_start_epoch": 20, ...},
      "optim":    {"beta1": 0.0, "beta2": 0.99, ...},
      "seed": 0,
      "dataset": "path/to/manifest.json",
      "out_dir": "runs/default"
    }

Missing keys take their defaults; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .validation import ConfigurationError

DATA_ROOT_ENV = "SLMGAN_DATA_ROOT"


@dataclass(frozen=True)
class AudioConfig:
    sample_rate_hz: int = 22050
    n_mel_bands: int = 80
    fft_size: int = 1024
    hop_length: int = 256
    window_length: int = 1024
    log_floor: float = 1e-5
    f_min: float = 0.0
    f_max: float = 8000.0

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ConfigurationError("sample_rate_hz must be positive")
        if self.n_mel_bands < 1:
            raise ConfigurationError("n_mel_bands must be >= 1")
        if not (0 < self.hop_length <= self.window_length <= self.fft_size):
            raise ConfigurationError("need 0 < hop_length <= window_length <= fft_size")
        if self.log_floor <= 0:
            raise ConfigurationError("log_floor must be positive")
        if not (0 <= self.f_min < self.f_max <= self.sample_rate_hz / 2):
            raise ConfigurationError("need 0 <= f_min < f_max <= sample_rate_hz / 2")


@dataclass(frozen=True)
class NetworkConfig:
    style_dim: int = 64
    base_width: int = 32
    max_width: int = 128
    n_stages: int = 3
    n_adain_blocks: int = 1
    f0_channels: int = 16
    critic_width: int = 32
    # fixed standardisation applied to log-mels inside the trainable networks
    mel_mean: float = -6.0
    mel_std: float = 3.0

    def __post_init__(self):
        for name in ("style_dim", "base_width", "max_width", "n_stages", "f0_channels", "critic_width"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be a positive integer")
        if self.n_adain_blocks < 0:
            raise ConfigurationError("n_adain_blocks must be >= 0")
        if self.mel_std <= 0:
            raise ConfigurationError("mel_std must be positive")

    def widths(self) -> list[int]:
        """Channel width after each encoder stage (index 0 is the stem)."""
        return [min(self.base_width * 2**i, self.max_width) for i in range(self.n_stages + 1)]


@dataclass(frozen=True)
class LossWeights:
    cls: float = 0.1
    advcls: float = 0.5
    sty: float = 1.0
    f0: float = 5.0
    slm: float = 1.0
    norm: float = 1.0
    cyc: float = 1.0
    bcr: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigurationError(f"loss weight {f.name} must be nonnegative")


@dataclass(frozen=True)
class TrainSchedule:
    total_epochs: int = 90
    slm_d_start_epoch: int = 20
    bcr_start_epoch: int = 20
    cls_start_epoch: int = 35
    batch_size: int = 28
    segment_seconds: float = 2.0
    # None -> number of training utterances // batch_size (at least 1)
    steps_per_epoch: int | None = None
    checkpoint_every: int = 5
    # keep the cross-entropy mel adversarial form after the SLM critic joins
    mel_ce_after_slm_start: bool = False
    bcr_max_shift_frames: int = 4
    bcr_scale_range: tuple[float, float] = (0.9, 1.1)

    def __post_init__(self):
        if self.total_epochs <= 0:
            raise ConfigurationError("total_epochs must be positive")
        if not 0 < self.slm_d_start_epoch <= self.total_epochs:
            raise ConfigurationError("need 0 < slm_d_start_epoch <= total_epochs")
        if not 0 < self.cls_start_epoch <= self.total_epochs:
            raise ConfigurationError("need 0 < cls_start_epoch <= total_epochs")
        if not 0 < self.bcr_start_epoch <= self.total_epochs:
            raise ConfigurationError("need 0 < bcr_start_epoch <= total_epochs")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.segment_seconds <= 0:
            raise ConfigurationError("segment_seconds must be positive")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigurationError("steps_per_epoch must be >= 1")
        if self.checkpoint_every < 1:
            raise ConfigurationError("checkpoint_every must be >= 1")
        object.__setattr__(self, "bcr_scale_range", tuple(self.bcr_scale_range))

    def slm_active(self, epoch: int) -> bool:
        return epoch >= self.slm_d_start_epoch

    def bcr_active(self, epoch: int) -> bool:
        return epoch >= self.bcr_start_epoch

    def cls_active(self, epoch: int) -> bool:
        return epoch >= self.cls_start_epoch


@dataclass(frozen=True)
class OptimConfig:
    beta1: float = 0.0
    beta2: float = 0.99
    weight_decay: float = 1e-4
    learning_rate: float = 1e-4

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("betas must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be nonnegative")


_SECTIONS = {
    "audio": AudioConfig,
    "network": NetworkConfig,
    "weights": LossWeights,
    "schedule": TrainSchedule,
    "optim": OptimConfig,
}


@dataclass(frozen=True)
class RunConfig:
    audio: AudioConfig = field(default_factory=AudioConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    optim: OptimConfig = field(default_factory=OptimConfig)
    seed: int = 0
    dataset: str | None = None
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.network.n_stages and self.audio.n_mel_bands % (2**self.network.n_stages):
            raise ConfigurationError(
                f"n_mel_bands={self.audio.n_mel_bands} must be divisible by 2**n_stages"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schedule"]["bcr_scale_range"] = list(d["schedule"]["bcr_scale_range"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - set(_SECTIONS) - {"seed", "dataset", "out_dir"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, klass in _SECTIONS.items():
            section = d.pop(name, {}) or {}
            known = {f.name for f in dataclasses.fields(klass)}
            bad = set(section) - known
            if bad:
                raise ConfigurationError(f"unknown keys in [{name}]: {sorted(bad)}")
            kwargs[name] = klass(**section)
        return cls(**kwargs, **d)

    def replace(self, **sections) -> "RunConfig":
        """Return a copy with whole sections or nested ``section__field`` values replaced."""
        top = {}
        nested: dict[str, dict] = {}
        for key, value in sections.items():
            if "__" in key:
                sec, fld = key.split("__", 1)
                nested.setdefault(sec, {})[fld] = value
            else:
                top[key] = value
        for sec, values in nested.items():
            top[sec] = dataclasses.replace(top.get(sec, getattr(self, sec)), **values)
        return dataclasses.replace(self, **top)


def load_config(path: str | os.PathLike) -> RunConfig:
    with open(path) as fh:
        return RunConfig.from_dict(json.load(fh))


def save_config(cfg: RunConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def toy_config(**overrides) -> RunConfig:
    """Small configuration that trains in minutes on one CPU core."""
    cfg = RunConfig(
        network=NetworkConfig(base_width=16, max_width=32, f0_channels=8, critic_width=16, style_dim=64),
        schedule=TrainSchedule(
            total_epochs=40,
            batch_size=4,
            segment_seconds=0.5,
            steps_per_epoch=2,
        ),
        optim=OptimConfig(learning_rate=2e-4),
    )
    return cfg.replace(**overrides) if overrides else cfg
