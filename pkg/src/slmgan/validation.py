"""Input validation helpers and the package's exception types."""

from __future__ import annotations

import numbers

import numpy as np
import torch


class ConfigurationError(ValueError):
    """Raised when a configuration value or combination is invalid."""


class InvalidInputError(ValueError):
    """Raised when an array or tensor argument violates a shape/value contract."""


class TrainingDivergedError(RuntimeError):
    """Raised when a training step produces a non-finite loss.

    The offending step's loss report is kept on ``report`` for diagnosis.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def as_tensor(x, dtype=None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if dtype is None else x.to(dtype)
    arr = np.asarray(x)
    if dtype is None:
        dtype = torch.float64 if arr.dtype == np.float64 else torch.float32
    return torch.as_tensor(arr, dtype=dtype)


def check_finite(x: torch.Tensor, name: str = "input") -> torch.Tensor:
    if not bool(torch.isfinite(x).all()):
        raise InvalidInputError(f"{name} contains non-finite values")
    return x


def check_waveform_tensor(samples, name: str = "waveform") -> torch.Tensor:
    """Validate a waveform as a ``(L,)`` or ``(B, L)`` tensor with ``L >= 1``."""
    x = as_tensor(samples)
    if x.dim() not in (1, 2):
        raise InvalidInputError(f"{name} must be 1-D or batched 2-D, got shape {tuple(x.shape)}")
    if x.shape[-1] < 1:
        raise InvalidInputError(f"{name} is empty")
    return check_finite(x, name)


def check_mel_tensor(values, n_bands: int | None = None, name: str = "mel") -> torch.Tensor:
    """Validate a mel-spectrogram as ``(N, T)`` or ``(B, N, T)``."""
    x = as_tensor(values)
    if x.dim() not in (2, 3):
        raise InvalidInputError(f"{name} must be (N, T) or (B, N, T), got shape {tuple(x.shape)}")
    if x.shape[-1] < 1 or x.shape[-2] < 1:
        raise InvalidInputError(f"{name} has an empty axis: {tuple(x.shape)}")
    if n_bands is not None and x.shape[-2] != n_bands:
        raise InvalidInputError(f"{name} has {x.shape[-2]} bands, expected {n_bands}")
    return check_finite(x, name)


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value <= 0:
        raise InvalidInputError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_speaker_ids(y, n_speakers: int, name: str = "speaker id") -> torch.Tensor:
    """Return ``y`` as a long tensor, raising ``IndexError`` for ids outside the roster."""
    y = torch.as_tensor(y, dtype=torch.long)
    if y.numel() and (int(y.min()) < 0 or int(y.max()) >= n_speakers):
        raise IndexError(f"{name} out of range for roster of size {n_speakers}: {y.tolist()}")
    return y
