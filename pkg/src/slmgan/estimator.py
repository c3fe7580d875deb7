"""scikit-learn style wrapper: ``fit`` trains on in-memory waveforms, ``transform`` converts voices."""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .audio import Waveform, resample
from .checkpoint import load_models, read_meta, resolve_checkpoint
from .config import RunConfig, load_config, toy_config
from .data import TrainingSet
from .inference import analyze_weights, convert_waveform
from .training import read_loss_log, run_training
from .validation import ConfigurationError, InvalidInputError, check_waveform_tensor


def _as_waveform(x, sample_rate_hz: int) -> Waveform:
    if isinstance(x, Waveform):
        return x
    samples = check_waveform_tensor(torch.as_tensor(np.asarray(x, dtype=np.float32)))
    if samples.dim() != 1:
        raise InvalidInputError(f"expected a 1-D waveform, got shape {tuple(samples.shape)}")
    return Waveform(samples, sample_rate_hz)


def _is_single_waveform(x) -> bool:
    return isinstance(x, Waveform) or (isinstance(x, (np.ndarray, torch.Tensor)) and x.ndim == 1)


class SLMGANVoiceConverter(TransformerMixin, BaseEstimator):
    """Any-to-any voice converter.

    Parameters
    ----------
    config : RunConfig, dict, path or None
        Full run configuration; ``None`` uses the small CPU-friendly preset.
    epochs : int or None
        Overrides ``config.schedule.total_epochs`` when given.
    seed : int or None
        Overrides ``config.seed`` when given.
    out_dir : path or None
        Where logs and checkpoints go; a temporary directory when ``None``.
    device : str
        Torch device string.

    ``X`` is a sequence of 1-D waveforms (arrays sampled at
    ``config.audio.sample_rate_hz``, or :class:`Waveform` objects at any rate)
    and ``y`` the matching speaker labels.
    """

    def __init__(self, config=None, epochs=None, seed=None, out_dir=None, device="cpu"):
        self.config = config
        self.epochs = epochs
        self.seed = seed
        self.out_dir = out_dir
        self.device = device

    def _resolved_config(self) -> RunConfig:
        if self.config is None:
            cfg = toy_config()
        elif isinstance(self.config, RunConfig):
            cfg = self.config
        elif isinstance(self.config, dict):
            cfg = RunConfig.from_dict(self.config)
        else:
            cfg = load_config(self.config)
        if self.epochs is not None:
            cfg = cfg.replace(schedule__total_epochs=int(self.epochs))
        if self.seed is not None:
            cfg = cfg.replace(seed=int(self.seed))
        return cfg

    def _waves(self, X) -> list[Waveform]:
        sr = self.config_.audio.sample_rate_hz
        waves = [_as_waveform(x, sr) for x in X]
        return [w if w.sample_rate_hz == sr else resample(w, sr) for w in waves]

    def fit(self, X, y):
        cfg = self._resolved_config()
        self.config_ = cfg
        X = list(X)
        y = list(y)
        if len(X) != len(y):
            raise InvalidInputError(f"X has {len(X)} waveforms but y has {len(y)} labels")
        waves = self._waves(X)
        dataset = TrainingSet.from_arrays([w.numpy() for w in waves], y)
        if self.out_dir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="slmgan-")
            out_dir = self._tmp.name
        else:
            out_dir = str(self.out_dir)
        cfg = cfg.replace(out_dir=out_dir)
        self.config_ = cfg
        self.checkpoint_ = run_training(cfg, dataset, resume=False, device=self.device)
        self.models_ = load_models(self.checkpoint_, self.device)
        self.roster_ = list(dataset.roster)
        self.loss_log_ = read_loss_log(out_dir)
        return self

    @classmethod
    def from_checkpoint(cls, path, device="cpu") -> "SLMGANVoiceConverter":
        """A fitted converter restored from a checkpoint (or run) directory."""
        ckpt = resolve_checkpoint(path)
        est = cls(device=device)
        est.models_ = load_models(ckpt, device)
        run_cfg = ckpt.parent.parent / "config.json"
        est.config_ = load_config(run_cfg) if run_cfg.exists() else est.models_.config
        est.checkpoint_ = ckpt
        est.roster_ = list(read_meta(ckpt)["roster"])
        return est

    def convert(self, source, reference) -> np.ndarray:
        """Convert one waveform to the voice of ``reference``."""
        check_is_fitted(self, "models_")
        src, ref = self._waves([source, reference])
        return convert_waveform(self.models_, src, ref).numpy()

    def transform(self, X, reference=None):
        """Convert each waveform of ``X``.

        ``reference`` is one waveform (shared target voice) or a sequence of
        the same length as ``X``; without it every input is reconstructed in
        its own voice.
        """
        check_is_fitted(self, "models_")
        X = list(X)
        if reference is None:
            refs = X
        elif _is_single_waveform(reference):
            refs = [reference] * len(X)
        else:
            refs = list(reference)
            if len(refs) != len(X):
                raise InvalidInputError(f"{len(X)} sources but {len(refs)} references")
        return [self.convert(x, r) for x, r in zip(X, refs)]

    def layer_importance(self, norm: str = "fro") -> np.ndarray:
        check_is_fitted(self, "models_")
        return analyze_weights(self.models_, norm=norm)

    def save(self, path) -> Path:
        """Copy the fitted checkpoint to ``path``."""
        import shutil

        check_is_fitted(self, "checkpoint_")
        if Path(path).exists():
            raise ConfigurationError(f"{path} already exists")
        shutil.copytree(self.checkpoint_, path)
        return Path(path)
