"""Checkpoint directories.

Layout under a run's output directory::

    checkpoints/epoch_0005/
        generator.pt style_encoder.pt mel_critic.pt slm_critic.pt
        source_classifier.pt optimizers.pt meta.json
    checkpoints/LATEST        # name of the newest epoch directory

``meta.json`` records the format version, number of completed epochs, the
speaker roster, the audio and network configs, and SHA-256 hashes of the
frozen modules (vocoder, F0 network, SLM backbone). Loading refuses a
checkpoint whose configs or frozen hashes disagree with the current run.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .config import RunConfig
from .validation import ConfigurationError

FORMAT_VERSION = 1
FILES = {
    "generator": "generator.pt",
    "style_encoder": "style_encoder.pt",
    "mel_critic": "mel_critic.pt",
    "slm_critic": "slm_critic.pt",
    "classifier": "source_classifier.pt",
}


def checkpoint_dir(out_dir, epoch: int) -> Path:
    return Path(out_dir) / "checkpoints" / f"epoch_{epoch:04d}"


def save_checkpoint(models, cfg: RunConfig, out_dir, epoch: int) -> Path:
    d = checkpoint_dir(out_dir, epoch)
    d.mkdir(parents=True, exist_ok=True)
    for attr, fname in FILES.items():
        torch.save(getattr(models, attr).state_dict(), d / fname)
    torch.save({"g": models.opt_g.state_dict(), "d": models.opt_d.state_dict()}, d / "optimizers.pt")
    meta = {
        "format_version": FORMAT_VERSION,
        "epoch": epoch,
        "roster": models.roster,
        "audio": cfg.to_dict()["audio"],
        "network": cfg.to_dict()["network"],
        "frozen_hashes": models.frozen_hashes(),
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2))
    (d.parent / "LATEST").write_text(d.name)
    return d


def read_meta(ckpt_dir) -> dict:
    path = Path(ckpt_dir) / "meta.json"
    if not path.exists():
        raise ConfigurationError(f"{ckpt_dir} is not a checkpoint directory (no meta.json)")
    meta = json.loads(path.read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint format {meta.get('format_version')}")
    return meta


def latest_checkpoint(out_dir) -> Path | None:
    pointer = Path(out_dir) / "checkpoints" / "LATEST"
    if not pointer.exists():
        return None
    d = pointer.parent / pointer.read_text().strip()
    return d if (d / "meta.json").exists() else None


def resolve_checkpoint(path) -> Path:
    """Accept a checkpoint directory or a run directory (uses its latest checkpoint)."""
    path = Path(path)
    if (path / "meta.json").exists():
        return path
    latest = latest_checkpoint(path)
    if latest is None:
        raise ConfigurationError(f"no checkpoint found at {path}")
    return latest


def load_into(models, ckpt_dir, cfg: RunConfig | None = None, optimizers: bool = True) -> int:
    """Restore weights (and optimiser state) into ``models``; return the completed epoch count."""
    ckpt_dir = Path(ckpt_dir)
    meta = read_meta(ckpt_dir)
    if cfg is not None:
        current = cfg.to_dict()
        for section in ("audio", "network"):
            if meta[section] != current[section]:
                raise ConfigurationError(f"checkpoint {section} config differs from the run config")
    if meta["roster"] != models.roster:
        raise ConfigurationError("checkpoint speaker roster differs from the dataset roster")
    if meta["frozen_hashes"] != models.frozen_hashes():
        raise ConfigurationError("frozen module weights differ from those the checkpoint was trained with")
    for attr, fname in FILES.items():
        state = torch.load(ckpt_dir / fname, map_location="cpu", weights_only=True)
        getattr(models, attr).load_state_dict(state)
    if optimizers:
        opt = torch.load(ckpt_dir / "optimizers.pt", map_location="cpu", weights_only=True)
        models.opt_g.load_state_dict(opt["g"])
        models.opt_d.load_state_dict(opt["d"])
    return int(meta["epoch"])


def load_models(ckpt_dir, device="cpu"):
    """Rebuild a full model set from a checkpoint alone."""
    from .config import AudioConfig, NetworkConfig
    from .training import build_models

    ckpt_dir = resolve_checkpoint(ckpt_dir)
    meta = read_meta(ckpt_dir)
    cfg = RunConfig(audio=AudioConfig(**meta["audio"]), network=NetworkConfig(**meta["network"]))
    models = build_models(cfg, meta["roster"], device)
    load_into(models, ckpt_dir, cfg, optimizers=False)
    return models.eval()
