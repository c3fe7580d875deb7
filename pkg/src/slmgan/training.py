"""Staged adversarial training: model assembly, critic and generator steps, the epoch loop."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .audio import MelAnalyzer
from .config import LossWeights, RunConfig, TrainSchedule
from .data import DatasetManifest, TrainingBatch, TrainingSet, make_batch
from .discriminators import MelDiscriminator, SlmDiscriminator, SourceClassifier
from .losses import (
    LossReport,
    adv_ce,
    adv_d,
    adv_g,
    advcls_loss,
    bcr_penalty,
    cls_loss,
    cyc_loss,
    f0_loss,
    full_discriminator_objective,
    full_generator_objective,
    norm_loss,
    slm_consistency_from_stacks,
    sty_loss,
)
from .networks import F0Network, Generator, StyleEncoder, Vocoder, param_hash
from .slm import SurrogateSLM, slm_layers
from .validation import ConfigurationError, TrainingDivergedError

logger = logging.getLogger(__name__)

LOSS_LOG = "losses.jsonl"


@dataclass
class SLMGANModels:
    """Every network of a run plus the two AdamW optimisers."""

    generator: Generator
    style_encoder: StyleEncoder
    f0_net: F0Network
    vocoder: Vocoder
    slm: nn.Module
    mel_critic: MelDiscriminator
    slm_critic: SlmDiscriminator
    classifier: SourceClassifier
    roster: list[str]
    config: RunConfig | None = None
    opt_g: torch.optim.Optimizer = field(repr=False, default=None)
    opt_d: torch.optim.Optimizer = field(repr=False, default=None)

    TRAINABLE = ("generator", "style_encoder", "mel_critic", "slm_critic", "classifier")
    FROZEN = ("vocoder", "f0_net", "slm")

    def trainable(self) -> dict[str, nn.Module]:
        return {name: getattr(self, name) for name in self.TRAINABLE}

    def frozen(self) -> dict[str, nn.Module]:
        return {name: getattr(self, name) for name in self.FROZEN}

    def frozen_hashes(self) -> dict[str, str]:
        return {name: param_hash(m) for name, m in self.frozen().items()}

    def to(self, device) -> "SLMGANModels":
        for name in self.TRAINABLE + self.FROZEN:
            getattr(self, name).to(device)
        return self

    def eval(self) -> "SLMGANModels":
        for m in self.trainable().values():
            m.eval()
        return self


def build_models(cfg: RunConfig, roster: list[str], device="cpu") -> SLMGANModels:
    """Initialise all networks (trainable ones from ``cfg.seed``) and the optimisers."""
    if len(roster) < 2:
        raise ConfigurationError("roster must contain at least 2 speakers")
    torch.manual_seed(cfg.seed)
    a, n = cfg.audio, cfg.network
    models = SLMGANModels(
        generator=Generator(a, n),
        style_encoder=StyleEncoder(a, n),
        f0_net=F0Network(a, n),
        vocoder=Vocoder(a),
        slm=SurrogateSLM(),
        mel_critic=MelDiscriminator(a, n, len(roster)),
        slm_critic=SlmDiscriminator(n),
        classifier=SourceClassifier(n, len(roster)),
        roster=list(roster),
        config=cfg,
    ).to(device)
    o = cfg.optim
    kw = dict(lr=o.learning_rate, betas=(o.beta1, o.beta2), weight_decay=o.weight_decay)
    models.opt_g = torch.optim.AdamW(
        list(models.generator.parameters()) + list(models.style_encoder.parameters()), **kw
    )
    models.opt_d = torch.optim.AdamW(
        list(models.mel_critic.parameters())
        + list(models.slm_critic.parameters())
        + list(models.classifier.parameters()),
        **kw,
    )
    return models


def _grad_norm(module: nn.Module) -> float:
    grads = [p.grad.detach().pow(2).sum() for p in module.parameters() if p.grad is not None]
    return float(torch.stack(grads).sum().sqrt()) if grads else 0.0


def _requires_grad(modules, flag: bool):
    for m in modules:
        for p in m.parameters():
            p.requires_grad_(flag)


def _scalar(t) -> float:
    return float(t.detach())


def _zero():
    return torch.zeros(())


class Augment:
    """Label-preserving bCR augmentation: random gain plus a circular time shift.

    On log-mels the gain is an additive ``log(scale)`` and the shift is in
    frames; on waveforms the gain multiplies and the shift is ``frames * hop``.
    One draw per call, shared across the batch.
    """

    def __init__(self, schedule: TrainSchedule, hop_length: int, domain: str):
        self.lo, self.hi = schedule.bcr_scale_range
        self.max_shift = schedule.bcr_max_shift_frames
        self.hop = hop_length
        self.domain = domain

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        scale = float(torch.empty(()).uniform_(self.lo, self.hi))
        shift = int(torch.randint(-self.max_shift, self.max_shift + 1, ()))
        if self.domain == "mel":
            return torch.roll(x + np.log(scale), shift, dims=-1)
        return torch.roll(x * scale, shift * self.hop, dims=-1)


def _mel_adv_is_lsgan(schedule: TrainSchedule, epoch: int) -> bool:
    return schedule.slm_active(epoch) and not schedule.mel_ce_after_slm_start


def discriminator_step(batch: TrainingBatch, models: SLMGANModels, w: LossWeights,
                       schedule: TrainSchedule, epoch: int) -> LossReport:
    """One critic update.

    Before the SLM critic joins, only the mel critic trains (cross-entropy
    form). Afterwards both critics train with least squares, plus bCR once it
    is active; the source classifier term appears from its start epoch.
    """
    m = models
    critics = (m.mel_critic, m.slm_critic, m.classifier)
    _requires_grad(critics, True)
    x_src, x_ref, y_src, y_trg = batch.x_src, batch.x_ref, batch.y_src, batch.y_trg
    sr = m.vocoder.sample_rate_hz
    with torch.no_grad():
        s = m.style_encoder(x_ref)
        fake = m.generator(x_src, s, m.f0_net(x_src).h_f0)

    if _mel_adv_is_lsgan(schedule, epoch):
        d_adv_mel = adv_d(m.mel_critic.score(fake, y_trg), m.mel_critic.score(x_src, y_src))
    else:
        d_adv_mel = adv_ce(m.mel_critic.score(x_src, y_src), True) + adv_ce(m.mel_critic.score(fake, y_trg), False)

    d_adv_slm = d_bcr = d_cls = _zero()
    need_slm = schedule.slm_active(epoch) or schedule.cls_active(epoch)
    if need_slm:
        with torch.no_grad():
            wav_real, wav_fake = m.vocoder(x_src), m.vocoder(fake)
            st_real, st_fake = slm_layers(m.slm, wav_real, sr), slm_layers(m.slm, wav_fake, sr)
    if schedule.slm_active(epoch):
        d_adv_slm = adv_d(m.slm_critic.score(st_fake), m.slm_critic.score(st_real))
    if schedule.bcr_active(epoch):
        d_bcr = bcr_penalty(
            lambda x: m.mel_critic(x).mean(dim=(2, 3)), x_src, fake, Augment(schedule, 1, "mel")
        )
        if schedule.slm_active(epoch):
            d_bcr = d_bcr + bcr_penalty(
                lambda wav: m.slm_critic.score(slm_layers(m.slm, wav, sr)),
                wav_real,
                wav_fake,
                Augment(schedule, m.vocoder.cfg.hop_length, "wave"),
            )
    if schedule.cls_active(epoch):
        d_cls = cls_loss(m.classifier(st_fake), y_src)

    total = full_discriminator_objective(d_adv_mel + d_adv_slm + w.bcr * d_bcr, d_cls, w)
    m.opt_d.zero_grad(set_to_none=True)
    total.backward()
    report = LossReport(
        terms={
            "d_adv_mel": _scalar(d_adv_mel),
            "d_adv_slm": _scalar(d_adv_slm),
            "d_bcr": _scalar(d_bcr),
            "d_cls": _scalar(d_cls),
            "grad_mel_critic": _grad_norm(m.mel_critic),
            "grad_slm_critic": _grad_norm(m.slm_critic),
            "grad_classifier": _grad_norm(m.classifier),
        },
        total_d=_scalar(total),
    )
    if not report.is_finite():
        raise TrainingDivergedError(f"non-finite critic loss at epoch {epoch}: {report.terms}", report)
    m.opt_d.step()
    return report


def generator_step(batch: TrainingBatch, models: SLMGANModels, w: LossWeights,
                   schedule: TrainSchedule, epoch: int) -> LossReport:
    """One update of generator and style encoder on the full weighted objective.

    The SLM adversarial term is zero before the SLM critic joins, and the
    adversarial classifier term is zero before the classifier starts.
    """
    m = models
    _requires_grad((m.mel_critic, m.slm_critic, m.classifier), False)
    x_src, x_ref, y_trg = batch.x_src, batch.x_ref, batch.y_trg
    sr = m.vocoder.sample_rate_hz

    s = m.style_encoder(x_ref)
    f0_src = m.f0_net(x_src)
    fake = m.generator(x_src, s, f0_src.h_f0)

    score = m.mel_critic.score(fake, y_trg)
    adv_mel = adv_g(score) if _mel_adv_is_lsgan(schedule, epoch) else adv_ce(score, True)

    with torch.no_grad():
        st_real = slm_layers(m.slm, m.vocoder(x_src), sr)
    st_fake = slm_layers(m.slm, m.vocoder(fake), sr)
    adv_slm = adv_g(m.slm_critic.score(st_fake)) if schedule.slm_active(epoch) else _zero()
    advcls = advcls_loss(m.classifier(st_fake), y_trg) if schedule.cls_active(epoch) else _zero()

    f0_fake = m.f0_net(fake)
    reconstructed = m.generator(fake, m.style_encoder(x_src), f0_fake.h_f0)
    terms = {
        "adv": adv_mel + adv_slm,
        "advcls": advcls,
        "sty": sty_loss(s, m.style_encoder(fake)),
        "f0": f0_loss(f0_src.f0_hz, f0_fake.f0_hz),
        "slm": slm_consistency_from_stacks(st_real, st_fake),
        "norm": norm_loss(x_src, fake),
        "cyc": cyc_loss(x_src, reconstructed),
    }
    total = full_generator_objective(terms, w)
    m.opt_g.zero_grad(set_to_none=True)
    total.backward()
    report = LossReport(
        terms={
            "adv_mel": _scalar(adv_mel),
            "adv_slm": _scalar(adv_slm),
            **{k: _scalar(v) for k, v in terms.items()},
            "grad_generator": _grad_norm(m.generator),
            "grad_style_encoder": _grad_norm(m.style_encoder),
        },
        total_g=_scalar(total),
    )
    if not report.is_finite():
        raise TrainingDivergedError(f"non-finite generator loss at epoch {epoch}: {report.terms}", report)
    m.opt_g.step()
    return report


def step_rngs(seed: int, epoch: int, step: int) -> np.random.Generator:
    """Seed numpy and torch for one step so that any step can be replayed in isolation."""
    seq = np.random.SeedSequence([seed, epoch, step])
    torch.manual_seed(int(seq.generate_state(1, dtype=np.uint64)[0] % (2**63)))
    return np.random.default_rng(seq)


def steps_per_epoch(schedule: TrainSchedule, dataset: TrainingSet) -> int:
    if schedule.steps_per_epoch is not None:
        return schedule.steps_per_epoch
    return max(1, len(dataset) // schedule.batch_size)


def _load_dataset(cfg: RunConfig) -> TrainingSet:
    if cfg.dataset is None:
        raise ConfigurationError("config has no dataset manifest path")
    return TrainingSet.from_manifest(DatasetManifest.load(cfg.dataset), cfg.audio)


def _rewrite_log(path: Path, keep_before_epoch: int) -> None:
    if not path.exists():
        return
    kept = [line for line in path.read_text().splitlines() if line and json.loads(line)["epoch"] < keep_before_epoch]
    path.write_text("".join(line + "\n" for line in kept))


def run_training(cfg: RunConfig, dataset: TrainingSet | None = None, resume: bool = True,
                 stop_after_epoch: int | None = None, device="cpu", progress=None) -> Path:
    """Train for ``cfg.schedule.total_epochs`` epochs and return the last checkpoint directory.

    Writes ``config.json``, ``losses.jsonl`` (one record per step) and
    checkpoints under ``cfg.out_dir``. With ``resume`` an existing latest
    checkpoint is picked up and the log is truncated to match it, so the
    continued run is identical to an uninterrupted one. ``stop_after_epoch``
    ends the run early (after that many completed epochs), as an interruption
    would.
    """
    from .checkpoint import latest_checkpoint, load_into, save_checkpoint
    from .config import save_config

    dataset = dataset if dataset is not None else _load_dataset(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    models = build_models(cfg, dataset.roster, device)
    start_epoch = 0
    ckpt = latest_checkpoint(out) if resume else None
    if ckpt is not None:
        start_epoch = load_into(models, ckpt, cfg)
        logger.info("resuming from %s (epoch %d)", ckpt, start_epoch)
    log_path = out / LOSS_LOG
    if start_epoch == 0 and log_path.exists():
        log_path.unlink()
    _rewrite_log(log_path, start_epoch)

    sched, w = cfg.schedule, cfg.weights
    analyzer = MelAnalyzer(cfg.audio).to(device)
    n_steps = steps_per_epoch(sched, dataset)
    end_epoch = sched.total_epochs if stop_after_epoch is None else min(stop_after_epoch, sched.total_epochs)
    last = ckpt
    for name in SLMGANModels.TRAINABLE:
        getattr(models, name).train()
    with open(log_path, "a") as log:
        for epoch in range(start_epoch, end_epoch):
            for step in range(n_steps):
                rng = step_rngs(cfg.seed, epoch, step)
                batch = make_batch(dataset, rng, sched.batch_size, sched.segment_seconds, analyzer)
                batch = _to_device(batch, device)
                d_report = discriminator_step(batch, models, w, sched, epoch)
                g_report = generator_step(batch, models, w, sched, epoch)
                record = {
                    "epoch": epoch,
                    "step": step,
                    **d_report.terms,
                    **g_report.terms,
                    "total_g": g_report.total_g,
                    "total_d": d_report.total_d,
                    "src_paths": batch.src_paths,
                    "ref_paths": batch.ref_paths,
                }
                log.write(json.dumps(record) + "\n")
                if progress is not None:
                    progress(record)
            log.flush()
            done = epoch + 1
            if done % sched.checkpoint_every == 0 or done == sched.total_epochs or done == end_epoch:
                last = save_checkpoint(models, cfg, out, done)
    return Path(last) if last is not None else save_checkpoint(models, cfg, out, start_epoch)


def _to_device(batch: TrainingBatch, device) -> TrainingBatch:
    if str(device) == "cpu":
        return batch
    return TrainingBatch(batch.x_src.to(device), batch.x_ref.to(device), batch.y_src.to(device),
                         batch.y_trg.to(device), batch.src_paths, batch.ref_paths)


def read_loss_log(path) -> list[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / LOSS_LOG
    return [json.loads(line) for line in path.read_text().splitlines() if line]
