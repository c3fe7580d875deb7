"""Training objectives.

Every L1-type distance is the mean absolute difference over all elements
(and hence over the batch), so loss weights stay comparable across tensor
sizes. All functions accept tensors or array-likes and return 0-d tensors.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .config import LossWeights
from .slm import consistency_features
from .validation import InvalidInputError, as_tensor, check_speaker_ids

GENERATOR_TERMS = ("adv", "advcls", "sty", "f0", "slm", "norm", "cyc")


def _t(x):
    return as_tensor(x) if not isinstance(x, torch.Tensor) else x


def adv_g(score_fake) -> torch.Tensor:
    """Least-squares generator loss ``mean((D(fake) - 1)^2)``."""
    return (_t(score_fake) - 1).pow(2).mean()


def adv_d(score_fake, score_real) -> torch.Tensor:
    """Least-squares critic loss ``mean(D(fake)^2) + mean((D(real) - 1)^2)``."""
    return _t(score_fake).pow(2).mean() + (_t(score_real) - 1).pow(2).mean()


def adv_ce(score, is_real: bool) -> torch.Tensor:
    """Binary cross-entropy on logits toward 1 (``is_real``) or 0.

    With ``is_real=True`` on fake samples this is the non-saturating generator loss.
    """
    score = _t(score)
    target = torch.ones_like(score) if is_real else torch.zeros_like(score)
    return F.binary_cross_entropy_with_logits(score, target)


def _cross_entropy(logits, labels) -> torch.Tensor:
    logits = _t(logits)
    squeeze = logits.dim() == 1
    if squeeze:
        logits = logits.unsqueeze(0)
    labels = check_speaker_ids(labels, logits.shape[-1], "label")
    if labels.dim() == 0:
        labels = labels.expand(logits.shape[0])
    return F.cross_entropy(logits, labels)


def cls_loss(logits, y_src) -> torch.Tensor:
    """Cross-entropy of converted-sample logits against the source speaker (trains the classifier)."""
    return _cross_entropy(logits, y_src)


def advcls_loss(logits, y_trg) -> torch.Tensor:
    """Cross-entropy of converted-sample logits against the target speaker (trains the generator)."""
    return _cross_entropy(logits, y_trg)


def _l1(a, b, what: str) -> torch.Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def sty_loss(s, s_hat) -> torch.Tensor:
    return _l1(s, s_hat, "style vectors")


def normalize_f0(f0) -> torch.Tensor:
    """Divide each pitch track by its mean over voiced (positive) frames.

    Falls back to the mean over all frames when no frame is voiced. A track
    that is identically zero is returned unchanged, with a warning.
    """
    f0 = _t(f0)
    voiced = (f0 > 0).to(f0.dtype)
    n_voiced = voiced.sum(dim=-1, keepdim=True)
    mean_voiced = (f0 * voiced).sum(dim=-1, keepdim=True) / n_voiced.clamp_min(1)
    mean = torch.where(n_voiced > 0, mean_voiced, f0.mean(dim=-1, keepdim=True))
    zero = mean == 0
    if bool(zero.any()):
        warnings.warn("pitch track is identically zero; normalisation left it unchanged", RuntimeWarning)
    return f0 / torch.where(zero, torch.ones_like(mean), mean)


def f0_loss(f0_src, f0_gen) -> torch.Tensor:
    """Mean absolute difference of mean-normalised pitch tracks (cropped to the shorter)."""
    a, b = _t(f0_src), _t(f0_gen)
    n = min(a.shape[-1], b.shape[-1])
    return (normalize_f0(a[..., :n]) - normalize_f0(b[..., :n])).abs().mean()


def slm_consistency_loss(wav_real, wav_gen, extractor: Callable) -> torch.Tensor:
    """L1 between layers 6-9 of the SLM features of real and generated audio.

    ``extractor`` maps a waveform (whatever the caller passes) to a stack of
    shape ``(..., 13, T', 768)``. The real branch is treated as a constant.
    """
    with torch.no_grad():
        real = consistency_features(extractor(wav_real))
    gen = consistency_features(extractor(wav_gen))
    n = min(real.shape[-2], gen.shape[-2])
    return (real[..., :n, :] - gen[..., :n, :]).abs().mean()


def slm_consistency_from_stacks(real_layers: torch.Tensor, gen_layers: torch.Tensor) -> torch.Tensor:
    real = consistency_features(real_layers).detach()
    gen = consistency_features(gen_layers)
    n = min(real.shape[-2], gen.shape[-2])
    return (real[..., :n, :] - gen[..., :n, :]).abs().mean()


def norm_loss(x, g) -> torch.Tensor:
    """Mean over frames of ``| sum_n |x[n,t]| - sum_n |g[n,t]| |``."""
    x, g = _t(x), _t(g)
    if x.shape[-1] != g.shape[-1]:
        raise InvalidInputError(f"frame count mismatch: {x.shape[-1]} vs {g.shape[-1]}")
    return (x.abs().sum(dim=-2) - g.abs().sum(dim=-2)).abs().mean()


def cyc_loss(x, x_cyc) -> torch.Tensor:
    return _l1(x, x_cyc, "cycle reconstruction")


def bcr_penalty(critic: Callable, real_input, fake_input, augment: Callable) -> torch.Tensor:
    """Balanced consistency regularisation.

    ``mean((D(real) - D(aug(real)))^2) + mean((D(fake) - D(aug(fake)))^2)``;
    gradients flow through both critic evaluations.
    """
    real_term = (critic(real_input) - critic(augment(real_input))).pow(2).mean()
    fake_term = (critic(fake_input) - critic(augment(fake_input))).pow(2).mean()
    return real_term + fake_term


def full_generator_objective(terms: Mapping, w: LossWeights | None = None):
    """``adv + advcls*L_advcls + sty*L_sty + f0*L_f0 + slm*L_slm + norm*L_norm + cyc*L_cyc``."""
    w = w or LossWeights()
    missing = [k for k in GENERATOR_TERMS if k not in terms]
    if missing:
        raise InvalidInputError(f"missing generator loss terms: {missing}")
    return (
        terms["adv"]
        + w.advcls * terms["advcls"]
        + w.sty * terms["sty"]
        + w.f0 * terms["f0"]
        + w.slm * terms["slm"]
        + w.norm * terms["norm"]
        + w.cyc * terms["cyc"]
    )


def full_discriminator_objective(adv_d_term, cls_term, w: LossWeights | None = None):
    w = w or LossWeights()
    return adv_d_term + w.cls * cls_term


@dataclass
class LossReport:
    """Named scalar terms from one optimisation step, plus totals."""

    terms: dict[str, float] = field(default_factory=dict)
    total_g: float = 0.0
    total_d: float = 0.0

    def is_finite(self) -> bool:
        values = list(self.terms.values()) + [self.total_g, self.total_d]
        return all(math.isfinite(v) for v in values)

    def as_record(self, **extra) -> dict:
        return {**extra, **self.terms, "total_g": self.total_g, "total_d": self.total_d}
