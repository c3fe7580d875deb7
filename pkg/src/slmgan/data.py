"""Corpus ingestion, speaker-split manifests, synthetic toy speakers and batch sampling."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .audio import MelAnalyzer, Waveform, read_wav, resample, write_wav
from .config import AudioConfig
from .validation import ConfigurationError

logger = logging.getLogger(__name__)

VAL_FRACTION = 0.1


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class DatasetManifest:
    """Speaker -> utterance paths, with per-utterance and per-speaker split tags."""

    speakers: dict[str, list[str]]
    utterance_split: dict[str, str]
    speaker_split: dict[str, str]
    seed: int
    root: str = ""

    @property
    def seen_speakers(self) -> list[str]:
        return sorted(s for s, tag in self.speaker_split.items() if tag == "seen")

    @property
    def unseen_speakers(self) -> list[str]:
        return sorted(s for s, tag in self.speaker_split.items() if tag == "unseen")

    def utterances(self, speaker: str, split: str = "train") -> list[str]:
        return [p for p in self.speakers[speaker] if self.utterance_split[p] == split]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "root": self.root,
            "speakers": {
                spk: {
                    "split": self.speaker_split[spk],
                    "utterances": [{"path": p, "split": self.utterance_split[p]} for p in paths],
                }
                for spk, paths in sorted(self.speakers.items())
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        speakers, utt_split, spk_split = {}, {}, {}
        for spk, entry in d["speakers"].items():
            spk_split[spk] = entry["split"]
            speakers[spk] = [u["path"] for u in entry["utterances"]]
            utt_split.update({u["path"]: u["split"] for u in entry["utterances"]})
        return cls(speakers, utt_split, spk_split, d["seed"], d.get("root", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def ingest(root_dir, seed: int = 0, unseen_fraction: float = 0.2, out_path=None) -> DatasetManifest:
    """Split a ``root/<speaker>/*.wav`` tree into seen/unseen speakers and train/val utterances.

    ``round(unseen_fraction * n_speakers)`` speakers are held out entirely; each
    seen speaker's utterances are split 90/10 into train/val. Empty speaker
    directories are skipped with a warning.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise ConfigurationError(f"dataset root {root} is not a directory")
    if not 0 <= unseen_fraction < 1:
        raise ConfigurationError("unseen_fraction must lie in [0, 1)")
    found = {}
    for spk_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        wavs = sorted(str(p.resolve()) for p in spk_dir.glob("*.wav"))
        if not wavs:
            logger.warning("skipping %s: no WAV files", spk_dir)
            continue
        found[spk_dir.name] = wavs
    rng = np.random.default_rng(seed)
    names = sorted(found)
    order = rng.permutation(len(names))
    n_unseen = _round_half_up(unseen_fraction * len(names))
    unseen = {names[i] for i in order[:n_unseen]}
    speaker_split = {s: ("unseen" if s in unseen else "seen") for s in names}
    if sum(tag == "seen" for tag in speaker_split.values()) < 2:
        raise ConfigurationError(f"need at least 2 seen speakers, found {len(names) - n_unseen}")
    utterance_split = {}
    for spk in names:
        paths = found[spk]
        if spk in unseen:
            utterance_split.update({p: "test" for p in paths})
            continue
        perm = rng.permutation(len(paths))
        n_val = _round_half_up(VAL_FRACTION * len(paths))
        if n_val >= len(paths):
            n_val = len(paths) - 1
        val = {paths[i] for i in perm[:n_val]}
        utterance_split.update({p: ("val" if p in val else "train") for p in paths})
    manifest = DatasetManifest(found, utterance_split, speaker_split, seed, str(root.resolve()))
    if out_path is not None:
        manifest.save(out_path)
    return manifest


@dataclass
class TrainingSet:
    """Training utterances of the seen speakers, loaded into memory at the analysis rate."""

    roster: list[str]
    audio: list[np.ndarray]
    speaker: np.ndarray
    paths: list[str]
    by_speaker: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        if len(self.roster) < 2:
            raise ConfigurationError("training needs at least 2 speakers")
        self.speaker = np.asarray(self.speaker, dtype=np.int64)
        self.by_speaker = [np.flatnonzero(self.speaker == k) for k in range(len(self.roster))]
        empty = [self.roster[k] for k, idx in enumerate(self.by_speaker) if idx.size == 0]
        if empty:
            raise ConfigurationError(f"speakers without training utterances: {empty}")

    def __len__(self):
        return len(self.audio)

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, audio_cfg: AudioConfig | None = None) -> "TrainingSet":
        audio_cfg = audio_cfg or AudioConfig()
        roster = manifest.seen_speakers
        audio, speaker, paths = [], [], []
        for k, spk in enumerate(roster):
            for path in manifest.utterances(spk, "train"):
                audio.append(load_audio(path, audio_cfg.sample_rate_hz))
                speaker.append(k)
                paths.append(path)
        return cls(roster, audio, np.array(speaker), paths)

    @classmethod
    def from_arrays(cls, waveforms, labels) -> "TrainingSet":
        labels = list(labels)
        roster = sorted({str(y) for y in labels})
        index = {name: k for k, name in enumerate(roster)}
        audio = [np.asarray(w, dtype=np.float32).reshape(-1) for w in waveforms]
        return cls(roster, audio, np.array([index[str(y)] for y in labels]), [f"<array {i}>" for i in range(len(audio))])


def load_audio(path, sample_rate_hz: int) -> np.ndarray:
    wav = read_wav(path)
    if wav.sample_rate_hz != sample_rate_hz:
        wav = resample(wav, sample_rate_hz)
    return wav.numpy().astype(np.float32)


@dataclass
class TrainingBatch:
    x_src: torch.Tensor
    x_ref: torch.Tensor
    y_src: torch.Tensor
    y_trg: torch.Tensor
    src_paths: list[str]
    ref_paths: list[str]


def _crop(audio: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    if len(audio) <= n:
        return np.pad(audio, (0, n - len(audio)))
    start = int(rng.integers(0, len(audio) - n + 1))
    return audio[start : start + n]


def segment_samples(segment_seconds: float, audio_cfg: AudioConfig) -> int:
    return int(round(segment_seconds * audio_cfg.sample_rate_hz))


def make_batch(dataset: TrainingSet, rng: np.random.Generator, batch_size: int = 28,
               segment_seconds: float = 2.0, analyzer: MelAnalyzer | None = None) -> TrainingBatch:
    """Sample sources uniformly over training utterances and targets uniformly over the roster.

    Each reference is an utterance of its target speaker. Segments are
    cropped or zero-padded to exactly ``segment_seconds``.
    """
    if len(dataset.roster) < 2:
        raise ConfigurationError("need at least 2 speakers to sample conversions")
    analyzer = analyzer or MelAnalyzer(AudioConfig())
    n = segment_samples(segment_seconds, analyzer.cfg)
    src_idx = rng.integers(0, len(dataset), size=batch_size)
    y_trg = rng.integers(0, len(dataset.roster), size=batch_size)
    ref_idx = np.array([rng.choice(dataset.by_speaker[k]) for k in y_trg])
    src = np.stack([_crop(dataset.audio[i], n, rng) for i in src_idx])
    ref = np.stack([_crop(dataset.audio[i], n, rng) for i in ref_idx])
    with torch.no_grad():
        x_src = analyzer(torch.from_numpy(src))
        x_ref = analyzer(torch.from_numpy(ref))
    return TrainingBatch(
        x_src=x_src,
        x_ref=x_ref,
        y_src=torch.from_numpy(dataset.speaker[src_idx]),
        y_trg=torch.from_numpy(y_trg.astype(np.int64)),
        src_paths=[dataset.paths[i] for i in src_idx],
        ref_paths=[dataset.paths[i] for i in ref_idx],
    )


# Shared vowel targets (F1, F2, F3 in Hz) scaled per speaker.
_VOWELS = np.array([
    [730, 1090, 2440],
    [270, 2290, 3010],
    [300, 870, 2240],
    [530, 1840, 2480],
    [570, 840, 2410],
], dtype=np.float64)
_BANDWIDTHS = np.array([90.0, 110.0, 170.0])


@dataclass(frozen=True)
class SyntheticSpeaker:
    """Source-filter voice: pitch register, vocal-tract scale and spectral tilt."""

    f0_hz: float
    formant_scale: float
    tilt: float

    def utterance(self, seconds: float, rng: np.random.Generator, sr: int = 22050) -> np.ndarray:
        n = int(round(seconds * sr))
        out = np.zeros(n)
        pos = int(rng.uniform(0.02, 0.1) * sr)
        while pos < n:
            syl = int(rng.uniform(0.15, 0.35) * sr)
            end = min(pos + syl, n)
            m = end - pos
            if m > 32:
                out[pos:end] = self._syllable(m, rng, sr)
            pos = end + int(rng.uniform(0.03, 0.15) * sr)
        out += 1e-4 * rng.standard_normal(n)
        return (0.5 * out / max(np.abs(out).max(), 1e-9)).astype(np.float32)

    def _syllable(self, m: int, rng: np.random.Generator, sr: int) -> np.ndarray:
        t = np.arange(m) / sr
        start = self.f0_hz * rng.uniform(0.92, 1.08)
        glide = rng.uniform(-0.12, 0.12)
        f0 = start * (1 + glide * t / t[-1]) * (1 + 0.015 * np.sin(2 * np.pi * 5.5 * t))
        phase = 2 * np.pi * np.cumsum(f0) / sr
        formants = _VOWELS[rng.integers(len(_VOWELS))] * self.formant_scale
        mean_f0 = float(f0.mean())
        sig = np.zeros(m)
        for h in range(1, int(min(5000.0, sr / 2 - 500) / mean_f0) + 1):
            fh = h * mean_f0
            gain = np.sum(1.0 / (1.0 + ((fh - formants) / _BANDWIDTHS) ** 2)) * h ** (-self.tilt)
            sig += gain * np.sin(h * phase)
        ramp = min(int(0.02 * sr), m // 2)
        env = np.ones(m)
        env[:ramp] = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[m - ramp:] = env[:ramp][::-1]
        return sig * env


def synthetic_speakers(n_speakers: int = 4, seed: int = 0) -> list[SyntheticSpeaker]:
    """Speakers spread over pitch register and vocal-tract scale (pitch kept within 130-300 Hz)."""
    rng = np.random.default_rng(seed)
    f0s = np.geomspace(130, 280, n_speakers)
    scales = np.linspace(0.85, 1.2, n_speakers)[rng.permutation(n_speakers)]
    tilts = rng.uniform(0.6, 1.4, n_speakers)
    return [SyntheticSpeaker(float(f), float(a), float(t)) for f, a, t in zip(f0s, scales, tilts)]


def write_synthetic_corpus(root, n_speakers: int = 4, n_utterances: int = 10, seconds: float = 2.0,
                           seed: int = 0, sample_rate_hz: int = 22050) -> Path:
    """Write ``root/spkNN/uttNNN.wav`` (16-bit PCM) for a set of synthetic speakers."""
    root = Path(root)
    rng = np.random.default_rng(seed + 1)
    for k, spk in enumerate(synthetic_speakers(n_speakers, seed)):
        d = root / f"spk{k:02d}"
        os.makedirs(d, exist_ok=True)
        for j in range(n_utterances):
            audio = spk.utterance(seconds, rng, sample_rate_hz)
            write_wav(d / f"utt{j:03d}.wav", Waveform(torch.from_numpy(audio), sample_rate_hz), subtype="int16")
    return root
