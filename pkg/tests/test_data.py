import logging

import numpy as np
import pytest
import torch

from slmgan.audio import MelAnalyzer, Waveform, write_wav
from slmgan.config import AudioConfig
from slmgan.data import (
    DatasetManifest,
    TrainingSet,
    ingest,
    make_batch,
    segment_samples,
    synthetic_speakers,
)
from slmgan.validation import ConfigurationError

ANALYZER = MelAnalyzer(AudioConfig())


def make_tree(root, counts, sr=22050, seconds=0.05):
    for k, n in enumerate(counts):
        d = root / f"s{k:02d}"
        d.mkdir(parents=True)
        for j in range(n):
            samples = torch.randn(int(sr * seconds)) * 0.1
            write_wav(d / f"u{j:02d}.wav", Waveform(samples, sr))
    return root


class TestIngest:
    def test_speaker_split_arithmetic(self, tmp_path):
        manifest = ingest(make_tree(tmp_path, [3] * 10), seed=0, unseen_fraction=0.2)
        assert len(manifest.seen_speakers) == 8 and len(manifest.unseen_speakers) == 2

    def test_utterance_split_arithmetic(self, tmp_path):
        manifest = ingest(make_tree(tmp_path, [20, 20]), seed=0, unseen_fraction=0.0)
        for spk in manifest.seen_speakers:
            assert len(manifest.utterances(spk, "train")) == 18
            assert len(manifest.utterances(spk, "val")) == 2

    def test_unseen_have_no_training_utterances(self, tmp_path):
        manifest = ingest(make_tree(tmp_path, [4] * 5), seed=1, unseen_fraction=0.4)
        for spk in manifest.unseen_speakers:
            assert manifest.utterances(spk, "train") == []
            assert manifest.utterances(spk, "val") == []

    def test_deterministic_and_saved(self, tmp_path):
        root = make_tree(tmp_path / "data", [5] * 6)
        a = ingest(root, seed=3, out_path=tmp_path / "a.json")
        b = ingest(root, seed=3, out_path=tmp_path / "b.json")
        assert a == b
        assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()
        assert DatasetManifest.load(tmp_path / "a.json") == a

    def test_seed_changes_split(self, tmp_path):
        root = make_tree(tmp_path, [10] * 10)
        splits = {tuple(ingest(root, seed=s).unseen_speakers) for s in range(6)}
        assert len(splits) > 1

    def test_empty_dir_skipped_with_warning(self, tmp_path, caplog):
        root = make_tree(tmp_path, [3, 3, 3])
        (root / "zz_empty").mkdir()
        with caplog.at_level(logging.WARNING):
            manifest = ingest(root, seed=0, unseen_fraction=0.0)
        assert "zz_empty" not in manifest.speakers
        assert any("zz_empty" in r.getMessage() for r in caplog.records)

    def test_too_few_seen(self, tmp_path):
        with pytest.raises(ConfigurationError):
            ingest(make_tree(tmp_path, [3, 3]), seed=0, unseen_fraction=0.5)

    def test_resampled_on_load(self, tmp_path):
        root = make_tree(tmp_path, [2, 2], sr=16000, seconds=0.5)
        ds = TrainingSet.from_manifest(ingest(root, seed=0, unseen_fraction=0.0))
        assert all(len(a) == 11025 for a in ds.audio)


class TestBatches:
    @pytest.fixture()
    def dataset(self):
        rng = np.random.default_rng(0)
        waves = [rng.normal(size=int(22050 * rng.uniform(0.2, 0.8))).astype(np.float32) * 0.1 for _ in range(12)]
        return TrainingSet.from_arrays(waves, ["a", "b", "c"] * 4)

    def test_same_seed_same_batch(self, dataset):
        a = make_batch(dataset, np.random.default_rng(7), 6, 0.5, ANALYZER)
        b = make_batch(dataset, np.random.default_rng(7), 6, 0.5, ANALYZER)
        assert torch.equal(a.x_src, b.x_src) and torch.equal(a.x_ref, b.x_ref)
        assert torch.equal(a.y_trg, b.y_trg) and a.src_paths == b.src_paths

    def test_reference_belongs_to_target(self, dataset):
        batch = make_batch(dataset, np.random.default_rng(2), 20, 0.3, ANALYZER)
        index = {p: k for k, p in enumerate(dataset.paths)}
        for path, y in zip(batch.ref_paths, batch.y_trg.tolist()):
            assert dataset.speaker[index[path]] == y
        for path, y in zip(batch.src_paths, batch.y_src.tolist()):
            assert dataset.speaker[index[path]] == y

    def test_batch_size_and_segment_length(self, dataset):
        batch = make_batch(dataset, np.random.default_rng(0), 28, 2.0, ANALYZER)
        assert batch.x_src.shape == (28, 80, 173) and batch.x_ref.shape == (28, 80, 173)
        assert segment_samples(2.0, AudioConfig()) == 44100

    def test_target_uniform_over_roster(self, dataset):
        batch = make_batch(dataset, np.random.default_rng(0), 3000, 0.02, ANALYZER)
        counts = np.bincount(batch.y_trg.numpy(), minlength=3)
        assert counts.min() > 900

    def test_needs_two_speakers(self):
        with pytest.raises(ConfigurationError):
            TrainingSet.from_arrays([np.zeros(100)] * 2, ["a", "a"])


def test_synthetic_speakers_are_distinct():
    speakers = synthetic_speakers(4, seed=0)
    assert len({s.f0_hz for s in speakers}) == 4
    audio = speakers[0].utterance(1.0, np.random.default_rng(0))
    assert audio.shape == (22050,) and np.abs(audio).max() <= 0.5 + 1e-6


def test_toy_corpus_layout(toy_corpus):
    assert sorted(p.name for p in toy_corpus.iterdir()) == ["spk00", "spk01", "spk02", "spk03"]
    assert len(list((toy_corpus / "spk00").glob("*.wav"))) == 6
