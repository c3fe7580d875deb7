import numpy as np
import pytest
import torch

from slmgan.config import toy_config
from slmgan.data import TrainingSet, ingest, write_synthetic_corpus
from slmgan.training import build_models

torch.set_num_threads(1)

_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when == "teardown":
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "ran": False})
    if report.failed:
        entry["ok"] = False
    if report.when == "call":
        entry["ran"] = True
    elif report.skipped:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] and entry["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} [{status}] {entry['title']}")


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Four synthetic speakers, six 1-s utterances each."""
    root = tmp_path_factory.mktemp("corpus")
    return write_synthetic_corpus(root, n_speakers=4, n_utterances=6, seconds=1.0, seed=0)


@pytest.fixture(scope="session")
def toy_dataset(toy_corpus):
    manifest = ingest(toy_corpus, seed=0, unseen_fraction=0.0)
    return TrainingSet.from_manifest(manifest, toy_config().audio)


@pytest.fixture()
def toy_models(toy_dataset):
    return build_models(toy_config(), toy_dataset.roster)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def trained_run(toy_dataset, tmp_path_factory):
    """A short run (3 epochs, every stage active) whose latest checkpoint CLI tests can load."""
    from slmgan.training import run_training

    out = tmp_path_factory.mktemp("trained") / "run"
    cfg = toy_config(
        schedule__total_epochs=3, schedule__slm_d_start_epoch=1, schedule__bcr_start_epoch=1,
        schedule__cls_start_epoch=2, schedule__steps_per_epoch=1, schedule__batch_size=2,
        out_dir=str(out),
    )
    run_training(cfg, toy_dataset, resume=False)
    return out


@pytest.fixture(scope="session")
def trend_corpus(tmp_path_factory):
    """Four synthetic speakers, ten 2-s utterances each."""
    return write_synthetic_corpus(tmp_path_factory.mktemp("trend_corpus"), n_speakers=4, n_utterances=10,
                                  seconds=2.0, seed=0)


@pytest.fixture(scope="session")
def trend_run(trend_corpus, tmp_path_factory):
    """A 60-epoch toy run on ``trend_corpus``; returns ``(run_dir, seconds)``."""
    import time

    from slmgan.training import run_training

    cfg = toy_config(out_dir=str(tmp_path_factory.mktemp("trend") / "run"), schedule__total_epochs=60)
    dataset = TrainingSet.from_manifest(ingest(trend_corpus, seed=0, unseen_fraction=0.0), cfg.audio)
    start = time.perf_counter()
    run_training(cfg, dataset, resume=False)
    return cfg.out_dir, time.perf_counter() - start
