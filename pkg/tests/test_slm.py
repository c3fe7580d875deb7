import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from slmgan.audio import Waveform
from slmgan.networks import param_hash
from slmgan.slm import (
    CONSISTENCY_LAYERS,
    ProjectionHead,
    SlmFeatureStack,
    SurrogateSLM,
    consistency_features,
    default_backbone,
    extract_slm,
    layer_importance,
    project,
)
from slmgan.validation import InvalidInputError


def wave(seconds, sr=22050, seed=0):
    g = torch.Generator().manual_seed(seed)
    return Waveform(torch.randn(int(seconds * sr), generator=g) * 0.1, sr)


class TestExtraction:
    def test_two_seconds_give_100_frames(self):
        stack = extract_slm(wave(2.0))
        assert stack.layers.shape == (13, 100, 768)
        assert stack.n_frames == 100

    def test_deterministic(self):
        w = wave(0.5)
        assert torch.equal(extract_slm(w).layers, extract_slm(w).layers)

    def test_any_rate(self):
        assert extract_slm(wave(1.0, sr=16000)).n_frames == 50
        assert extract_slm(wave(1.0, sr=44100)).n_frames == 50

    def test_too_short(self):
        with pytest.raises(InvalidInputError):
            extract_slm(Waveform(torch.zeros(100), 16000))

    def test_differentiable(self):
        samples = (torch.randn(8000) * 0.1).requires_grad_(True)
        extract_slm(Waveform(samples, 16000)).layers[8].sum().backward()
        assert samples.grad.abs().sum() > 0

    def test_backbone_frozen_and_seeded(self):
        a, b = SurrogateSLM(), SurrogateSLM()
        assert param_hash(a) == param_hash(b)
        assert all(not p.requires_grad for p in a.parameters())
        a.train()
        assert not a.training

    def test_construction_leaves_global_rng_alone(self):
        torch.manual_seed(5)
        expected = torch.rand(3)
        torch.manual_seed(5)
        SurrogateSLM()
        assert torch.equal(torch.rand(3), expected)

    def test_stack_validation(self):
        with pytest.raises(InvalidInputError):
            SlmFeatureStack(torch.zeros(12, 3, 768))
        with pytest.raises(InvalidInputError):
            SlmFeatureStack(torch.zeros(13, 3, 512))


class TestConsistencyFeatures:
    def test_selects_layers_six_to_nine(self):
        layers = torch.arange(13.0)[:, None, None].expand(13, 2, 768)
        out = consistency_features(SlmFeatureStack(layers))
        assert out.shape == (4, 2, 768)
        assert out[:, 0, 0].tolist() == [6.0, 7.0, 8.0, 9.0]
        assert CONSISTENCY_LAYERS == (6, 7, 8, 9)

    def test_perturbation(self):
        layers = torch.randn(13, 3, 768)
        base = consistency_features(layers).clone()
        bumped = layers.clone()
        bumped[12] += 1
        assert torch.equal(consistency_features(bumped), base)
        bumped = layers.clone()
        bumped[7] += 1
        assert not torch.equal(consistency_features(bumped), base)


class TestProjection:
    def test_zero_weight_gives_bias(self):
        head = ProjectionHead()
        with torch.no_grad():
            head.weight.zero_()
        out = project(SlmFeatureStack(torch.randn(13, 4, 768)), head)
        assert out.shape == (4, 256)
        assert torch.equal(out, head.bias.detach().expand(4, 256))

    def test_selector_weight(self):
        head = ProjectionHead()
        with torch.no_grad():
            head.weight.zero_()
            head.bias.zero_()
            head.weight[:256, :] = torch.eye(256)
        layers = torch.randn(13, 5, 768)
        assert torch.equal(project(layers, head), layers[0, :, :256])

    def test_matches_loop_oracle_small_head(self, rng):
        head = ProjectionHead(n_layers=13, feature_dim=3, out_dim=2).double()
        layers = torch.tensor(rng.normal(size=(13, 2, 3)))
        ref = oracles.project(layers, head.weight.detach(), head.bias.detach())
        np.testing.assert_allclose(head(layers[None])[0].detach().numpy(), ref, atol=1e-9)

    def test_full_size_against_per_layer_sum(self, rng):
        head = ProjectionHead().double()
        layers = torch.tensor(rng.normal(size=(13, 2, 768)))
        w = head.weight.detach().numpy().reshape(13, 768, 256)
        ref = sum(layers[l].numpy() @ w[l] for l in range(13)) + head.bias.detach().numpy()
        np.testing.assert_allclose(head(layers).detach().numpy(), ref, atol=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            ProjectionHead()(torch.zeros(1, 12, 2, 768))


class TestImportance:
    def test_one_hot(self):
        head = ProjectionHead()
        with torch.no_grad():
            head.weight.zero_()
            head.weight[3 * 768 : 4 * 768] = torch.randn(768, 256)
        imp = layer_importance(head)
        expected = np.zeros(13)
        expected[3] = 1.0
        assert np.array_equal(imp, expected)

    def test_uniform(self):
        head = ProjectionHead()
        with torch.no_grad():
            head.weight.copy_(torch.ones(13 * 768, 256))
        imp = layer_importance(head)
        assert np.array_equal(imp, np.full(13, imp[0]))
        assert imp[0] == pytest.approx(1 / 13, abs=1e-15)

    def test_all_zero_warns(self):
        head = ProjectionHead()
        with torch.no_grad():
            head.weight.zero_()
        with pytest.warns(RuntimeWarning):
            imp = layer_importance(head)
        assert np.allclose(imp, 1 / 13)

    @pytest.mark.parametrize("norm", ["fro", "l1"])
    def test_random_head_matches_oracle(self, norm):
        head = ProjectionHead(n_layers=13, feature_dim=4, out_dim=3)
        imp = layer_importance(head, norm)
        ref = oracles.importance(head.weight.detach().double(), 13, norm)
        np.testing.assert_allclose(imp, ref, atol=1e-12)
        assert imp.sum() == pytest.approx(1.0, abs=1e-6)

    def test_bias_ignored(self):
        head = ProjectionHead()
        before = layer_importance(head)
        with torch.no_grad():
            head.bias.mul_(100)
        assert np.array_equal(layer_importance(head), before)

    def test_bad_norm(self):
        with pytest.raises(InvalidInputError):
            layer_importance(ProjectionHead(), "max")

    @settings(max_examples=25, deadline=None)
    @given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
    def test_scale_free(self, c, seed):
        torch.manual_seed(seed)
        head = ProjectionHead(feature_dim=8, out_dim=4).double()
        before = layer_importance(head)
        with torch.no_grad():
            head.weight.mul_(c)
        after = layer_importance(head)
        np.testing.assert_allclose(after, before, rtol=1e-9, atol=1e-12)
        assert (after >= 0).all()


def test_default_backbone_is_shared():
    assert default_backbone() is default_backbone()
