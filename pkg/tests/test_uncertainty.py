import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prostseg import ProbabilityMap, ProbabilityStack, UncertaintyMap, ZoneCombo, ZoneMask
from prostseg.errors import MissingTruth, ModelNotStochastic, NoBoundary, ShapeMismatch
from prostseg.models import Family, build, set_stochastic
from prostseg.uncertainty import (
    boundary_interior_contrast,
    entropy_map,
    entropy_values,
    mc_sample,
    predictive_mean,
    summarize,
)

from .conftest import miniature_spec, random_probs
from .oracles import entropy_scalar, grouped_uncertainty_loop


def prob_map(fill):
    arr = np.zeros((2, 2, 5), np.float32)
    arr[:, :] = fill
    return ProbabilityMap(probs=arr)


class TestMcSample:
    def test_single_sample_matches_forward(self, clean_pair):
        from prostseg.models import forward

        slice_, _ = clean_pair
        handle = set_stochastic(build(miniature_spec(Family.UNET), seed=4), True)
        stack = mc_sample(handle, slice_, T=1, base_seed=123)
        direct = forward(handle, slice_, rng_seed=123)[0]
        assert (stack.samples[0].probs == direct.probs).all()
        assert stack.seed_trace == (123,)

    def test_deterministic_stacks(self, clean_pair):
        slice_, _ = clean_pair
        handle = set_stochastic(build(miniature_spec(Family.UNET), seed=4), True)
        a = mc_sample(handle, slice_, T=5, base_seed=9)
        b = mc_sample(handle, slice_, T=5, base_seed=9)
        for sa, sb in zip(a.samples, b.samples):
            assert (sa.probs == sb.probs).all()

    def test_zero_rate_warns_and_collapses(self, clean_pair):
        slice_, _ = clean_pair
        handle = set_stochastic(
            build(miniature_spec(Family.UNET, dropout_rate=0.0), seed=4), True
        )
        with pytest.warns(ModelNotStochastic):
            stack = mc_sample(handle, slice_, T=5, base_seed=0)
        first = stack.samples[0].probs
        for sample in stack.samples[1:]:
            assert (sample.probs == first).all()
        h_mean = entropy_map(predictive_mean(stack)).values
        h_single = entropy_map(stack.samples[0]).values
        assert np.allclose(h_mean, h_single, atol=1e-7)

    def test_non_stochastic_mode_warns(self, clean_pair):
        slice_, _ = clean_pair
        handle = build(miniature_spec(Family.UNET), seed=4)  # stochastic_mode off
        with pytest.warns(ModelNotStochastic):
            mc_sample(handle, slice_, T=3, base_seed=0)


class TestPredictiveMean:
    def test_identical_samples(self):
        pm = prob_map([0.2, 0.2, 0.2, 0.2, 0.2])
        stack = ProbabilityStack(samples=(pm, pm, pm))
        assert np.allclose(predictive_mean(stack).probs, pm.probs)

    def test_two_one_hot_samples(self):
        a = prob_map([1, 0, 0, 0, 0])
        b = prob_map([0, 1, 0, 0, 0])
        mean = predictive_mean(ProbabilityStack(samples=(a, b)))
        assert np.allclose(mean.probs[0, 0], [0.5, 0.5, 0, 0, 0])

    @given(st.integers(0, 2**32 - 1), st.integers(1, 8))
    @settings(max_examples=20, deadline=None)
    def test_mean_stays_normalized(self, seed, T):
        rng = np.random.default_rng(seed)
        samples = tuple(ProbabilityMap(probs=random_probs(rng, (4, 4))) for _ in range(T))
        mean = predictive_mean(ProbabilityStack(samples=samples))
        assert np.allclose(mean.probs.sum(-1), 1.0, atol=1e-5)


class TestEntropyMap:
    def test_one_hot_zero(self):
        u = entropy_map(prob_map([1, 0, 0, 0, 0]))
        assert (u.values == 0).all()

    def test_uniform_is_exactly_one(self):
        u = entropy_map(prob_map([0.2] * 5))
        assert (u.values == 1.0).all()
        # raw entropy only matches ln 5 to float32-grid accuracy
        raw = entropy_map(prob_map([0.2] * 5), normalize=False)
        assert np.allclose(raw, math.log(5), atol=1e-7)

    def test_half_half_pixel(self):
        u = entropy_map(prob_map([0.5, 0.5, 0, 0, 0]))
        expected = entropy_scalar([0.5, 0.5, 0, 0, 0])
        assert expected == pytest.approx(math.log(2) / math.log(5), abs=1e-12)
        assert np.allclose(u.values, expected, atol=1e-9)
        raw = entropy_map(prob_map([0.5, 0.5, 0, 0, 0]), normalize=False)
        assert np.allclose(raw, math.log(2), atol=1e-9)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_class_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        probs = random_probs(rng, (4, 4))
        perm = rng.permutation(5)
        assert np.allclose(
            entropy_values(probs), entropy_values(probs[..., perm]), atol=1e-12
        )

    @given(st.integers(0, 2**32 - 1), st.integers(2, 10))
    @settings(max_examples=30, deadline=None)
    def test_jensen_concavity(self, seed, T):
        rng = np.random.default_rng(seed)
        samples = [random_probs(rng, (4, 4)).astype(np.float64) for _ in range(T)]
        h_mean = entropy_values(np.mean(samples, axis=0), normalize=False)
        mean_h = np.mean([entropy_values(s, normalize=False) for s in samples], axis=0)
        assert (h_mean >= mean_h - 1e-9).all()

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_normalized_range(self, seed):
        rng = np.random.default_rng(seed)
        values = entropy_values(random_probs(rng, (4, 4)))
        assert values.min() >= 0.0 and values.max() <= 1.0


class TestSummarize:
    def test_all_zero_map(self):
        umap = UncertaintyMap(values=np.zeros((4, 4), np.float32))
        labels = np.zeros((4, 4), np.uint8)
        summary = summarize(umap, labels, grouping="by_prediction")
        assert summary.mean_overall == 0.0 and summary.sd_overall == 0.0
        assert all(v == 0.0 for v in summary.per_class_mean.values())

    def test_indicator_map_per_class(self):
        truth = np.zeros((4, 4), np.uint8)
        truth[:2] = 1  # CZ block
        values = (truth == 1).astype(np.float32)
        umap = UncertaintyMap(values=values)
        summary = summarize(umap, truth, truth=truth, grouping="by_truth")
        assert summary.per_class_mean[1] == 1.0
        assert summary.per_class_mean[0] == 0.0

    def test_missing_truth(self):
        umap = UncertaintyMap(values=np.zeros((2, 2), np.float32))
        with pytest.raises(MissingTruth):
            summarize(umap, np.zeros((2, 2), np.uint8), grouping="by_truth")

    def test_shape_mismatch(self):
        umap = UncertaintyMap(values=np.zeros((2, 2), np.float32))
        with pytest.raises(ShapeMismatch):
            summarize(umap, np.zeros((4, 4), np.uint8), grouping="by_prediction")

    def test_single_class_truth_equals_overall(self):
        rng = np.random.default_rng(3)
        values = rng.random((4, 4)).astype(np.float32)
        umap = UncertaintyMap(values=values)
        truth = np.full((4, 4), 2, np.uint8)
        summary = summarize(umap, truth, truth=truth, grouping="by_truth")
        assert summary.per_class_mean[2] == pytest.approx(summary.mean_overall)
        assert summary.per_class_sd[2] == pytest.approx(summary.sd_overall)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_matches_grouping_oracle(self, seed):
        rng = np.random.default_rng(seed)
        values = rng.random((8, 8)).astype(np.float32)
        labels = rng.integers(0, 5, (8, 8)).astype(np.uint8)
        summary = summarize(UncertaintyMap(values=values), labels, grouping="by_prediction")
        oracle = grouped_uncertainty_loop(values, labels)
        for label, (mean, sd) in oracle.items():
            assert summary.per_class_mean[label] == pytest.approx(mean, abs=1e-6)
            assert summary.per_class_sd[label] == pytest.approx(sd, abs=1e-6)


class TestBoundaryContrast:
    def striped_truth(self, size=8):
        labels = np.zeros((size, size), np.uint8)
        labels[:, size // 2 :] = 1
        return ZoneMask(labels=labels, combo=ZoneCombo.CZ_PZ)

    def test_uniform_map_equal_means(self):
        truth = self.striped_truth()
        umap = UncertaintyMap(values=np.full((8, 8), 0.4, np.float32))
        contrast = boundary_interior_contrast(umap, truth, band_px=1)
        assert contrast.boundary_mean == pytest.approx(contrast.interior_mean)

    def test_edge_elevated_map(self):
        truth = self.striped_truth()
        values = np.zeros((8, 8), np.float32)
        values[:, 3:5] = 1.0  # exactly the two edge columns
        contrast = boundary_interior_contrast(UncertaintyMap(values=values), truth, band_px=1)
        assert contrast.boundary_mean > contrast.interior_mean

    def test_band_width_semantics(self):
        truth = self.striped_truth(size=16)  # edge pixels in columns 7 and 8
        values = np.zeros((16, 16), np.float32)
        values[:, 4] = 1.0  # Chebyshev distance 3 from the edge column 7
        c1 = boundary_interior_contrast(UncertaintyMap(values=values), truth, band_px=1)
        assert c1.interior_mean > 0  # column 4 still counts as interior
        c3 = boundary_interior_contrast(UncertaintyMap(values=values), truth, band_px=3)
        assert c3.interior_mean == 0.0  # band 3 absorbs column 4

    def test_single_class_raises(self):
        truth = ZoneMask(labels=np.zeros((4, 4), np.uint8), combo=ZoneCombo.CZ_PZ)
        umap = UncertaintyMap(values=np.zeros((4, 4), np.float32))
        with pytest.raises(NoBoundary):
            boundary_interior_contrast(umap, truth)
