import numpy as np
import pytest

from exportnet import (
    ModelParams,
    SyntheticSpec,
    generate_panel,
    make_factor_correlation,
    make_kernel_correlation,
    make_pareto_weights,
)


class TestParetoWeights:
    def test_normalized_and_positive(self):
        w = make_pareto_weights(50, rng=np.random.default_rng(0))
        assert w.shape == (50,)
        assert (w > 0).all()
        assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_deterministic_under_a_seeded_generator(self):
        a = make_pareto_weights(20, 0.9, np.random.default_rng(7))
        b = make_pareto_weights(20, 0.9, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)

    def test_validation(self):
        with pytest.raises(ValueError, match="at least 2"):
            make_pareto_weights(1)
        with pytest.raises(ValueError, match="positive"):
            make_pareto_weights(10, exponent=0.0)


class TestFactorCorrelation:
    def test_is_a_correlation_matrix(self):
        corr = make_factor_correlation(30, rng=np.random.default_rng(5))
        np.testing.assert_array_equal(np.diag(corr), np.ones(30))
        np.testing.assert_allclose(corr, corr.T, atol=0)
        assert np.linalg.eigvalsh(corr).min() > 0  # BB^T + I stays definite
        assert np.abs(corr).max() <= 1.0 + 1e-12

    def test_zero_factors_is_the_identity(self):
        np.testing.assert_array_equal(make_factor_correlation(8, factors=0), np.eye(8))

    def test_loadings_scale_controls_correlation_strength(self):
        off = ~np.eye(40, dtype=bool)
        weak = make_factor_correlation(40, 3, 0.15, np.random.default_rng(3))
        strong = make_factor_correlation(40, 3, 0.80, np.random.default_rng(3))
        assert np.abs(strong[off]).mean() > 3 * np.abs(weak[off]).mean()

    def test_negative_factor_count_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            make_factor_correlation(5, factors=-1)


class TestKernelCorrelation:
    def test_is_symmetric_with_unit_diagonal(self):
        w = make_pareto_weights(25, rng=np.random.default_rng(2))
        corr = make_kernel_correlation(w, rng=np.random.default_rng(9))
        np.testing.assert_array_equal(np.diag(corr), np.ones(25))
        np.testing.assert_allclose(corr, corr.T, atol=0)
        off = ~np.eye(25, dtype=bool)
        assert np.abs(corr[off]).max() < 1.0

    def test_similar_sized_products_correlate_more_than_distant_ones(self):
        # three decades of size; adjacent pairs are ~0.46 apart in log weight
        w = np.geomspace(1e-4, 1e-1, 16)
        w = w / w.sum()
        corr = make_kernel_correlation(w, rng=np.random.default_rng(12))
        i, j = np.indices(corr.shape)
        near = np.abs(corr[np.abs(i - j) == 1]).mean()
        far = np.abs(corr[np.abs(i - j) >= 10]).mean()
        assert near > 10 * far

    def test_mixes_both_signs(self):
        w = np.geomspace(1e-5, 1e-1, 40)
        corr = make_kernel_correlation(w / w.sum(), rng=np.random.default_rng(4))
        off = ~np.eye(40, dtype=bool)
        assert (corr[off] > 0).any() and (corr[off] < 0).any()

    def test_strength_range_validation(self):
        w = np.array([0.5, 0.3, 0.2])
        for bad in [(0.0, 0.5), (0.05, 1.0), (0.5, 0.05)]:
            with pytest.raises(ValueError, match="strength range"):
                make_kernel_correlation(w, strength=bad)


class TestGeneratePanel:
    def small_spec(self, **overrides):
        defaults = dict(
            n_products=10, n_years=6, seed=5,
            params=ModelParams(coupling=0.05, sigma=0.09, tau=0.8, mu_bar=0.04),
        )
        defaults.update(overrides)
        return SyntheticSpec(**defaults)

    def test_shape_years_and_positivity(self):
        panel, truth = generate_panel(self.small_spec())
        assert panel.values.shape == (10, 6)
        assert panel.product_ids == tuple(f"P{i:04d}" for i in range(10))
        np.testing.assert_array_equal(panel.years(), np.arange(1962, 1968))
        assert (panel.values > 0).all()
        assert truth.params.coupling == 0.05

    def test_same_seed_reproduces_the_panel(self):
        one, _ = generate_panel(self.small_spec())
        two, _ = generate_panel(self.small_spec())
        np.testing.assert_array_equal(one.values, two.values)

    def test_truth_describes_the_panel(self):
        panel, truth = generate_panel(self.small_spec())
        assert truth.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert truth.initial.sum() == pytest.approx(1e6, rel=1e-12)
        np.testing.assert_array_equal(panel.values[:, 0], truth.initial)

    def test_weight_override_is_normalized(self):
        raw = np.arange(1.0, 11.0)
        _, truth = generate_panel(self.small_spec(weights=raw))
        np.testing.assert_allclose(truth.weights, raw / raw.sum(), atol=0)

    def test_correlation_override_is_used_verbatim(self):
        corr = make_factor_correlation(10, 2, 0.5, np.random.default_rng(1))
        _, truth = generate_panel(self.small_spec(correlation=corr))
        np.testing.assert_array_equal(truth.correlation, corr)

    def test_initial_override_sets_the_first_year(self):
        first = np.geomspace(1.0, 50.0, 10)
        panel, truth = generate_panel(
            self.small_spec(initial=first, total_value=2000.0)
        )
        np.testing.assert_allclose(
            truth.initial, first * 2000.0 / first.sum(), rtol=1e-15
        )
        np.testing.assert_array_equal(panel.values[:, 0], truth.initial)
        assert panel.values[:, 0].sum() == pytest.approx(2000.0, rel=1e-12)
