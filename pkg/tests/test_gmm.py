import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from audiogeotag.gmm import DiagonalGMM, EmOptions, fit_gmm


def two_clusters(n_per=1000, separation=10.0, sigma=1.0, d=3, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, sigma, size=(n_per, d))
    b = rng.normal(separation, sigma, size=(n_per, d))
    return np.vstack([a, b])


class TestFit:
    def test_two_cluster_recovery(self):
        data = two_clusters(seed=3)
        model = DiagonalGMM(n_components=2, random_state=1).fit(data)
        means = model.means_[np.argsort(model.means_[:, 0])]
        assert np.max(np.abs(means[0] - 0.0)) < 0.1
        assert np.max(np.abs(means[1] - 10.0)) < 0.1

    def test_single_component_closed_form(self):
        rng = np.random.default_rng(2)
        data = rng.normal(3.0, 2.0, size=(200, 4))
        model = DiagonalGMM(n_components=1, random_state=0).fit(data)
        assert model.weights_[0] == 1.0
        assert np.allclose(model.means_[0], data.mean(axis=0), atol=1e-9)
        expected_var = np.maximum(data.var(axis=0), model.variance_floor)
        assert np.allclose(model.variances_[0], expected_var, atol=1e-9)

    def test_same_seed_identical(self):
        data = two_clusters(n_per=100, seed=3)
        a = DiagonalGMM(n_components=3, random_state=7).fit(data)
        b = DiagonalGMM(n_components=3, random_state=7).fit(data)
        assert np.array_equal(a.weights_, b.weights_)
        assert np.array_equal(a.means_, b.means_)
        assert np.array_equal(a.variances_, b.variances_)

    def test_log_likelihood_non_decreasing(self):
        for seed in range(6):
            rng = np.random.default_rng(seed)
            data = rng.normal(size=(150, 3)) * rng.uniform(0.5, 2.0, size=3)
            model = DiagonalGMM(n_components=3, random_state=seed, tol=1e-12).fit(data)
            trace = model.log_likelihood_trace_
            for prev, cur in zip(trace, trace[1:]):
                assert cur >= prev - 1e-8 * abs(prev)

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least"):
            DiagonalGMM(n_components=5).fit(np.zeros((3, 2)) + np.arange(2))

    def test_variance_floor_on_degenerate_dimension(self):
        rng = np.random.default_rng(4)
        data = np.column_stack([rng.normal(size=100), np.full(100, 2.5)])
        model = DiagonalGMM(n_components=2, random_state=0).fit(data)
        assert np.all(model.variances_ >= model.variance_floor)

    def test_from_options(self):
        opts = EmOptions(max_iters=7, rel_tolerance=1e-3, variance_floor=1e-2, seed=9)
        model = DiagonalGMM.from_options(4, opts)
        assert model.max_iter == 7 and model.tol == 1e-3
        assert model.variance_floor == 1e-2 and model.random_state == 9
        with pytest.raises(ValueError):
            EmOptions(max_iters=0).validate()


class TestPosteriors:
    def test_point_at_far_mean(self):
        model = DiagonalGMM(n_components=2)._set_model(
            weights=[0.5, 0.5],
            means=[[0.0, 0.0], [30.0, 30.0]],
            variances=[[1.0, 1.0], [1.0, 1.0]],
        )
        probs = model.predict_proba(np.array([[0.0, 0.0]]))
        assert probs[0, 0] > 0.999

    def test_single_component_posterior_is_one(self):
        model = DiagonalGMM(n_components=1)._set_model(
            weights=[1.0], means=[[1.0, 2.0]], variances=[[1.0, 1.0]]
        )
        probs = model.predict_proba(np.random.default_rng(0).normal(size=(10, 2)))
        assert np.all(probs == 1.0)

    def test_symmetric_midpoint(self):
        model = DiagonalGMM(n_components=2)._set_model(
            weights=[0.5, 0.5], means=[[-1.0], [1.0]], variances=[[1.0], [1.0]]
        )
        probs = model.predict_proba(np.array([[0.0]]))
        assert abs(probs[0, 0] - 0.5) < 1e-9
        assert abs(probs[0, 1] - 0.5) < 1e-9

    def test_dimension_mismatch(self):
        model = DiagonalGMM(n_components=1)._set_model(
            weights=[1.0], means=[[0.0, 0.0]], variances=[[1.0, 1.0]]
        )
        with pytest.raises(ValueError, match="dimensions"):
            model.predict_proba(np.zeros((3, 5)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 5))
    def test_rows_sum_to_one(self, seed, g):
        rng = np.random.default_rng(seed)
        model = DiagonalGMM(n_components=g)._set_model(
            weights=rng.dirichlet(np.ones(g)),
            means=rng.normal(scale=5, size=(g, 3)),
            variances=rng.uniform(0.1, 2.0, size=(g, 3)),
        )
        probs = model.predict_proba(rng.normal(scale=10, size=(20, 3)))
        assert np.max(np.abs(probs.sum(axis=1) - 1.0)) <= 1e-9
        assert np.all(probs >= 0)


class TestLogLikelihood:
    def test_standard_normal_at_mean(self):
        model = DiagonalGMM(n_components=1)._set_model(
            weights=[1.0], means=[[0.0]], variances=[[1.0]]
        )
        value = model.log_likelihood(np.array([[0.0]]))
        assert abs(value - math.log(1.0 / math.sqrt(2 * math.pi))) < 1e-12

    def test_duplicating_data_doubles_value(self):
        rng = np.random.default_rng(5)
        data = rng.normal(size=(37, 2))
        model = DiagonalGMM(n_components=2, random_state=0).fit(data)
        single = model.log_likelihood(data)
        double = model.log_likelihood(np.vstack([data, data]))
        assert abs(double - 2.0 * single) < 1e-12 * abs(single)

    def test_matches_naive_density_oracle(self):
        rng = np.random.default_rng(6)
        g, d = 3, 2
        weights = rng.dirichlet(np.ones(g))
        means = rng.normal(size=(g, d))
        variances = rng.uniform(0.5, 1.5, size=(g, d))
        model = DiagonalGMM(n_components=g)._set_model(weights, means, variances)
        points = rng.normal(size=(15, d))

        def density(x):
            total = 0.0
            for j in range(g):
                quad = np.sum((x - means[j]) ** 2 / variances[j])
                norm = np.prod(np.sqrt(2 * np.pi * variances[j]))
                total += weights[j] * math.exp(-0.5 * quad) / norm
            return total

        brute = sum(math.log(density(x)) for x in points)
        assert abs(model.log_likelihood(points) - brute) < 1e-9


class TestMapAdaptMeans:
    def test_unreached_component_keeps_prior_mean(self):
        model = DiagonalGMM(n_components=2)._set_model(
            weights=[0.5, 0.5],
            means=[[0.0], [2000.0]],  # far enough that posteriors underflow
            variances=[[1.0], [1.0]],
        )
        data = np.random.default_rng(7).normal(0.0, 1.0, size=(50, 1))
        adapted = model.adapt_means(data, relevance=16.0)
        assert adapted.means_[1, 0] == 2000.0

    def test_small_relevance_limit(self):
        rng = np.random.default_rng(8)
        data = rng.normal(5.0, 1.0, size=(500, 2))
        model = DiagonalGMM(n_components=1)._set_model(
            weights=[1.0], means=[[0.0, 0.0]], variances=[[1.0, 1.0]]
        )
        adapted = model.adapt_means(data, relevance=1e-8)
        assert np.max(np.abs(adapted.means_[0] - data.mean(axis=0))) < 1e-6

    def test_single_component_closed_form(self):
        rng = np.random.default_rng(9)
        data = rng.normal(3.0, 1.0, size=(20, 2))
        mu = np.array([[1.0, -1.0]])
        model = DiagonalGMM(n_components=1)._set_model(
            weights=[1.0], means=mu, variances=[[1.0, 1.0]]
        )
        r = 16.0
        adapted = model.adapt_means(data, relevance=r)
        n = data.shape[0]
        expected = (n * data.mean(axis=0) + r * mu[0]) / (n + r)
        assert np.allclose(adapted.means_[0], expected, rtol=1e-12)

    def test_adaptation_is_interpolation(self):
        rng = np.random.default_rng(10)
        data = two_clusters(n_per=80, separation=4.0, seed=11)
        model = DiagonalGMM(n_components=2, random_state=1).fit(data)
        adapted = model.adapt_means(data + 0.5, relevance=8.0)
        resp = model.predict_proba(data + 0.5)
        data_mean = (resp.T @ (data + 0.5)) / resp.sum(axis=0)[:, np.newaxis]
        lo = np.minimum(model.means_, data_mean) - 1e-9
        hi = np.maximum(model.means_, data_mean) + 1e-9
        assert np.all(adapted.means_ >= lo) and np.all(adapted.means_ <= hi)

    def test_weights_and_variances_unchanged(self):
        data = two_clusters(n_per=50, seed=12)
        model = DiagonalGMM(n_components=2, random_state=2).fit(data)
        adapted = model.adapt_means(data, relevance=16.0)
        assert np.array_equal(adapted.weights_, model.weights_)
        assert np.array_equal(adapted.variances_, model.variances_)

    def test_rejects_nonpositive_relevance(self):
        model = DiagonalGMM(n_components=1)._set_model([1.0], [[0.0]], [[1.0]])
        with pytest.raises(ValueError, match="relevance"):
            model.adapt_means(np.zeros((3, 1)), relevance=0.0)


def test_fit_gmm_wrapper():
    data = two_clusters(n_per=60, seed=13)
    model = fit_gmm(data, 2, EmOptions(seed=3))
    assert model.means_.shape == (2, 3)
    assert abs(model.weights_.sum() - 1.0) < 1e-9
