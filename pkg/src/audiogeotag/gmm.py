"""Diagonal-covariance Gaussian mixture models.

Used in three places: per-class mixtures over semi-NMF weight vectors,
the background model for bag-of-audio-words histograms, and mean-only MAP
adaptation for supervector features. EM is k-means initialized and fully
deterministic given the seed; variances are floored after every M-step.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._kmeans import kmeans
from ._validation import as_matrix, check_fitted

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class EmOptions:
    max_iters: int = 100
    rel_tolerance: float = 1e-5
    variance_floor: float = 1e-4
    seed: int = 0

    def validate(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.rel_tolerance <= 0 or self.variance_floor <= 0:
            raise ValueError("rel_tolerance and variance_floor must be positive")


class DiagonalGMM(BaseEstimator):
    """Gaussian mixture with diagonal covariances, trained by EM.

    Fitted attributes: weights_ (G,), means_ (G, D), variances_ (G, D),
    log_likelihood_trace_ (one total log-likelihood per EM iteration).
    """

    def __init__(self, n_components=1, max_iter=100, tol=1e-5,
                 variance_floor=1e-4, random_state=0):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.variance_floor = variance_floor
        self.random_state = random_state

    @classmethod
    def from_options(cls, n_components, opts=EmOptions()):
        opts.validate()
        return cls(
            n_components=n_components,
            max_iter=opts.max_iters,
            tol=opts.rel_tolerance,
            variance_floor=opts.variance_floor,
            random_state=opts.seed,
        )

    def _set_model(self, weights, means, variances):
        self.weights_ = np.asarray(weights, dtype=np.float64)
        self.means_ = np.asarray(means, dtype=np.float64)
        self.variances_ = np.maximum(
            np.asarray(variances, dtype=np.float64), self.variance_floor
        )
        self.n_features_in_ = self.means_.shape[1]
        return self

    def _log_weighted_densities(self, X):
        """Matrix of log(lambda_g * N(x_t; mu_g, Sigma_g)), shape (n, G)."""
        check_fitted(self, "means_")
        X = as_matrix(X, "vectors")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"vectors have {X.shape[1]} dimensions, model has "
                f"{self.n_features_in_}"
            )
        inv_var = 1.0 / self.variances_
        quad = (
            (X * X) @ inv_var.T
            - 2.0 * X @ (self.means_ * inv_var).T
            + np.sum(self.means_ ** 2 * inv_var, axis=1)
        )
        log_det = np.sum(np.log(self.variances_), axis=1)
        log_density = -0.5 * (X.shape[1] * LOG_2PI + log_det + quad)
        with np.errstate(divide="ignore"):
            log_weights = np.where(
                self.weights_ > 0.0, np.log(np.maximum(self.weights_, 1e-300)), -np.inf
            )
        return log_density + log_weights

    def fit(self, X, y=None):
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        X = as_matrix(X, "data")
        n, d = X.shape
        if n < self.n_components:
            raise ValueError(
                f"need at least {self.n_components} points, got {n}"
            )

        centers, labels = kmeans(
            X, self.n_components, np.random.default_rng(self.random_state)
        )
        counts = np.bincount(labels, minlength=self.n_components).astype(np.float64)
        global_var = np.maximum(X.var(axis=0), self.variance_floor)
        means = centers.copy()
        variances = np.tile(global_var, (self.n_components, 1))
        for g in range(self.n_components):
            mask = labels == g
            if np.any(mask):
                variances[g] = X[mask].var(axis=0)
            else:
                counts[g] = 1.0  # empty cluster keeps its center, gets token mass
        weights = counts / counts.sum()
        self._set_model(weights, means, variances)

        trace = []
        for _ in range(self.max_iter):
            log_joint = self._log_weighted_densities(X)
            row_max = np.max(log_joint, axis=1, keepdims=True)
            log_norm = row_max + np.log(
                np.sum(np.exp(log_joint - row_max), axis=1, keepdims=True)
            )
            trace.append(float(np.sum(log_norm)))
            resp = np.exp(log_joint - log_norm)

            mass = resp.sum(axis=0)
            safe_mass = np.maximum(mass, 1e-300)
            weights = mass / n
            means = (resp.T @ X) / safe_mass[:, np.newaxis]
            second = (resp.T @ (X * X)) / safe_mass[:, np.newaxis]
            variances = second - means ** 2
            self._set_model(weights, means, variances)

            if len(trace) >= 2:
                previous, current = trace[-2], trace[-1]
                if current - previous < self.tol * max(abs(previous), 1e-300):
                    break
        self.log_likelihood_trace_ = trace
        return self

    def predict_proba(self, X):
        """Posterior responsibilities Pr(g | x_t); rows sum to 1."""
        log_joint = self._log_weighted_densities(X)
        row_max = np.max(log_joint, axis=1, keepdims=True)
        shifted = np.exp(log_joint - row_max)
        return shifted / shifted.sum(axis=1, keepdims=True)

    def score_samples(self, X):
        """Per-point log density log sum_g lambda_g N(x; mu_g, Sigma_g)."""
        log_joint = self._log_weighted_densities(X)
        row_max = np.max(log_joint, axis=1, keepdims=True)
        return (row_max + np.log(
            np.sum(np.exp(log_joint - row_max), axis=1, keepdims=True)
        ))[:, 0]

    def log_likelihood(self, X):
        """Total log-likelihood of the points under the mixture."""
        return float(np.sum(self.score_samples(X)))

    def adapt_means(self, X, relevance=16.0):
        """Mean-only MAP adaptation toward the data; weights and variances kept.

        mu'_g = (n_g * E_g + relevance * mu_g) / (n_g + relevance) with
        n_g the posterior mass of component g and E_g the posterior-weighted
        data mean. Components that attract no mass keep their prior mean.
        """
        if relevance <= 0:
            raise ValueError("relevance must be positive")
        X = as_matrix(X, "vectors")
        resp = self.predict_proba(X)
        mass = resp.sum(axis=0)
        weighted_mean = (resp.T @ X) / np.maximum(mass, 1e-300)[:, np.newaxis]
        adapted = (
            mass[:, np.newaxis] * weighted_mean + relevance * self.means_
        ) / (mass + relevance)[:, np.newaxis]
        model = DiagonalGMM(**self.get_params())
        return model._set_model(self.weights_.copy(), adapted, self.variances_.copy())


def fit_gmm(data, n_components, opts=EmOptions()):
    """Convenience wrapper: EM-fit a DiagonalGMM on row vectors."""
    return DiagonalGMM.from_options(n_components, opts).fit(data)
