"""Semi-nonnegative matrix factorization of per-class acoustic features.

Factorizes a feature matrix X (d x n, columns = frames) as X ~ M @ W.T
where the basis M (d x k) is unconstrained and the weight matrix W
(n x k) is elementwise nonnegative. The basis is the exact least-squares
solution for fixed W; W follows a multiplicative square-root update built
from the positive and negative parts of X.T @ M and M.T @ M, which keeps
it nonnegative and never increases the squared Frobenius objective.

Module functions work in the d x n orientation above. The SemiNMF
estimator wraps them behind the scikit-learn convention of samples (here:
frames) as rows.
"""

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._kmeans import kmeans
from ._validation import as_matrix, check_fitted, check_nonnegative

INIT_WEIGHT_OFFSET = 0.2
INFER_INIT_VALUE = 0.5


@dataclass(frozen=True)
class FactorizationOptions:
    """Iteration budget and numerical stabilizers for the alternating updates.

    infer_max_iters caps weight inference with a fixed basis, which needs
    fewer sweeps than learning; inference_options() materializes that cap.
    """

    max_iters: int = 200
    rel_tolerance: float = 1e-5
    epsilon: float = 1e-9
    seed: int = 0
    infer_max_iters: int = 100

    def validate(self):
        if self.max_iters < 1 or self.infer_max_iters < 1:
            raise ValueError("iteration limits must be at least 1")
        if self.rel_tolerance <= 0:
            raise ValueError("rel_tolerance must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def inference_options(self):
        return replace(self, max_iters=self.infer_max_iters)


def pos_neg_parts(Z):
    """Split Z into nonnegative matrices (Zplus, Zminus) with Z = Zplus - Zminus."""
    Z = np.asarray(Z, dtype=np.float64)
    absolute = np.abs(Z)
    return (absolute + Z) / 2.0, (absolute - Z) / 2.0


def objective(X, M, W):
    """Squared Frobenius norm of the residual X - M @ W.T."""
    X, M, W = (np.asarray(a, dtype=np.float64) for a in (X, M, W))
    if M.shape[0] != X.shape[0] or W.shape[0] != X.shape[1] or M.shape[1] != W.shape[1]:
        raise ValueError(
            f"incompatible shapes X {X.shape}, M {M.shape}, W {W.shape}"
        )
    residual = X - M @ W.T
    return float(np.sum(residual * residual))


def update_basis(X, W, eps=1e-9):
    """Least-squares basis for fixed weights: X @ W @ (W.T @ W + eps*I)^-1."""
    X = as_matrix(X, "X")
    W = check_nonnegative(as_matrix(W, "W"), "W")
    k = W.shape[1]
    gram = W.T @ W + eps * np.eye(k)
    try:
        return np.linalg.solve(gram, (X @ W).T).T
    except np.linalg.LinAlgError:
        raise ValueError("rank-deficient weights: W.T @ W is singular") from None


def update_weights(X, M, W, eps=1e-9):
    """One multiplicative weight update with the basis fixed.

    W_rs <- W_rs * sqrt(( (X.T M)+ + [W (M.T M)-] )_rs
                        / ( (X.T M)- + [W (M.T M)+] )_rs)

    The denominator is floored at eps (rather than shifted by it) so that
    exact factorizations are true fixed points while zero denominators
    still cannot produce NaN. Zero entries stay zero; output is
    elementwise nonnegative.
    """
    X = as_matrix(X, "X")
    M = as_matrix(M, "M")
    W = check_nonnegative(as_matrix(W, "W"), "W")
    if M.shape[0] != X.shape[0] or W.shape[0] != X.shape[1] or M.shape[1] != W.shape[1]:
        raise ValueError(
            f"incompatible shapes X {X.shape}, M {M.shape}, W {W.shape}"
        )
    xtm_pos, xtm_neg = pos_neg_parts(X.T @ M)
    mtm_pos, mtm_neg = pos_neg_parts(M.T @ M)
    numerator = xtm_pos + W @ mtm_neg
    denominator = np.maximum(xtm_neg + W @ mtm_pos, eps)
    return W * np.sqrt(numerator / denominator)


def init_factors(X, k, seed=0):
    """K-means initialization of the factors.

    Cluster the columns of X into k groups (seeded, at most 20 Lloyd
    iterations); the cluster centers become the basis columns and the
    weights are the cluster-indicator matrix plus a constant 0.2 so the
    multiplicative update can move every entry.
    """
    X = as_matrix(X, "X")
    d, n = X.shape
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > min(d, n):
        raise ValueError(f"k={k} exceeds min(d, n) = {min(d, n)}")
    centers, labels = kmeans(X.T, k, np.random.default_rng(seed))
    W = np.full((n, k), INIT_WEIGHT_OFFSET)
    W[np.arange(n), labels] += 1.0
    return centers.T, W


def learn_basis(X, k, opts=FactorizationOptions()):
    """Learn a basis for pooled class features by alternating updates.

    Alternates update_basis and update_weights until the relative objective
    decrease falls below opts.rel_tolerance or opts.max_iters sweeps have
    run. Returns (M, trace) where trace holds the objective value at
    initialization and after every sweep.
    """
    opts.validate()
    M, W = init_factors(X, k, opts.seed)
    trace = [objective(X, M, W)]
    for _ in range(opts.max_iters):
        M = update_basis(X, W, opts.epsilon)
        W = update_weights(X, M, W, opts.epsilon)
        trace.append(objective(X, M, W))
        previous, current = trace[-2], trace[-1]
        if previous - current < opts.rel_tolerance * max(previous, 1e-300):
            break
    return M, trace


def infer_weights(X, M, opts=FactorizationOptions()):
    """Composition weights of a recording against a fixed basis.

    Starts from a constant strictly positive matrix and iterates
    update_weights to the options' tolerance and iteration budget.
    """
    opts.validate()
    X = as_matrix(X, "X")
    M = as_matrix(M, "M")
    if M.shape[0] != X.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but basis has {M.shape[0]}")
    W = np.full((X.shape[1], M.shape[1]), INFER_INIT_VALUE)
    previous = objective(X, M, W)
    for _ in range(opts.max_iters):
        W = update_weights(X, M, W, opts.epsilon)
        current = objective(X, M, W)
        if previous - current < opts.rel_tolerance * max(previous, 1e-300):
            break
        previous = current
    return W


class SemiNMF(BaseEstimator, TransformerMixin):
    """Semi-NMF with the scikit-learn estimator interface.

    Follows the sklearn orientation: X is (n_samples, n_features), i.e.
    frames as rows, the transpose of the module-level functions. After
    fitting, components_ is (n_components, n_features) and transform
    returns nonnegative weights of shape (n_samples, n_components).

    Parameters mirror FactorizationOptions; random_state seeds the
    k-means initialization.
    """

    def __init__(self, n_components=20, max_iter=200, tol=1e-5, eps=1e-9,
                 infer_max_iter=100, random_state=0):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.eps = eps
        self.infer_max_iter = infer_max_iter
        self.random_state = random_state

    def _options(self):
        return FactorizationOptions(
            max_iters=self.max_iter,
            rel_tolerance=self.tol,
            epsilon=self.eps,
            seed=self.random_state,
            infer_max_iters=self.infer_max_iter,
        )

    def fit(self, X, y=None):
        X = as_matrix(X, "X")
        M, trace = learn_basis(X.T, self.n_components, self._options())
        self.components_ = M.T
        self.objective_trace_ = trace
        self.reconstruction_err_ = trace[-1]
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_fitted(self, "components_")
        X = as_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        opts = self._options().inference_options()
        return infer_weights(X.T, self.components_.T, opts)
