"""Binary kernel SVM on precomputed kernels.

The dual problem is solved by sequential pairwise optimization (SMO-style
working sets) directly on the Gram matrix, so fused chi-squared kernels
plug in without any feature-space representation. One-vs-rest models per
city are trained through train_svm; the slack parameter comes from
stratified cross-validation on the training kernel.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_fitted, check_square_symmetric
from .evaluate import average_precision
from .kernels import KernelMatrix

SUPPORT_EPS = 1e-12


def _as_labels(y, n=None):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("labels must be 1-D")
    if n is not None and y.size != n:
        raise ValueError(f"expected {n} labels, got {y.size}")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if np.all(y == y[0]):
        raise ValueError("labels contain a single class")
    return y


class KernelSVM(BaseEstimator):
    """C-SVM trained by pairwise dual ascent on a precomputed kernel.

    fit consumes the square training Gram matrix; decision_function
    consumes rectangular (n_eval, n_train) kernel blocks. After fitting,
    alpha_ holds the dual variables, dual_coef_ = alpha_ * y, support_
    the indices with alpha above 1e-12, and intercept_ the bias computed
    from free support vectors (margin midpoint if none are free).
    """

    def __init__(self, C=1.0, tol=1e-4, max_sweeps=10000, step_eps=1e-12):
        self.C = C
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.step_eps = step_eps

    def fit(self, K, y):
        if isinstance(K, KernelMatrix):
            K = K.values
        K = check_square_symmetric(K, "K")
        y = _as_labels(y, K.shape[0])
        if self.C <= 0:
            raise ValueError("C must be positive")

        n = y.size
        C = float(self.C)
        alpha = np.zeros(n)
        bias = 0.0
        # E_i = f(x_i) - y_i; with alpha = 0 and bias = 0, f = 0.
        errors = -y.copy()

        def take_step(i1, i2):
            nonlocal bias, errors
            if i1 == i2:
                return False
            a1, a2 = alpha[i1], alpha[i2]
            y1, y2 = y[i1], y[i2]
            s = y1 * y2
            if s > 0:
                low, high = max(0.0, a1 + a2 - C), min(C, a1 + a2)
            else:
                low, high = max(0.0, a2 - a1), min(C, C + a2 - a1)
            if low >= high:
                return False
            eta = K[i1, i1] + K[i2, i2] - 2.0 * K[i1, i2]
            if eta <= 0.0:
                return False  # flat or concave direction; pick another pair
            a2_new = a2 + y2 * (errors[i1] - errors[i2]) / eta
            a2_new = min(high, max(low, a2_new))
            if abs(a2_new - a2) < self.step_eps * C:
                return False
            a1_new = a1 + s * (a2 - a2_new)

            delta_f = y1 * (a1_new - a1) * K[:, i1] + y2 * (a2_new - a2) * K[:, i2]
            if 0.0 < a1_new < C:
                delta_b = -errors[i1] - delta_f[i1]
            elif 0.0 < a2_new < C:
                delta_b = -errors[i2] - delta_f[i2]
            else:
                delta_b = -0.5 * (
                    errors[i1] + delta_f[i1] + errors[i2] + delta_f[i2]
                )
            alpha[i1], alpha[i2] = a1_new, a2_new
            errors += delta_f + delta_b
            bias += delta_b
            return True

        def examine(i2):
            r2 = errors[i2] * y[i2]  # = y_i f(x_i) - 1
            if not ((r2 < -self.tol and alpha[i2] < C)
                    or (r2 > self.tol and alpha[i2] > 0.0)):
                return False
            free = np.flatnonzero((alpha > 0.0) & (alpha < C))
            if free.size > 1:
                i1 = free[np.argmax(np.abs(errors[free] - errors[i2]))]
                if take_step(i1, i2):
                    return True
            for i1 in free:
                if take_step(i1, i2):
                    return True
            for i1 in range(n):
                if take_step(i1, i2):
                    return True
            return False

        examine_all = True
        changed = 0
        for _ in range(self.max_sweeps):
            changed = 0
            targets = range(n) if examine_all else np.flatnonzero(
                (alpha > 0.0) & (alpha < C)
            )
            for i2 in targets:
                changed += examine(i2)
            if examine_all:
                if changed == 0:
                    break
                examine_all = False
            elif changed == 0:
                examine_all = True

        gradient = K @ (alpha * y)  # decision values without bias
        self.intercept_ = self._recompute_bias(alpha, y, gradient, C)
        self.alpha_ = alpha
        self.dual_coef_ = alpha * y
        self.support_ = np.flatnonzero(alpha > SUPPORT_EPS)
        self.classes_ = np.array([-1.0, 1.0])
        self.n_samples_fit_ = n
        return self

    @staticmethod
    def _recompute_bias(alpha, y, gradient, C):
        """Bias from free support vectors; margin midpoint when none are free."""
        targets = y - gradient
        lo_frac, hi_frac = 1e-8 * C, (1.0 - 1e-8) * C
        free = (alpha > lo_frac) & (alpha < hi_frac)
        if np.any(free):
            return float(np.mean(targets[free]))
        at_zero = alpha <= lo_frac
        at_c = alpha >= hi_frac
        lower = targets[(at_zero & (y > 0)) | (at_c & (y < 0))]
        upper = targets[(at_zero & (y < 0)) | (at_c & (y > 0))]
        if lower.size and upper.size:
            return float((lower.max() + upper.min()) / 2.0)
        if lower.size:
            return float(lower.max())
        if upper.size:
            return float(upper.min())
        return 0.0

    def decision_function(self, K):
        """Scores for rows of a rectangular (n_eval, n_train) kernel block."""
        check_fitted(self, "dual_coef_")
        if isinstance(K, KernelMatrix):
            K = K.values
        K = np.asarray(K, dtype=np.float64)
        if K.ndim != 2 or K.shape[1] != self.n_samples_fit_:
            raise ValueError(
                f"kernel block must have {self.n_samples_fit_} columns, "
                f"got shape {K.shape}"
            )
        sv = self.support_
        return K[:, sv] @ self.dual_coef_[sv] + self.intercept_

    def predict(self, K):
        return np.where(self.decision_function(K) >= 0.0, 1.0, -1.0)


def dual_objective(K, y, alpha):
    """Value of the SVM dual: sum alpha - 0.5 * alpha' (yy' * K) alpha."""
    K = check_square_symmetric(K, "K")
    y = _as_labels(y, K.shape[0])
    alpha = np.asarray(alpha, dtype=np.float64)
    coef = alpha * y
    return float(alpha.sum() - 0.5 * coef @ K @ coef)


@dataclass
class SvmModel:
    """Persistable trained model: support vectors by recording identifier."""

    support_ids: tuple
    dual_coeffs: np.ndarray
    bias: float
    C: float
    kernel_ref: str = ""

    def __post_init__(self):
        self.support_ids = tuple(str(i) for i in self.support_ids)
        self.dual_coeffs = np.asarray(self.dual_coeffs, dtype=np.float64)
        if self.dual_coeffs.shape != (len(self.support_ids),):
            raise ValueError("one dual coefficient per support id required")


def train_svm(K, labels, C, kernel_ref="", tol=1e-4):
    """Train a binary SVM on a square KernelMatrix; returns an SvmModel."""
    if not isinstance(K, KernelMatrix):
        raise ValueError("train_svm expects a KernelMatrix")
    if not K.is_square:
        raise ValueError("training kernel must be square")
    est = KernelSVM(C=C, tol=tol).fit(K.values, labels)
    sv = est.support_
    return SvmModel(
        support_ids=tuple(K.row_ids[i] for i in sv),
        dual_coeffs=est.dual_coef_[sv],
        bias=est.intercept_,
        C=float(C),
        kernel_ref=kernel_ref,
    )


def decision_values(model, K_cross):
    """Score the rows of a cross kernel under a trained model.

    Columns are matched to the model's support vectors by identifier; a
    missing support-vector column is an error.
    """
    if not isinstance(K_cross, KernelMatrix):
        raise ValueError("decision_values expects a KernelMatrix")
    col_index = {rid: j for j, rid in enumerate(K_cross.col_ids)}
    try:
        cols = [col_index[sid] for sid in model.support_ids]
    except KeyError as missing:
        raise ValueError(f"missing support-vector column {missing}") from None
    return K_cross.values[:, cols] @ model.dual_coeffs + model.bias


@dataclass(frozen=True)
class CvConfig:
    folds: int = 5
    c_grid: tuple = (0.01, 0.1, 1.0, 10.0, 100.0)
    seed: int = 0
    selection_metric: str = "average_precision"

    def validate(self):
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if len(self.c_grid) == 0 or any(c <= 0 for c in self.c_grid):
            raise ValueError("c_grid must be non-empty and positive")
        if self.selection_metric not in ("average_precision", "accuracy"):
            raise ValueError(f"unknown selection metric {self.selection_metric!r}")


def _stratified_folds(y, folds, rng):
    """Deal shuffled per-class indices round-robin into folds."""
    assignment = np.empty(y.size, dtype=np.intp)
    for cls in (-1.0, 1.0):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        assignment[idx] = np.arange(idx.size) % folds
    return assignment

def _folds_usable(y, assignment, folds, need_positive_holdout):
    for f in range(folds):
        held = assignment == f
        train_y = y[~held]
        if np.unique(train_y).size < 2:
            return False
        if need_positive_holdout and not np.any(y[held] > 0):
            return False
    return True


def cross_validate_C(K, labels, cfg=CvConfig()):
    """Pick the slack parameter by stratified k-fold CV on the training kernel.

    Returns (best_C, fold_scores) where fold_scores maps each C in the
    grid to its per-fold scores. Ties in mean score go to the smaller C.
    Fold assignment is reseeded up to 10 times if a fold ends up missing
    a class (or, under average precision, has no positive held out).
    """
    cfg.validate()
    if isinstance(K, KernelMatrix):
        K = K.values
    K = check_square_symmetric(K, "K")
    y = _as_labels(labels, K.shape[0])
    if y.size < cfg.folds:
        raise ValueError(f"need at least {cfg.folds} samples for {cfg.folds} folds")

    need_positive = cfg.selection_metric == "average_precision"
    assignment = None
    for attempt in range(10):
        rng = np.random.default_rng(cfg.seed + attempt)
        candidate = _stratified_folds(y, cfg.folds, rng)
        if _folds_usable(y, candidate, cfg.folds, need_positive):
            assignment = candidate
            break
    if assignment is None:
        raise ValueError(
            "could not build usable stratified folds after 10 attempts"
        )

    fold_scores = {}
    for C in sorted(cfg.c_grid):
        scores = []
        for f in range(cfg.folds):
            held = assignment == f
            train_idx = np.flatnonzero(~held)
            test_idx = np.flatnonzero(held)
            est = KernelSVM(C=C).fit(K[np.ix_(train_idx, train_idx)], y[train_idx])
            values = est.decision_function(K[np.ix_(test_idx, train_idx)])
            if cfg.selection_metric == "average_precision":
                scores.append(
                    average_precision(values, y[test_idx] > 0, ids=test_idx)
                )
            else:
                scores.append(float(np.mean(np.sign(values) == np.sign(y[test_idx]))))
        fold_scores[float(C)] = scores

    best_c = None
    best_mean = -np.inf
    for C in sorted(fold_scores):
        mean_score = float(np.mean(fold_scores[C]))
        if mean_score > best_mean:
            best_mean = mean_score
            best_c = C
    return best_c, fold_scores
