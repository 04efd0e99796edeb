"""Exponential chi-squared and linear kernels, and per-class kernel fusion.

Square kernels carry the recording identifiers of their rows so that
fusion can refuse to combine kernels built over different recordings and
so SVM models can name their support vectors. Cross (test x train)
kernels reuse the training-set bandwidth gamma; recomputing gamma with
test data would leak information from the test split.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_histogram_stack, as_matrix, check_nonnegative

SYMMETRY_TOL = 1e-12


@dataclass
class KernelMatrix:
    """A Gram matrix with row/column recording identifiers.

    Square kernels have row_ids == col_ids and are validated symmetric;
    cross kernels index test recordings by row and training recordings by
    column. gamma records the bandwidth for exponential chi-squared
    kernels and is None otherwise.
    """

    values: np.ndarray
    row_ids: tuple
    col_ids: tuple = None
    gamma: float = field(default=None)

    def __post_init__(self):
        self.values = as_matrix(self.values, "kernel values")
        self.row_ids = tuple(str(i) for i in self.row_ids)
        if self.col_ids is None:
            self.col_ids = self.row_ids
        else:
            self.col_ids = tuple(str(i) for i in self.col_ids)
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValueError(
                f"kernel shape {self.values.shape} does not match "
                f"{len(self.row_ids)} row ids and {len(self.col_ids)} column ids"
            )
        if self.is_square and np.max(
            np.abs(self.values - self.values.T)
        ) > SYMMETRY_TOL:
            raise ValueError(f"square kernel not symmetric within {SYMMETRY_TOL}")

    @property
    def is_square(self):
        return self.row_ids == self.col_ids

    @property
    def shape(self):
        return self.values.shape


def chi2_distance(x, y):
    """Chi-squared histogram distance 0.5 * sum (x-y)^2 / (x+y).

    Terms with x_m + y_m = 0 are skipped. Symmetric, nonnegative, and
    zero iff x == y on the supported entries.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"histogram shapes differ: {x.shape} vs {y.shape}")
    check_nonnegative(x, "x")
    check_nonnegative(y, "y")
    total = x + y
    diff = x - y
    mask = total > 0.0
    return float(0.5 * np.sum(diff[mask] ** 2 / total[mask]))


def _chi2_matrix(A, B):
    """All-pairs chi-squared distances between rows of A and rows of B."""
    n_a = A.shape[0]
    out = np.empty((n_a, B.shape[0]))
    # Chunk rows of A to bound the (chunk, n_b, m) broadcast workspace.
    chunk = max(1, int(4e6 // max(1, B.size)))
    for start in range(0, n_a, chunk):
        a = A[start : start + chunk, np.newaxis, :]
        total = a + B[np.newaxis, :, :]
        diff = a - B[np.newaxis, :, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            terms = np.where(total > 0.0, diff * diff / np.where(total > 0, total, 1.0), 0.0)
        out[start : start + chunk] = 0.5 * terms.sum(axis=2)
    return out


def average_pairwise_gamma(features):
    """Mean chi-squared distance over all unordered pairs of features."""
    stack = as_histogram_stack(features)
    n = stack.shape[0]
    if n < 2:
        raise ValueError("need at least 2 features to average pairwise distances")
    distances = _chi2_matrix(stack, stack)
    gamma = float(distances[np.triu_indices(n, k=1)].mean())
    if gamma == 0.0:
        raise ValueError("degenerate feature set: all pairwise distances are zero")
    return gamma


def exp_chi2_kernel(features, gamma, ids=None):
    """Square exponential chi-squared kernel exp(-D/gamma); diagonal is 1."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    stack = as_histogram_stack(features)
    values = np.exp(-_chi2_matrix(stack, stack) / gamma)
    if ids is None:
        ids = [str(i) for i in range(stack.shape[0])]
    return KernelMatrix(values=values, row_ids=tuple(ids), gamma=float(gamma))


def cross_exp_chi2(train, test, gamma, train_ids=None, test_ids=None):
    """Cross kernel with entry (i, j) = exp(-D(test_i, train_j) / gamma).

    gamma is the frozen training-set bandwidth.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    train_stack = as_histogram_stack(train, "train features")
    test_stack = as_histogram_stack(test, "test features")
    if train_stack.shape[1] != test_stack.shape[1]:
        raise ValueError(
            f"train features have {train_stack.shape[1]} bins, "
            f"test features {test_stack.shape[1]}"
        )
    values = np.exp(-_chi2_matrix(test_stack, train_stack) / gamma)
    if train_ids is None:
        train_ids = [str(i) for i in range(train_stack.shape[0])]
    if test_ids is None:
        test_ids = [str(i) for i in range(test_stack.shape[0])]
    return KernelMatrix(
        values=values, row_ids=tuple(test_ids), col_ids=tuple(train_ids),
        gamma=float(gamma),
    )


def _check_fusable(kernels):
    if len(kernels) == 0:
        raise ValueError("nothing to fuse")
    first = kernels[0]
    for k in kernels[1:]:
        if k.shape != first.shape:
            raise ValueError(f"kernel shapes differ: {k.shape} vs {first.shape}")
        if k.row_ids != first.row_ids or k.col_ids != first.col_ids:
            raise ValueError("kernels cover different recordings; cannot fuse")
    return first


def fuse_average(kernels):
    """Elementwise mean of the per-class kernels: (1/L) * sum_l K_l."""
    first = _check_fusable(kernels)
    values = np.mean([k.values for k in kernels], axis=0)
    return KernelMatrix(values=values, row_ids=first.row_ids, col_ids=first.col_ids)


def fuse_product(kernels):
    """Scaled elementwise product of the per-class kernels: (1/L) * prod_l K_l.

    The 1/L factor is kept even though it only rescales the kernel; it
    matches the written fusion rule.
    """
    first = _check_fusable(kernels)
    values = kernels[0].values.copy()
    for k in kernels[1:]:
        values = values * k.values
    values /= len(kernels)
    return KernelMatrix(values=values, row_ids=first.row_ids, col_ids=first.col_ids)


def linear_kernel(features, ids=None):
    """Gram matrix of dot products between feature vectors."""
    stack = np.vstack([np.asarray(f, dtype=np.float64) for f in features])
    values = stack @ stack.T
    values = 0.5 * (values + values.T)  # enforce exact symmetry
    if ids is None:
        ids = [str(i) for i in range(stack.shape[0])]
    return KernelMatrix(values=values, row_ids=tuple(ids))


def cross_linear_kernel(train, test, train_ids=None, test_ids=None):
    """Rectangular dot-product kernel between test rows and train columns."""
    train_stack = np.vstack([np.asarray(f, dtype=np.float64) for f in train])
    test_stack = np.vstack([np.asarray(f, dtype=np.float64) for f in test])
    if train_stack.shape[1] != test_stack.shape[1]:
        raise ValueError("train and test feature lengths differ")
    if train_ids is None:
        train_ids = [str(i) for i in range(train_stack.shape[0])]
    if test_ids is None:
        test_ids = [str(i) for i in range(test_stack.shape[0])]
    return KernelMatrix(
        values=test_stack @ train_stack.T,
        row_ids=tuple(test_ids),
        col_ids=tuple(train_ids),
    )
