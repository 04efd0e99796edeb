"""Shared input-validation helpers used across the package."""

import numpy as np


def as_matrix(a, name="array"):
    """Coerce to a 2-D float64 array with all entries finite."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def as_vector(a, name="array"):
    """Coerce to a 1-D float64 array with all entries finite."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_nonnegative(a, name="array"):
    if np.any(a < 0):
        raise ValueError(f"{name} has negative entries")
    return a


def as_histogram_stack(features, name="features"):
    """Stack a sequence of equal-length nonnegative vectors into an (N, m) array."""
    if len(features) == 0:
        raise ValueError(f"{name} is empty")
    rows = [as_vector(f, f"{name}[{i}]") for i, f in enumerate(features)]
    lengths = {r.shape[0] for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"{name} have mismatched lengths {sorted(lengths)}")
    stack = np.vstack(rows)
    check_nonnegative(stack, name)
    return stack


def check_square_symmetric(K, name="kernel", tol=1e-12):
    K = as_matrix(K, name)
    if K.shape[0] != K.shape[1]:
        raise ValueError(f"{name} must be square, got shape {K.shape}")
    if np.max(np.abs(K - K.T)) > tol:
        raise ValueError(f"{name} is not symmetric within {tol}")
    return K


def check_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise ValueError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
