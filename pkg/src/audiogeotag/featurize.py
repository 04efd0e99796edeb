"""Clip-level feature vectors built from per-recording representations.

Four featurizers share one convention: every recording maps to a fixed-
length vector whose value does not depend on the recording's duration.

* h: average of row-normalized composition-weight rows (one histogram of
  length k per sound class).
* v: average mixture posterior of raw composition-weight rows under a
  per-class GMM (length G per sound class).
* boaw: the same posterior average taken over raw acoustic frames under a
  background GMM (bag of audio words baseline).
* supervector: variance-normalized stack of MAP-adapted background-GMM
  means (paired with a linear kernel downstream).
"""

import logging
import math

import numpy as np

from ._validation import as_matrix, check_nonnegative

logger = logging.getLogger(__name__)


def h_feature(W):
    """Average of row-normalized weight rows; a k-vector summing to 1.

    A row summing to zero carries no composition evidence and is replaced
    by the uniform histogram (logged, not an error). Column averages use
    exactly-rounded summation, which makes the histogram invariant to
    duplicating the recording's frames bit for bit.
    """
    W = check_nonnegative(as_matrix(W, "W"), "W")
    row_sums = W.sum(axis=1, keepdims=True)
    zero_rows = row_sums[:, 0] == 0.0
    if np.any(zero_rows):
        logger.debug(
            "h_feature: %d zero-sum weight rows replaced by uniform", zero_rows.sum()
        )
        W = W.copy()
        W[zero_rows] = 1.0
        row_sums = W.sum(axis=1, keepdims=True)
    normalized = W / row_sums
    n = W.shape[0]
    return np.array(
        [math.fsum(normalized[:, j]) / n for j in range(W.shape[1])]
    )


def v_feature(W, model):
    """Duration-normalized posterior mass of raw weight rows under a GMM.

    Rows of W are scored as-is (no row normalization); the G posterior
    columns are averaged over frames, giving a G-vector summing to 1.
    """
    W = check_nonnegative(as_matrix(W, "W"), "W")
    return model.predict_proba(W).mean(axis=0)


def boaw_feature(X, background):
    """Bag-of-audio-words histogram: posterior mass of acoustic frames.

    Columns of the feature matrix X are scored under the background GMM;
    returns a G-vector summing to 1.
    """
    X = as_matrix(X, "X")
    return background.predict_proba(X.T).mean(axis=0)


def supervector_feature(X, background, relevance=16.0):
    """Variance-normalized stack of MAP-adapted background means.

    Adapts the background means to the recording's frames, then
    concatenates sqrt(lambda_g) * Sigma_g^{-1/2} * mu'_g for g = 1..G
    (within each g, dimension order 0..D-1). Length is always G * D.
    """
    X = as_matrix(X, "X")
    adapted = background.adapt_means(X.T, relevance)
    scale = np.sqrt(adapted.weights_)[:, np.newaxis] / np.sqrt(adapted.variances_)
    return (scale * adapted.means_).ravel()
