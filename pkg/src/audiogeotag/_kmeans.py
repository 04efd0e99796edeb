"""Seeded Lloyd k-means used to initialize factorizations and mixture models."""

import numpy as np


def kmeans(points, k, rng, max_iters=20):
    """Cluster rows of `points` into k groups.

    Initial centers are a uniform seeded sample of k distinct rows; empty
    clusters keep their previous center. Returns (centers, labels) with
    centers of shape (k, d).
    """
    points = np.asarray(points, dtype=np.float64)
    distinct = np.unique(points, axis=0)
    if distinct.shape[0] < k:
        raise ValueError(
            f"need at least {k} distinct points, got {distinct.shape[0]}"
        )
    centers = distinct[rng.choice(distinct.shape[0], size=k, replace=False)]

    labels = np.zeros(points.shape[0], dtype=np.intp)
    for _ in range(max_iters):
        d2 = ((points[:, np.newaxis, :] - centers[np.newaxis, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for j in range(k):
            mask = new_labels == j
            if np.any(mask):
                new_centers[j] = points[mask].mean(axis=0)
        converged = np.array_equal(new_labels, labels) and np.allclose(
            new_centers, centers, rtol=0.0, atol=0.0
        )
        labels, centers = new_labels, new_centers
        if converged:
            break
    return centers, labels
