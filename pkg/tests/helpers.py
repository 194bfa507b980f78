"""Shared test utilities: silhouette builders and brute-force oracles."""

import numpy as np

from hier_reid.silhouette import NormalizedSilhouette


def solid_silhouette(color, h=162, w=64, mask=None, source_id="", frame_index=0):
    """Silhouette filled with one RGB color over the given (default: full) mask."""
    pixels = np.zeros((h, w, 3), dtype=np.float64)
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    mask = mask.astype(bool)
    pixels[mask] = np.asarray(color, dtype=np.float64)
    return NormalizedSilhouette(pixels=pixels, mask=mask, source_id=source_id,
                                frame_index=frame_index)


def random_silhouette(rng, h=162, w=64, fg_prob=0.7, source_id=""):
    """Random-valued silhouette with a random (nonempty) foreground mask."""
    mask = rng.random((h, w)) < fg_prob
    if not mask.any():
        mask[h // 2, w // 2] = True
    pixels = rng.random((h, w, 3))
    pixels[~mask] = 0.0
    return NormalizedSilhouette(pixels=pixels, mask=mask, source_id=source_id)


def brute_force_assignment_error(X, centers, assignment_indices):
    """Plain-python termwise sum of squared distances to assigned centers."""
    total = 0.0
    for i in range(X.shape[0]):
        c = centers[assignment_indices[i]]
        s = 0.0
        for d in range(X.shape[1]):
            diff = X[i, d] - c[d]
            s += diff * diff
        total += s
    return total


def total_variance_about_mean(X):
    """Sum over rows of squared distance to the column-wise mean."""
    mean = [sum(X[i, d] for i in range(X.shape[0])) / X.shape[0]
            for d in range(X.shape[1])]
    total = 0.0
    for i in range(X.shape[0]):
        for d in range(X.shape[1]):
            diff = X[i, d] - mean[d]
            total += diff * diff
    return total


def best_two_partition_error(X):
    """Exhaustive best sum-of-squared-error over every 2-partition of rows.

    Returns (error, frozenset of row indices in one group). Only usable for a
    handful of points.
    """
    n = X.shape[0]
    best = None
    best_group = None
    for bits in range(1, 2 ** (n - 1)):  # point 0 stays in group A, halving the space
        group_a = [i for i in range(n) if ((bits >> i) & 1) == 0]
        group_b = [i for i in range(n) if ((bits >> i) & 1) == 1]
        if not group_a or not group_b:
            continue
        err = 0.0
        for group in (group_a, group_b):
            center = X[group].mean(axis=0)
            err += float(((X[group] - center) ** 2).sum())
        if best is None or err < best:
            best = err
            best_group = frozenset(group_a)
    return best, best_group
