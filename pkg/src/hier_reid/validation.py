"""Input validation helpers shared by the estimator-style classes."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatchError, NotFittedError


def check_array_2d(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"{name} must be a 2-D array with at least one row, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_rgb_pixels(pixels, name: str = "pixels") -> np.ndarray:
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"{name} must be HxWx3, got shape {pixels.shape}")
    if pixels.shape[0] < 3 or pixels.shape[1] < 1:
        raise ValueError(f"{name} must be at least 3 rows by 1 column, got {pixels.shape[:2]}")
    return pixels


def check_mask(mask, shape_hw: tuple[int, int], name: str = "mask") -> np.ndarray:
    mask = np.asarray(mask)
    if mask.shape != tuple(shape_hw):
        raise DimensionMismatchError(
            f"{name} shape {mask.shape} does not match frame shape {tuple(shape_hw)}"
        )
    return (mask != 0)


def check_same_dims(silhouettes, name: str = "sequence") -> None:
    shapes = {s.pixels.shape for s in silhouettes}
    if len(shapes) > 1:
        raise DimensionMismatchError(f"{name} mixes silhouette shapes: {sorted(map(str, shapes))}")


def check_is_fitted(estimator, attr: str) -> None:
    if getattr(estimator, attr, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} instance is not fitted yet; call fit() first"
        )
