"""Seeded k-means over color descriptors, plus the error/elbow machinery used
to pick the number of perceptually distinct color groups.

The implementation is plain Lloyd iteration with k-means++ seeding so runs are
bit-reproducible from (data, K, seed) and the per-iteration error history can
be audited. Empty clusters are re-seeded with the point farthest from its
center, which guarantees every cluster keeps at least one member.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .descriptors import FeatureMatrix
from .exceptions import (
    BadClusterIdError,
    BadKappaError,
    BadKError,
    UnassignedIdError,
)
from .validation import check_array_2d, check_is_fitted

_MODEL_MAGIC = b"REIDCLUS"
_MODEL_VERSION = 1


@dataclass
class ElbowPoint:
    k: int
    error: float


def _as_matrix(H, ids=None) -> tuple[np.ndarray, list[str]]:
    if isinstance(H, FeatureMatrix):
        return check_array_2d(H.rows, "H"), list(H.ids)
    X = check_array_2d(H, "H")
    if ids is None:
        ids = [str(i) for i in range(X.shape[0])]
    return X, list(ids)


def _sq_distances(X: np.ndarray, centers: np.ndarray, block: int = 256) -> np.ndarray:
    """Squared Euclidean distances point-to-center, chunked to bound memory."""
    n = X.shape[0]
    out = np.empty((n, centers.shape[0]), dtype=np.float64)
    for start in range(0, n, block):
        diff = X[start : start + block, None, :] - centers[None, :, :]
        out[start : start + block] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_distances(X, X[chosen[-1]][None]).ravel()
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a center; pick any unused index
            unused = [i for i in range(n) if i not in set(chosen)]
            chosen.append(unused[int(rng.integers(len(unused)))])
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
            chosen.append(idx)
        d2 = np.minimum(d2, _sq_distances(X, X[chosen[-1]][None]).ravel())
    return X[chosen].copy()


class ColorKMeans(BaseEstimator):
    """K-means index over gallery descriptors with top-k cluster queries.

    Parameters
    ----------
    n_clusters : number of color groups K
    seed : RNG seed for the k-means++ initialization
    max_iter : Lloyd iteration cap
    tol : convergence threshold on the largest per-center shift
    """

    def __init__(self, n_clusters: int = 100, seed: int = 0, max_iter: int = 300, tol: float = 1e-6):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, H, ids=None):
        X, id_list = _as_matrix(H, ids)
        n = X.shape[0]
        k = int(self.n_clusters)
        if k < 1 or k > n:
            raise BadKError(f"n_clusters={k} outside [1, {n}]")

        rng = np.random.default_rng(self.seed)
        centers = _kmeanspp_init(X, k, rng)
        labels = np.zeros(n, dtype=np.int64)
        history: list[float] = []

        for it in range(1, int(self.max_iter) + 1):
            labels = np.argmin(_sq_distances(X, centers), axis=1)
            labels = self._fill_empty(X, centers, labels, k)
            new_centers = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
            shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
            centers = new_centers
            diffs = X - centers[labels]
            history.append(float(np.einsum("nd,nd->", diffs, diffs)))
            if shift < self.tol:
                break

        # restore the nearest-center property after the final update
        labels = np.argmin(_sq_distances(X, centers), axis=1)
        labels = self._fill_empty(X, centers, labels, k)
        diffs = X - centers[labels]
        history.append(float(np.einsum("nd,nd->", diffs, diffs)))

        self.centers_ = centers
        self.labels_ = labels
        self.ids_ = id_list
        self.assignment_ = {sid: int(c) for sid, c in zip(id_list, labels)}
        self.error_ = history[-1]
        self.error_history_ = history
        self.n_iter_ = it
        return self

    @staticmethod
    def _fill_empty(X, centers, labels, k):
        """Re-seed each empty cluster with the point farthest from its center."""
        for j in range(k):
            if (labels == j).any():
                continue
            diffs = X - centers[labels]
            d2 = np.einsum("nd,nd->n", diffs, diffs)
            far = int(np.argmax(d2))
            centers[j] = X[far]
            labels = labels.copy()
            labels[far] = j
        return labels

    def predict(self, X) -> np.ndarray:
        """Nearest-center index for each row of X."""
        check_is_fitted(self, "centers_")
        X = check_array_2d(X, "X")
        return np.argmin(_sq_distances(X, self.centers_), axis=1)

    def top_k(self, query, kappa: int) -> list[int]:
        """Indices of the kappa nearest centers, ascending by squared distance.

        Ties break toward the lower cluster index.
        """
        check_is_fitted(self, "centers_")
        k = self.centers_.shape[0]
        if kappa < 1 or kappa > k:
            raise BadKappaError(f"kappa={kappa} outside [1, {k}]")
        q = np.asarray(query, dtype=np.float64).reshape(1, -1)
        d2 = _sq_distances(q, self.centers_).ravel()
        order = np.argsort(d2, kind="stable")
        return [int(i) for i in order[:kappa]]

    def members(self, cluster_ids) -> set[str]:
        """Union of subject ids assigned to the named clusters."""
        check_is_fitted(self, "centers_")
        k = self.centers_.shape[0]
        if not cluster_ids:
            raise BadClusterIdError("cluster_ids must be nonempty")
        out: set[str] = set()
        for c in cluster_ids:
            if not 0 <= int(c) < k:
                raise BadClusterIdError(f"cluster index {c} outside [0, {k})")
            out.update(sid for sid, a in self.assignment_.items() if a == int(c))
        return out


def clustering_error(model: ColorKMeans, H, ids=None) -> float:
    """Sum of squared distances of each descriptor to its *assigned* center.

    Uses the stored assignment (not the nearest center), so stale assignments
    are reported as-is; callers are expected to pass converged models.
    """
    check_is_fitted(model, "centers_")
    X, id_list = _as_matrix(H, ids)
    total = 0.0
    for sid, row in zip(id_list, X):
        if sid not in model.assignment_:
            raise UnassignedIdError(f"subject {sid!r} has no cluster assignment")
        diff = row - model.centers_[model.assignment_[sid]]
        total += float(diff @ diff)
    return total


def fit_kmeans(H, n_clusters: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6,
               ids=None) -> ColorKMeans:
    return ColorKMeans(n_clusters=n_clusters, seed=seed, max_iter=max_iter, tol=tol).fit(H, ids)


def elbow_curve(H, k_values, seed: int = 0, n_restarts: int = 1,
                max_iter: int = 300, tol: float = 1e-6) -> list[ElbowPoint]:
    """Clustering error per candidate K, fitted independently at each K.

    With n_restarts > 1 the best (lowest-error) of seeds seed..seed+n_restarts-1
    is kept, which smooths out unlucky initializations.
    """
    if not k_values:
        raise BadKError("k_values must be nonempty")
    points = []
    for k in k_values:
        best = None
        for r in range(max(1, int(n_restarts))):
            model = fit_kmeans(H, k, seed=seed + r, max_iter=max_iter, tol=tol)
            err = clustering_error(model, H)
            if best is None or err < best:
                best = err
        points.append(ElbowPoint(k=int(k), error=best))
    return points


def save_cluster_model(path: str | Path, model: ColorKMeans) -> None:
    """Versioned binary: header (magic, version, K, N, seed), centers, assignment."""
    check_is_fitted(model, "centers_")
    centers = np.ascontiguousarray(model.centers_, dtype="<f8")
    k, dim = centers.shape
    n = len(model.ids_)
    with open(path, "wb") as f:
        f.write(_MODEL_MAGIC)
        f.write(struct.pack("<IIIqII", _MODEL_VERSION, k, n, int(model.seed), dim,
                            int(model.n_iter_)))
        f.write(struct.pack("<d", float(model.error_)))
        f.write(centers.tobytes())
        for sid in model.ids_:
            encoded = sid.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", model.assignment_[sid]))


def load_cluster_model(path: str | Path) -> ColorKMeans:
    with open(path, "rb") as f:
        magic = f.read(len(_MODEL_MAGIC))
        if magic != _MODEL_MAGIC:
            raise ValueError(f"{path}: not a cluster model file (bad magic {magic!r})")
        version, k, n, seed, dim, n_iter = struct.unpack("<IIIqII", f.read(28))
        if version != _MODEL_VERSION:
            raise ValueError(f"{path}: unsupported cluster model version {version}")
        (error,) = struct.unpack("<d", f.read(8))
        centers = np.frombuffer(f.read(8 * k * dim), dtype="<f8").reshape(k, dim).copy()
        ids, labels = [], []
        for _ in range(n):
            (id_len,) = struct.unpack("<I", f.read(4))
            ids.append(f.read(id_len).decode("utf-8"))
            labels.append(struct.unpack("<I", f.read(4))[0])
    model = ColorKMeans(n_clusters=k, seed=seed)
    model.centers_ = centers
    model.ids_ = ids
    model.labels_ = np.asarray(labels, dtype=np.int64)
    model.assignment_ = {sid: int(c) for sid, c in zip(ids, labels)}
    model.error_ = error
    model.error_history_ = [error]
    model.n_iter_ = n_iter
    return model
