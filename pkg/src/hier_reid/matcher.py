"""Gallery enrollment and two-level hierarchical identification.

Level one prunes the gallery to the members of the color clusters nearest the
probe's descriptor; level two scores the survivors with the part-based
siamese network on average silhouettes and picks the argmax.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .clustering import ColorKMeans
from .descriptors import (
    ColorDescriptor,
    FeatureMatrix,
    build_feature_matrix,
    sequence_descriptor,
)
from .exceptions import EmptyProbeError
from .siamese import PartSiameseNet, load_checkpoint, similarity
from .silhouette import (
    DEFAULT_FG_THRESHOLD,
    DEFAULT_HEIGHT,
    DEFAULT_WIDTH,
    NormalizedSilhouette,
    average_silhouette,
    prepare_sequence,
)
from .validation import check_is_fitted

GALLERY_VERSION = 1


@dataclass
class GalleryEntry:
    subject_id: str
    descriptor: ColorDescriptor
    avg_silhouette: NormalizedSilhouette
    cluster: int


@dataclass
class MatchResult:
    predicted_id: str
    ranked: list  # (subject_id, similarity), descending, ties by smaller id
    reduced_set_ids: list  # sorted audit trail of the pruned candidate set
    n_comparisons: int
    probe_descriptor: np.ndarray
    elapsed_ms: float = 0.0
    true_id: str | None = None

    def to_json(self) -> str:
        payload = {
            "predicted_id": self.predicted_id,
            "ranked": [[sid, sim] for sid, sim in self.ranked],
            "reduced_set_ids": list(self.reduced_set_ids),
            "n_comparisons": self.n_comparisons,
            "elapsed_ms": self.elapsed_ms,
            "probe_descriptor": [float(v) for v in self.probe_descriptor],
        }
        if self.true_id is not None:
            payload["true_id"] = self.true_id
        return json.dumps(payload, indent=2, sort_keys=True)


class HierarchicalMatcher(BaseEstimator):
    """Enrolls a gallery and identifies probe sequences against it.

    Parameters mirror the pipeline knobs: number of color clusters, the RNG
    seed, silhouette size, and the foreground threshold used when frames come
    without masks. The siamese model is a constructor dependency so a single
    trained network can serve many galleries.
    """

    def __init__(self, siamese_model: PartSiameseNet | None = None, n_clusters: int = 100,
                 seed: int = 0, target_h: int = DEFAULT_HEIGHT, target_w: int = DEFAULT_WIDTH,
                 fg_threshold: float = DEFAULT_FG_THRESHOLD, max_iter: int = 300,
                 tol: float = 1e-6):
        self.siamese_model = siamese_model
        self.n_clusters = n_clusters
        self.seed = seed
        self.target_h = target_h
        self.target_w = target_w
        self.fg_threshold = fg_threshold
        self.max_iter = max_iter
        self.tol = tol

    # -- enrollment ---------------------------------------------------------

    def fit(self, index):
        """Enroll every subject of a DatasetIndex (loads frames from disk)."""
        sequences = {
            sid: prepare_sequence(index.frames_of(sid), self.fg_threshold,
                                  self.target_h, self.target_w, source_id=sid)
            for sid in index.subject_ids()
        }
        return self.fit_sequences(sequences)

    def fit_sequences(self, sequences: dict):
        """Enroll from in-memory silhouette sequences keyed by subject id."""
        ids = sorted(sequences)
        descriptors = [sequence_descriptor(sequences[sid], sid) for sid in ids]
        matrix = build_feature_matrix(descriptors)

        k = int(self.n_clusters)
        if k > len(ids):
            warnings.warn(
                f"n_clusters={k} exceeds gallery size {len(ids)}; clamping to {len(ids)}",
                stacklevel=2,
            )
            k = len(ids)
        cluster = ColorKMeans(n_clusters=k, seed=self.seed,
                              max_iter=self.max_iter, tol=self.tol).fit(matrix)

        self.entries_ = [
            GalleryEntry(
                subject_id=sid,
                descriptor=desc,
                avg_silhouette=average_silhouette(sequences[sid]),
                cluster=cluster.assignment_[sid],
            )
            for sid, desc in zip(ids, descriptors)
        ]
        self.cluster_ = cluster
        self.matrix_ = matrix
        return self

    # -- identification -----------------------------------------------------

    def _probe_features(self, probe_seq) -> tuple[ColorDescriptor, NormalizedSilhouette]:
        if not probe_seq:
            raise EmptyProbeError("probe sequence is empty")
        return sequence_descriptor(list(probe_seq)), average_silhouette(list(probe_seq))

    def _score(self, candidate_ids, probe_avg) -> list:
        by_id = {e.subject_id: e for e in self.entries_}
        scored = [
            (sid, similarity(self.siamese_model, by_id[sid].avg_silhouette, probe_avg))
            for sid in candidate_ids
        ]
        return sorted(scored, key=lambda t: (-t[1], t[0]))

    def identify(self, probe_seq, kappa: int = 1) -> MatchResult:
        """Two-level identification: cluster pruning, then siamese argmax."""
        check_is_fitted(self, "entries_")
        t0 = time.perf_counter()
        desc, probe_avg = self._probe_features(probe_seq)
        clusters = self.cluster_.top_k(desc.values, kappa)
        reduced = sorted(self.cluster_.members(clusters))
        ranked = self._score(reduced, probe_avg)
        elapsed = (time.perf_counter() - t0) * 1000.0
        return MatchResult(
            predicted_id=ranked[0][0],
            ranked=ranked,
            reduced_set_ids=reduced,
            n_comparisons=len(reduced),
            probe_descriptor=desc.values,
            elapsed_ms=elapsed,
        )

    def rank_all(self, probe_seq) -> MatchResult:
        """Identification with the cluster stage bypassed (full gallery scan)."""
        check_is_fitted(self, "entries_")
        t0 = time.perf_counter()
        desc, probe_avg = self._probe_features(probe_seq)
        all_ids = sorted(e.subject_id for e in self.entries_)
        ranked = self._score(all_ids, probe_avg)
        elapsed = (time.perf_counter() - t0) * 1000.0
        return MatchResult(
            predicted_id=ranked[0][0],
            ranked=ranked,
            reduced_set_ids=all_ids,
            n_comparisons=len(all_ids),
            probe_descriptor=desc.values,
            elapsed_ms=elapsed,
        )

    def predict(self, probe_seq, kappa: int = 1) -> str:
        return self.identify(probe_seq, kappa).predicted_id

    def gallery_ids(self) -> list[str]:
        check_is_fitted(self, "entries_")
        return sorted(e.subject_id for e in self.entries_)


def save_gallery(path, matcher: HierarchicalMatcher, checkpoint_ref: str = "") -> None:
    """One versioned archive: descriptor table, cluster model, average
    silhouettes, and a reference to the siamese checkpoint used."""
    check_is_fitted(matcher, "entries_")
    entries = matcher.entries_
    meta = {
        "format": "hier-reid-gallery",
        "version": GALLERY_VERSION,
        "ids": [e.subject_id for e in entries],
        "n_clusters": int(matcher.cluster_.centers_.shape[0]),
        "seed": int(matcher.seed),
        "target_h": int(matcher.target_h),
        "target_w": int(matcher.target_w),
        "fg_threshold": float(matcher.fg_threshold),
        "checkpoint_ref": checkpoint_ref,
        "cluster_error": float(matcher.cluster_.error_),
        "cluster_n_iter": int(matcher.cluster_.n_iter_),
    }
    arrays = {
        "meta.json": np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"),
                                   dtype=np.uint8),
        "descriptors": matcher.matrix_.rows,
        "centers": matcher.cluster_.centers_,
        "labels": np.asarray([e.cluster for e in entries], dtype=np.int64),
        "avg_pixels": np.stack([e.avg_silhouette.pixels for e in entries]),
        "avg_masks": np.stack([e.avg_silhouette.mask for e in entries]),
        "n_frames": np.asarray([e.descriptor.n_frames for e in entries], dtype=np.int64),
    }
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_gallery(path, siamese_model: PartSiameseNet | None = None) -> HierarchicalMatcher:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta.json"]).decode("utf-8"))
        if meta.get("version") != GALLERY_VERSION:
            raise ValueError(f"{path}: unsupported gallery version {meta.get('version')}")
        ids = meta["ids"]
        rows = data["descriptors"].copy()
        centers = data["centers"].copy()
        labels = data["labels"].copy()
        avg_pixels = data["avg_pixels"].copy()
        avg_masks = data["avg_masks"].copy()
        n_frames = data["n_frames"].copy()

    if siamese_model is None and meta.get("checkpoint_ref"):
        siamese_model = load_checkpoint(meta["checkpoint_ref"])

    matcher = HierarchicalMatcher(
        siamese_model=siamese_model, n_clusters=meta["n_clusters"], seed=meta["seed"],
        target_h=meta["target_h"], target_w=meta["target_w"],
        fg_threshold=meta["fg_threshold"],
    )
    cluster = ColorKMeans(n_clusters=meta["n_clusters"], seed=meta["seed"])
    cluster.centers_ = centers
    cluster.ids_ = list(ids)
    cluster.labels_ = labels
    cluster.assignment_ = {sid: int(c) for sid, c in zip(ids, labels)}
    cluster.error_ = meta["cluster_error"]
    cluster.error_history_ = [meta["cluster_error"]]
    cluster.n_iter_ = meta["cluster_n_iter"]

    matcher.entries_ = [
        GalleryEntry(
            subject_id=sid,
            descriptor=ColorDescriptor(values=rows[i], subject_id=sid,
                                       n_frames=int(n_frames[i])),
            avg_silhouette=NormalizedSilhouette(
                pixels=avg_pixels[i], mask=avg_masks[i].astype(bool), source_id=sid,
                frame_index=-1,
            ),
            cluster=int(labels[i]),
        )
        for i, sid in enumerate(ids)
    ]
    matcher.cluster_ = cluster
    matcher.matrix_ = FeatureMatrix(rows=rows, ids=list(ids))
    return matcher
