"""Rank-based evaluation: CMC curves, the K/kappa parameter sweep, and the
with/without-clustering ablation.

Comparison counts are the primary efficiency metric (platform independent);
wall times are reported as mean and median per probe alongside them.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import DatasetIndex, scan_dataset, split_gallery_probe
from .exceptions import UnknownGroundTruthError
from .matcher import HierarchicalMatcher, MatchResult
from .siamese import load_checkpoint
from .silhouette import (
    DEFAULT_FG_THRESHOLD,
    DEFAULT_HEIGHT,
    DEFAULT_WIDTH,
    prepare_sequence,
)


@dataclass
class ExperimentConfig:
    data_root: str
    checkpoint: str
    out_dir: str
    layout: str = "per-subject-dirs"
    split_policy: str = "camera-split"
    k_values: list = field(default_factory=lambda: [100])
    kappa_values: list = field(default_factory=lambda: [1])
    probe_count: int | None = None  # None = every probe subject
    seed: int = 0
    max_rank: int = 10
    target_h: int = DEFAULT_HEIGHT
    target_w: int = DEFAULT_WIDTH
    fg_threshold: float = DEFAULT_FG_THRESHOLD

    def __post_init__(self):
        if not self.k_values or not self.kappa_values:
            raise ValueError("k_values and kappa_values must be nonempty")


@dataclass
class EvalReport:
    n_clusters: int
    kappa: int
    cmc: np.ndarray  # accuracy at rank 1..max_rank
    mean_comparisons: float
    mean_ms: float
    median_ms: float
    results: list  # per-probe MatchResult, ground-truth labeled

    @property
    def rank1(self) -> float:
        return float(self.cmc[0])


def cmc(results: list[MatchResult], max_rank: int, gallery_ids) -> np.ndarray:
    """Cumulative matching accuracy at ranks 1..max_rank.

    A probe whose true id was pruned out of the candidate set never appears in
    its ranking and therefore counts as a miss at every rank.
    """
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    known = set(gallery_ids)
    hits = np.zeros(max_rank, dtype=np.float64)
    for r in results:
        if r.true_id is None or r.true_id not in known:
            raise UnknownGroundTruthError(f"ground-truth id {r.true_id!r} not in gallery")
        position = next((i for i, (sid, _) in enumerate(r.ranked) if sid == r.true_id), None)
        if position is not None and position < max_rank:
            hits[position:] += 1.0
    return hits / len(results) if results else hits


def load_index_sequences(index: DatasetIndex, fg_threshold: float, target_h: int,
                         target_w: int) -> dict:
    return {
        sid: prepare_sequence(index.frames_of(sid), fg_threshold, target_h, target_w,
                              source_id=sid)
        for sid in index.subject_ids()
    }


def _select_probes(probe_index: DatasetIndex, probe_count, seed: int) -> list[str]:
    ids = probe_index.subject_ids()
    if probe_count is None or probe_count >= len(ids):
        return ids
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(ids), size=probe_count, replace=False)
    return sorted(ids[i] for i in chosen)


def _evaluate_probes(matcher: HierarchicalMatcher, probe_seqs: dict, probe_ids, kappa,
                     max_rank: int, prune: bool = True) -> EvalReport:
    results = []
    for sid in probe_ids:
        result = matcher.identify(probe_seqs[sid], kappa) if prune \
            else matcher.rank_all(probe_seqs[sid])
        result.true_id = sid
        results.append(result)
    curve = cmc(results, max_rank, matcher.gallery_ids())
    times = [r.elapsed_ms for r in results]
    return EvalReport(
        n_clusters=int(matcher.cluster_.centers_.shape[0]),
        kappa=int(kappa) if prune else int(matcher.cluster_.centers_.shape[0]),
        cmc=curve,
        mean_comparisons=float(np.mean([r.n_comparisons for r in results])),
        mean_ms=float(statistics.mean(times)),
        median_ms=float(statistics.median(times)),
        results=results,
    )


def _write_cmc_csv(path: Path, curve: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["rank", "accuracy"])
        for rank, acc in enumerate(curve, start=1):
            w.writerow([rank, repr(float(acc))])


def _write_summary(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(
            f, fieldnames=["K", "kappa", "rank1", "mean_comparisons", "mean_ms"],
            lineterminator="\n",
        )
        w.writeheader()
        w.writerows(rows)


class _PipelineContext:
    """Shared state for sweep/ablation: loaded model, splits, and sequences."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.model = load_checkpoint(cfg.checkpoint)
        index = scan_dataset(cfg.data_root, cfg.layout)
        gallery_idx, probe_idx = split_gallery_probe(index, cfg.split_policy, cfg.seed)
        self.gallery_seqs = load_index_sequences(
            gallery_idx, cfg.fg_threshold, cfg.target_h, cfg.target_w)
        self.probe_seqs = load_index_sequences(
            probe_idx, cfg.fg_threshold, cfg.target_h, cfg.target_w)
        self.probe_ids = _select_probes(probe_idx, cfg.probe_count, cfg.seed)

    def matcher_at(self, n_clusters: int) -> HierarchicalMatcher:
        return HierarchicalMatcher(
            siamese_model=self.model, n_clusters=n_clusters, seed=self.cfg.seed,
            target_h=self.cfg.target_h, target_w=self.cfg.target_w,
            fg_threshold=self.cfg.fg_threshold,
        ).fit_sequences(self.gallery_seqs)


def sweep(cfg: ExperimentConfig) -> list[EvalReport]:
    """Evaluate every (K, kappa) cell; emits cmc_<K>_<kappa>.csv per cell and
    sweep_summary.csv, flushing partial results as cells complete."""
    ctx = _PipelineContext(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    reports, summary_rows = [], []
    for k in cfg.k_values:
        matcher = ctx.matcher_at(k)
        for kappa in cfg.kappa_values:
            report = _evaluate_probes(matcher, ctx.probe_seqs, ctx.probe_ids, kappa,
                                      cfg.max_rank)
            reports.append(report)
            _write_cmc_csv(out_dir / f"cmc_{k}_{kappa}.csv", report.cmc)
            summary_rows.append({
                "K": k, "kappa": kappa,
                "rank1": repr(report.rank1),
                "mean_comparisons": repr(report.mean_comparisons),
                "mean_ms": repr(report.mean_ms),
            })
            _write_summary(out_dir / "sweep_summary.csv", summary_rows)
    return reports


def ablation(cfg: ExperimentConfig, n_clusters: int | None = None,
             kappa: int | None = None) -> tuple[EvalReport, EvalReport]:
    """Same probes and model with and without the cluster-pruning stage."""
    ctx = _PipelineContext(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    k = n_clusters if n_clusters is not None else cfg.k_values[0]
    kp = kappa if kappa is not None else cfg.kappa_values[0]

    matcher = ctx.matcher_at(k)
    with_clusters = _evaluate_probes(matcher, ctx.probe_seqs, ctx.probe_ids, kp,
                                     cfg.max_rank, prune=True)
    without = _evaluate_probes(matcher, ctx.probe_seqs, ctx.probe_ids, kp,
                               cfg.max_rank, prune=False)

    with open(out_dir / "ablation.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["arm", "rank", "accuracy", "mean_comparisons", "mean_ms", "median_ms"])
        for arm, report in (("with-clustering", with_clusters),
                            ("without-clustering", without)):
            for rank, acc in enumerate(report.cmc, start=1):
                w.writerow([arm, rank, repr(float(acc)),
                            repr(report.mean_comparisons),
                            repr(report.mean_ms), repr(report.median_ms)])
    _write_cmc_csv(out_dir / f"cmc_with_{k}_{kp}.csv", with_clusters.cmc)
    _write_cmc_csv(out_dir / f"cmc_without_{k}_{kp}.csv", without.cmc)
    return with_clusters, without
