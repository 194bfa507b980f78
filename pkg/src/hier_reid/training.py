"""Mini-batch training loop for the part-based siamese network."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .exceptions import DegeneratePairsError
from .siamese import PartSiameseNet, silhouette_to_tensor


@dataclass
class TrainConfig:
    eta: float = 0.01  # learning rate
    gamma: float = 0.0005  # decoupled weight decay
    batch_size: int = 32  # smaller batches destabilize Adam at eta=0.01
    max_epochs: int = 50
    loss_threshold: float = 1e-5
    error_threshold: float = 1e-4
    max_grad_norm: float | None = 5.0  # global-norm clip; None disables
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ValueError(f"max_grad_norm must be positive, got {self.max_grad_norm}")


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)  # epoch-mean cross-entropy
    error_rates: list = field(default_factory=list)
    epochs_run: int = 0
    converged: bool = False
    stop_reason: str = ""
    eta: float = 0.0
    gamma: float = 0.0
    seed: int = 0
    n_pairs: int = 0

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")

    @property
    def final_error_rate(self) -> float:
        return self.error_rates[-1] if self.error_rates else float("nan")

    def to_dict(self) -> dict:
        return {
            "losses": self.losses,
            "error_rates": self.error_rates,
            "epochs_run": self.epochs_run,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "eta": self.eta,
            "gamma": self.gamma,
            "seed": self.seed,
            "n_pairs": self.n_pairs,
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "loss", "error_rate"])
            for i, (loss, err) in enumerate(zip(self.losses, self.error_rates), start=1):
                w.writerow([i, repr(loss), repr(err)])


def _evaluate_epoch(model, a, b, labels, batch_size) -> tuple[float, float]:
    """Mean cross-entropy and error rate over the full pair set."""
    losses, wrong, n = 0.0, 0, labels.shape[0]
    with torch.no_grad():
        for start in range(0, n, batch_size):
            sl = slice(start, start + batch_size)
            logits = model(a[sl], b[sl])
            losses += float(F.cross_entropy(logits, labels[sl], reduction="sum"))
            wrong += int((logits.argmax(dim=1) != labels[sl]).sum())
    return losses / n, wrong / n


def train(model: PartSiameseNet, pair_stream, cfg: TrainConfig | None = None
          ) -> tuple[PartSiameseNet, TrainReport]:
    """Train on (silhouetteA, silhouetteB, label) pairs until convergence.

    Stops when the epoch-mean loss drops under cfg.loss_threshold, the epoch
    error rate drops under cfg.error_threshold, or max_epochs is reached.
    Weight decay is applied decoupled from the Adam moment estimates.
    """
    cfg = cfg or TrainConfig()
    pairs = list(pair_stream)
    labels_seen = {int(label) for _, _, label in pairs}
    if labels_seen != {0, 1}:
        raise DegeneratePairsError(
            f"training stream must contain both labels, got {sorted(labels_seen)}"
        )

    dtype = next(model.parameters()).dtype
    a = torch.stack([silhouette_to_tensor(p[0], dtype) for p in pairs])
    b = torch.stack([silhouette_to_tensor(p[1], dtype) for p in pairs])
    labels = torch.tensor([int(p[2]) for p in pairs], dtype=torch.long)
    n = len(pairs)

    opt = torch.optim.AdamW(model.parameters(), lr=cfg.eta, weight_decay=cfg.gamma)
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport(eta=cfg.eta, gamma=cfg.gamma, seed=cfg.seed, n_pairs=n)

    for epoch in range(1, cfg.max_epochs + 1):
        perm = torch.from_numpy(rng.permutation(n))
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            opt.zero_grad()
            loss = F.cross_entropy(model(a[idx], b[idx]), labels[idx])
            loss.backward()
            if cfg.max_grad_norm is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
            opt.step()

        epoch_loss, epoch_err = _evaluate_epoch(model, a, b, labels, cfg.batch_size)
        report.losses.append(epoch_loss)
        report.error_rates.append(epoch_err)
        report.epochs_run = epoch

        if epoch_loss < cfg.loss_threshold:
            report.converged, report.stop_reason = True, "loss_threshold"
            break
        if epoch_err < cfg.error_threshold:
            report.converged, report.stop_reason = True, "error_threshold"
            break
    else:
        report.stop_reason = "max_epochs"

    model.train_meta = report.to_dict()
    return model, report
