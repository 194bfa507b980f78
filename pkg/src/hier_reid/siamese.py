"""Part-based siamese verification network.

Each body part (head, torso, leg) gets its own block: two tied conv+pool
stages applied to both inputs, a signed feature-difference layer, then two
more conv stages without pooling and a 500-wide fully connected output. The
three part latents are concatenated and mapped to a two-class softmax
("different" / "same identity"). Skipping the pool on the post-difference
convs keeps the difference maps from shrinking away.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import ShapeMismatchError, ShapeUnderflowError
from .silhouette import NormalizedSilhouette

CHECKPOINT_VERSION = 1


@dataclass
class SiameseConfig:
    """Layer sizes of one part block plus the fused head.

    Defaults: conv 5x5/20 and 5x5/25 (each 2x2-pooled, weights tied across the
    two inputs), then post-difference conv 5x5/25 and 3x3/25 without pooling,
    a 500-wide fc per part, and a 1500->2 fused classification head.
    """

    part_height: int = 54
    part_width: int = 64
    conv1_kernel: int = 5
    conv1_filters: int = 20
    conv2_kernel: int = 5
    conv2_filters: int = 25
    conv3_kernel: int = 5
    conv3_filters: int = 25
    conv4_kernel: int = 3
    conv4_filters: int = 25
    pool: int = 2
    fc_width: int = 500
    absolute_difference: bool = False  # variant flag; signed difference by default

    @property
    def silhouette_height(self) -> int:
        return 3 * self.part_height

    @property
    def silhouette_width(self) -> int:
        return self.part_width


def shape_pipeline(cfg: SiameseConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Derive the per-layer feature-map shapes for one part block.

    Raises ShapeUnderflowError when a valid (unpadded) convolution or a pool
    would drop any dimension below 1.
    """
    h, w = cfg.part_height, cfg.part_width
    audit: list[tuple[str, tuple[int, ...]]] = [("input", (h, w, 3))]

    def conv(name, k, filters):
        nonlocal h, w
        h, w = h - k + 1, w - k + 1
        if h < 1 or w < 1:
            raise ShapeUnderflowError(f"{name} output would be {h}x{w}")
        audit.append((name, (h, w, filters)))

    def pool(name):
        nonlocal h, w
        h, w = h // cfg.pool, w // cfg.pool
        if h < 1 or w < 1:
            raise ShapeUnderflowError(f"{name} output would be {h}x{w}")
        audit.append((name, (h, w, audit[-1][1][2])))

    conv("conv1", cfg.conv1_kernel, cfg.conv1_filters)
    pool("pool1")
    conv("conv2", cfg.conv2_kernel, cfg.conv2_filters)
    pool("pool2")
    audit.append(("difference", (h, w, cfg.conv2_filters)))
    conv("conv3", cfg.conv3_kernel, cfg.conv3_filters)
    conv("conv4", cfg.conv4_kernel, cfg.conv4_filters)
    flat = h * w * cfg.conv4_filters
    audit.append(("flatten", (flat,)))
    audit.append(("fc", (cfg.fc_width,)))
    return audit


class PartSiameseBlock(nn.Module):
    """Verification block for a single body part."""

    def __init__(self, cfg: SiameseConfig):
        super().__init__()
        audit = shape_pipeline(cfg)
        flat = audit[-2][1][0]
        self.cfg = cfg
        self.conv1 = nn.Conv2d(3, cfg.conv1_filters, cfg.conv1_kernel)
        self.conv2 = nn.Conv2d(cfg.conv1_filters, cfg.conv2_filters, cfg.conv2_kernel)
        self.conv3 = nn.Conv2d(cfg.conv2_filters, cfg.conv3_filters, cfg.conv3_kernel)
        self.conv4 = nn.Conv2d(cfg.conv3_filters, cfg.conv4_filters, cfg.conv4_kernel)
        self.fc = nn.Linear(flat, cfg.fc_width)

    def branch(self, x: torch.Tensor) -> torch.Tensor:
        """Tied feature stack, applied identically to both inputs."""
        x = F.max_pool2d(torch.relu(self.conv1(x)), self.cfg.pool)
        x = F.max_pool2d(torch.relu(self.conv2(x)), self.cfg.pool)
        return x

    def difference(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        d = self.branch(a) - self.branch(b)
        return d.abs() if self.cfg.absolute_difference else d

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        d = self.difference(a, b)
        d = torch.relu(self.conv3(d))
        d = torch.relu(self.conv4(d))
        return self.fc(d.flatten(1))


class PartSiameseNet(nn.Module):
    """Three part blocks fused into a two-class verdict."""

    def __init__(self, cfg: SiameseConfig):
        super().__init__()
        self.cfg = cfg
        self.blocks = nn.ModuleList([PartSiameseBlock(cfg) for _ in range(3)])
        self.head = nn.Linear(3 * cfg.fc_width, 2)
        self.seed = None
        self.shape_audit = shape_pipeline(cfg)
        self.train_meta: dict = {}

    def _check_input(self, x: torch.Tensor, name: str) -> None:
        h, w = self.cfg.silhouette_height, self.cfg.silhouette_width
        if x.dim() != 4 or x.shape[1] != 3 or x.shape[2] != h or x.shape[3] != w:
            raise ShapeMismatchError(
                f"{name} must be (B, 3, {h}, {w}), got {tuple(x.shape)}"
            )

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        self._check_input(a, "a")
        self._check_input(b, "b")
        third = self.cfg.part_height
        latents = []
        for i, block in enumerate(self.blocks):
            pa = a[:, :, i * third : (i + 1) * third, :]
            pb = b[:, :, i * third : (i + 1) * third, :]
            latents.append(torch.relu(block(pa, pb)))
        return self.head(torch.cat(latents, dim=1))


def _he_init(model: nn.Module, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            if p.dim() > 1:
                fan_in = p[0].numel()
                p.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
            else:
                p.zero_()


def init_model(cfg: SiameseConfig | None = None, seed: int = 0) -> PartSiameseNet:
    """Build a seeded network; the shape audit is recorded on the instance."""
    cfg = cfg or SiameseConfig()
    model = PartSiameseNet(cfg)
    _he_init(model, seed)
    model.seed = seed
    return model


def silhouette_to_tensor(sil: NormalizedSilhouette, dtype=torch.float32) -> torch.Tensor:
    """HxWx3 silhouette array -> (3, H, W) tensor."""
    return torch.from_numpy(np.ascontiguousarray(sil.pixels.transpose(2, 0, 1))).to(dtype)


def forward_pair(model: PartSiameseNet, a: NormalizedSilhouette, b: NormalizedSilhouette
                 ) -> tuple[np.ndarray, float]:
    """Score one silhouette pair; returns (logits, similarity).

    Similarity is the softmax probability of the "same identity" class, so it
    always lies in [0, 1]. It is evaluated in double precision: confident
    verdicts have logit gaps large enough that a float32 softmax would truncate
    them all to exactly 1.0 and erase the ranking between candidates.
    """
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        ta = silhouette_to_tensor(a, dtype).unsqueeze(0)
        tb = silhouette_to_tensor(b, dtype).unsqueeze(0)
        logits = model(ta, tb)[0]
        z = logits.to(torch.float64)
        sim = torch.sigmoid(z[1] - z[0])
    return logits.numpy().copy(), float(sim)


def similarity(model: PartSiameseNet, a: NormalizedSilhouette, b: NormalizedSilhouette) -> float:
    return forward_pair(model, a, b)[1]


def pair_loss(logits, label: int) -> float:
    """Cross-entropy of a single 2-class logit pair (no decay term)."""
    z = np.asarray(logits, dtype=np.float64)
    return float(np.logaddexp(z[0], z[1]) - z[int(label)])


def weight_penalty(model: nn.Module, gamma: float) -> torch.Tensor:
    """Decay term gamma/2 * sum of squared parameters."""
    total = sum((p * p).sum() for p in model.parameters())
    return 0.5 * gamma * total


def penalized_loss(model: PartSiameseNet, a: torch.Tensor, b: torch.Tensor,
                   labels: torch.Tensor, gamma: float) -> torch.Tensor:
    """Mean cross-entropy over a batch plus the weight-decay penalty."""
    return F.cross_entropy(model(a, b), labels) + weight_penalty(model, gamma)


def _relative_difference(x: float, y: float) -> float:
    return abs(x - y) / max(abs(x), abs(y), 1e-6)


def finite_difference_check(model: PartSiameseNet, a, b, labels, gamma: float,
                            n_per_group: int = 6, step: float = 1e-4, seed: int = 0,
                            max_resamples: int = 50) -> list[dict]:
    """Compare autograd gradients of the penalized loss with central differences.

    Parameters are sampled from every layer family (tied convs, post-difference
    convs, part fc, fused head) on a double-precision copy of the model. A
    central difference only estimates the derivative where the loss is smooth
    inside the probe window, so each sample is validated by step halving:
    probes whose +-step window crosses a relu/pool kink (fd at `step` and
    `step/2` disagree) are discarded and resampled. Returns one record per
    kept sample with the relative error.
    """
    model64 = copy.deepcopy(model).double()
    a64 = torch.as_tensor(a, dtype=torch.float64)
    b64 = torch.as_tensor(b, dtype=torch.float64)
    labels = torch.as_tensor(labels, dtype=torch.long)

    def loss_value() -> float:
        return float(penalized_loss(model64, a64, b64, labels, gamma))

    model64.zero_grad()
    penalized_loss(model64, a64, b64, labels, gamma).backward()

    groups = {"conv_tied": [], "conv_untied": [], "part_fc": [], "fusion": []}
    for name, p in model64.named_parameters():
        if "conv1" in name or "conv2" in name:
            groups["conv_tied"].append((name, p))
        elif "conv3" in name or "conv4" in name:
            groups["conv_untied"].append((name, p))
        elif ".fc." in name:
            groups["part_fc"].append((name, p))
        else:
            groups["fusion"].append((name, p))

    rng = np.random.default_rng(seed)
    records = []
    with torch.no_grad():
        for group, params in groups.items():
            kept = attempts = 0
            while kept < n_per_group and attempts < n_per_group + max_resamples:
                attempts += 1
                name, p = params[int(rng.integers(len(params)))]
                flat_idx = int(rng.integers(p.numel()))
                idx = np.unravel_index(flat_idx, p.shape)
                original = float(p[idx])

                def central(h: float) -> float:
                    p[idx] = original + h
                    plus = loss_value()
                    p[idx] = original - h
                    minus = loss_value()
                    p[idx] = original
                    return (plus - minus) / (2.0 * h)

                numeric = central(step)
                if _relative_difference(numeric, central(step / 2.0)) > 1e-4:
                    continue  # kink inside the probe window; fd invalid here
                analytic = float(p.grad[idx])
                records.append({
                    "group": group, "param": name, "index": tuple(int(i) for i in idx),
                    "analytic": analytic, "numeric": numeric,
                    "rel_error": _relative_difference(analytic, numeric),
                })
                kept += 1
    return records


def save_checkpoint(path, model: PartSiameseNet, report=None) -> None:
    """Versioned npz container: config + seed + named weight tensors + train log."""
    meta = {
        "format": "hier-reid-checkpoint",
        "version": CHECKPOINT_VERSION,
        "seed": model.seed,
        "config": asdict(model.cfg),
        "train_report": report.to_dict() if report is not None else model.train_meta,
    }
    arrays = {f"param/{name}": p.detach().numpy() for name, p in model.named_parameters()}
    arrays["meta.json"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"),
                                        dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path) -> PartSiameseNet:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta.json"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        cfg = SiameseConfig(**meta["config"])
        model = PartSiameseNet(cfg)
        state = {name[len("param/"):]: torch.from_numpy(data[name].copy())
                 for name in data.files if name.startswith("param/")}
    model.load_state_dict(state)
    model.seed = meta.get("seed")
    model.train_meta = meta.get("train_report") or {}
    return model
