"""Synthetic walking-sequence generator for desk-scale end-to-end runs.

Renders body-shaped silhouettes (round head, broad torso, two legs) on a black
background, with per-subject head/torso/leg colors drawn from a spread-out
palette. Camera 2 frames get a configurable illumination shift, pose jitter,
and pixel noise. A configurable fraction of subjects receives near-duplicate
palettes to emulate people wearing similar clothes. Output is byte-identical
for a fixed config.
"""

from __future__ import annotations

import colorsys
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import BadConfigError

MANIFEST_NAME = "manifest.csv"
MANIFEST_FIELDS = ["subject_id", "n_cameras", "frames_per_camera",
                   "head_rgb", "torso_rgb", "leg_rgb"]


@dataclass
class SynthConfig:
    n_subjects: int = 20
    frames_per_camera: int = 10
    height: int = 120
    width: int = 60
    palette_spread: float = 1.0  # 1.0 = hues spread over the full circle
    illumination_shift: float = 0.02  # additive brightness offset in camera 2
    noise_level: float = 0.01  # stddev of per-pixel noise on foreground
    similar_fraction: float = 0.0  # fraction of subjects sharing near-identical palettes
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 2:
            raise BadConfigError("n_subjects must be >= 2")
        if not 0.0 <= self.similar_fraction <= 1.0:
            raise BadConfigError("similar_fraction must lie in [0, 1]")
        if self.frames_per_camera < 1:
            raise BadConfigError("frames_per_camera must be >= 1")
        if self.height < 30 or self.width < 15:
            raise BadConfigError("image size too small to render a body shape")
        if self.noise_level < 0 or self.illumination_shift < -0.9:
            raise BadConfigError("invalid noise level or illumination shift")


def _snap_to_grid(rgb: np.ndarray, levels: int = 16) -> np.ndarray:
    """Snap channel values to midpoints of a uniform grid.

    Keeps part colors away from quantization boundaries, so a mild brightness
    change between cameras shifts values without flipping their coarse color.
    """
    return (np.clip(np.round(rgb * levels - 0.5), 0, levels - 1) + 0.5) / levels


def _palettes(cfg: SynthConfig, rng: np.random.Generator) -> list[dict]:
    """Per-subject part colors: evenly spaced hues, alternating brightness."""
    palettes = []
    for i in range(cfg.n_subjects):
        base_hue = (i * cfg.palette_spread / cfg.n_subjects) % 1.0
        val = 0.55 + 0.35 * (i % 2)  # neighbors in hue differ strongly in brightness
        parts = {}
        for j, part in enumerate(("head", "torso", "leg")):
            hue = (base_hue + j * 0.37) % 1.0
            parts[part] = _snap_to_grid(np.array(colorsys.hsv_to_rgb(hue, 0.9, val)))
        palettes.append(parts)

    n_similar = int(round(cfg.similar_fraction * cfg.n_subjects))
    # pair up similar-clothing subjects: each copies its partner's palette
    for k in range(0, n_similar - 1, 2):
        src, dst = palettes[k], palettes[k + 1]
        for part in dst:
            dst[part] = np.clip(src[part] + rng.normal(0, 0.01, size=3), 0, 1)
    return palettes


def _render_frame(cfg: SynthConfig, palette: dict, rng: np.random.Generator,
                  illum: float) -> tuple[np.ndarray, np.ndarray]:
    """One frame: pixels uint8 HxWx3 and boolean mask."""
    h, w = cfg.height, cfg.width
    img = np.zeros((h, w, 3), dtype=np.float64)
    mask = np.zeros((h, w), dtype=bool)

    cx = w / 2 + rng.integers(-2, 3)  # pose jitter: lateral shift
    sway = 1.0 + 0.05 * rng.standard_normal()  # pose jitter: width wobble

    head_h = int(0.18 * h)
    torso_h = int(0.42 * h)
    ys, xs = np.mgrid[0:h, 0:w]

    # head: ellipse
    head_cy, head_r = head_h // 2 + 2, max(3, int(0.09 * h * sway))
    head = ((ys - head_cy) ** 2 / head_r**2 + (xs - cx) ** 2 / (0.8 * head_r) ** 2) <= 1.0
    # torso: rounded rectangle
    torso_half = max(4, int(0.18 * w * sway))
    torso = (ys >= head_h) & (ys < head_h + torso_h) & (np.abs(xs - cx) <= torso_half)
    # legs: two columns with a gap
    leg_half = max(2, int(0.07 * w * sway))
    leg_gap = max(2, int(0.08 * w))
    legs = (ys >= head_h + torso_h) & (ys < int(0.97 * h)) & (
        (np.abs(xs - (cx - leg_gap)) <= leg_half) | (np.abs(xs - (cx + leg_gap)) <= leg_half)
    )

    for region, part in ((head, "head"), (torso, "torso"), (legs, "leg")):
        color = np.clip(palette[part] + illum, 0, 1)
        img[region] = color
        mask |= region

    fg = mask.sum()
    if cfg.noise_level > 0 and fg:
        img[mask] = np.clip(img[mask] + rng.normal(0, cfg.noise_level, size=(fg, 3)), 0, 1)
    return (img * 255).round().astype(np.uint8), mask


def _rgb_hex(color: np.ndarray) -> str:
    r, g, b = (int(round(255 * c)) for c in color)
    return f"{r:02x}{g:02x}{b:02x}"


def synth_generate(cfg: SynthConfig, out_dir: str | Path) -> Path:
    """Write the dataset under out_dir; returns the manifest path.

    Layout: ``out_dir/<subject_id>/<camera_id>/frame_%04d.png`` with a
    ``*_mask.png`` beside every frame, plus a ground-truth manifest CSV with
    one row per subject.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    palettes = _palettes(cfg, rng)

    manifest_rows = []
    for i, palette in enumerate(palettes):
        sid = f"s{i:03d}"
        for cam_idx, cam in enumerate(("cam1", "cam2")):
            cam_dir = out_dir / sid / cam
            cam_dir.mkdir(parents=True, exist_ok=True)
            illum = cfg.illumination_shift if cam_idx == 1 else 0.0
            for f in range(cfg.frames_per_camera):
                pixels, mask = _render_frame(cfg, palette, rng, illum)
                Image.fromarray(pixels).save(cam_dir / f"frame_{f:04d}.png")
                Image.fromarray((mask * 255).astype(np.uint8)).save(
                    cam_dir / f"frame_{f:04d}_mask.png"
                )
        manifest_rows.append({
            "subject_id": sid,
            "n_cameras": 2,
            "frames_per_camera": cfg.frames_per_camera,
            "head_rgb": _rgb_hex(palette["head"]),
            "torso_rgb": _rgb_hex(palette["torso"]),
            "leg_rgb": _rgb_hex(palette["leg"]),
        })

    manifest = out_dir / MANIFEST_NAME
    with open(manifest, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(manifest_rows)
    return manifest
