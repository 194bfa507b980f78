"""Silhouette preparation: foreground extraction, size normalization, body-part
splitting, and sequence averaging.

All functions are pure; silhouettes are value objects and safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .exceptions import (
    AllBackgroundError,
    BadTargetError,
    DimensionMismatchError,
    EmptySequenceError,
)
from .validation import check_mask, check_rgb_pixels

DEFAULT_HEIGHT = 162
DEFAULT_WIDTH = 64
DEFAULT_FG_THRESHOLD = 0.1

MASK_SUFFIX = "_mask.png"


@dataclass
class RGBFrame:
    """An 8-bit RGB frame, optionally carrying a binary foreground mask."""

    pixels: np.ndarray  # HxWx3 uint8
    mask: np.ndarray | None = None  # HxW bool

    def __post_init__(self):
        self.pixels = check_rgb_pixels(self.pixels)
        if self.mask is not None:
            self.mask = check_mask(self.mask, self.pixels.shape[:2])


@dataclass
class NormalizedSilhouette:
    """Fixed-size silhouette with unit-scaled pixels; background pixels are exactly 0."""

    pixels: np.ndarray  # HxWx3 float64 in [0, 1]
    mask: np.ndarray  # HxW bool, >= 1 foreground pixel
    source_id: str = ""
    frame_index: int = 0


@dataclass
class PartTriple:
    """Head/torso/leg slices of a silhouette; concatenating them reproduces the source."""

    head: NormalizedSilhouette
    torso: NormalizedSilhouette
    leg: NormalizedSilhouette

    def __iter__(self):
        return iter((self.head, self.torso, self.leg))


def _luminance(pixels: np.ndarray) -> np.ndarray:
    p = pixels.astype(np.float64)
    if np.issubdtype(pixels.dtype, np.integer):
        p = p / 255.0
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


def extract_silhouette(frame: RGBFrame, threshold: float = DEFAULT_FG_THRESHOLD) -> RGBFrame:
    """Attach a foreground mask to `frame`.

    A frame that already carries a mask is passed through unchanged. Otherwise
    the modal luminance is taken as the background estimate and pixels whose
    luminance deviates from it by more than `threshold` become foreground.
    """
    if frame.mask is not None:
        return frame
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    lum = _luminance(frame.pixels)
    hist, edges = np.histogram(lum, bins=256, range=(0.0, 1.0))
    modal = 0.5 * (edges[np.argmax(hist)] + edges[np.argmax(hist) + 1])
    mask = np.abs(lum - modal) > threshold
    if not mask.any():
        raise AllBackgroundError("no pixel deviates from the modal background estimate")
    return RGBFrame(pixels=frame.pixels, mask=mask)


def normalize(
    frame: RGBFrame,
    target_h: int = DEFAULT_HEIGHT,
    target_w: int = DEFAULT_WIDTH,
    source_id: str = "",
    frame_index: int = 0,
) -> NormalizedSilhouette:
    """Crop to the mask bounding box and rescale to a fixed silhouette size.

    Pixels are interpolated bilinearly, the mask with nearest-neighbor, and
    background pixels are zeroed afterwards. Intensities come out in [0, 1].
    """
    if target_h % 3 != 0 or target_h < 9 or target_w < 9:
        raise BadTargetError(
            f"target {target_h}x{target_w} invalid: height must be divisible by 3 "
            "and both dimensions >= 9"
        )
    if frame.mask is None or not frame.mask.any():
        raise AllBackgroundError("normalize() needs a mask with at least one foreground pixel")

    rows = np.flatnonzero(frame.mask.any(axis=1))
    cols = np.flatnonzero(frame.mask.any(axis=0))
    r0, r1 = rows[0], rows[-1] + 1
    c0, c1 = cols[0], cols[-1] + 1

    pixels = frame.pixels[r0:r1, c0:c1].astype(np.float64)
    if np.issubdtype(frame.pixels.dtype, np.integer):
        pixels = pixels / 255.0
    mask = frame.mask[r0:r1, c0:c1]

    pixels = cv2.resize(pixels, (target_w, target_h), interpolation=cv2.INTER_LINEAR)
    mask = cv2.resize(mask.astype(np.uint8), (target_w, target_h), interpolation=cv2.INTER_NEAREST)
    mask = mask.astype(bool)
    if not mask.any():
        raise AllBackgroundError("mask lost all foreground pixels during resampling")

    pixels = np.clip(pixels, 0.0, 1.0)
    pixels[~mask] = 0.0
    return NormalizedSilhouette(pixels=pixels, mask=mask, source_id=source_id, frame_index=frame_index)


def split_parts(sil: NormalizedSilhouette) -> PartTriple:
    """Slice a silhouette into three equal-height parts (head, torso, leg)."""
    h = sil.pixels.shape[0]
    if h % 3 != 0:
        raise BadTargetError(f"silhouette height {h} not divisible by 3")
    third = h // 3
    parts = []
    for i in range(3):
        sl = slice(i * third, (i + 1) * third)
        parts.append(
            NormalizedSilhouette(
                pixels=sil.pixels[sl],
                mask=sil.mask[sl],
                source_id=sil.source_id,
                frame_index=sil.frame_index,
            )
        )
    return PartTriple(*parts)


def permutation_invariant_mean(stack: np.ndarray) -> np.ndarray:
    """Mean over axis 0, accumulated in sorted order per element.

    Plain summation order follows input order, so float rounding could make a
    reordered sequence differ in the last bit; sorting first pins the
    accumulation order regardless of how the inputs were permuted.
    """
    return np.sort(stack, axis=0).sum(axis=0) / stack.shape[0]


def average_silhouette(seq: list[NormalizedSilhouette]) -> NormalizedSilhouette:
    """Pixel-wise mean of a sequence.

    The averaged mask keeps a pixel as foreground when at least half the frames
    mark it foreground (ties round to foreground); background pixels of the
    result are zeroed after averaging.
    """
    if not seq:
        raise EmptySequenceError("cannot average an empty silhouette sequence")
    shape = seq[0].pixels.shape
    for s in seq[1:]:
        if s.pixels.shape != shape:
            raise DimensionMismatchError(
                f"sequence mixes silhouette shapes {shape} and {s.pixels.shape}"
            )
    pixels = permutation_invariant_mean(np.stack([s.pixels for s in seq]))
    fg_votes = np.sum([s.mask for s in seq], axis=0)
    mask = 2 * fg_votes >= len(seq)
    pixels[~mask] = 0.0
    return NormalizedSilhouette(
        pixels=pixels, mask=mask, source_id=seq[0].source_id, frame_index=-1
    )


def load_frame(path: str | Path) -> RGBFrame:
    """Read an 8-bit RGB image; a sibling `<stem>_mask.png` becomes the mask."""
    path = Path(path)
    with Image.open(path) as im:
        pixels = np.asarray(im.convert("RGB"))
    mask = None
    mask_path = path.with_name(path.stem + MASK_SUFFIX)
    if mask_path.exists():
        with Image.open(mask_path) as im:
            mask = np.asarray(im.convert("L")) != 0
    return RGBFrame(pixels=pixels, mask=mask)


def prepare_sequence(
    paths,
    threshold: float = DEFAULT_FG_THRESHOLD,
    target_h: int = DEFAULT_HEIGHT,
    target_w: int = DEFAULT_WIDTH,
    source_id: str = "",
) -> list[NormalizedSilhouette]:
    """Load, segment, and normalize a frame sequence from disk."""
    out = []
    for i, p in enumerate(paths):
        frame = extract_silhouette(load_frame(p), threshold)
        out.append(normalize(frame, target_h, target_w, source_id=source_id, frame_index=i))
    if not out:
        raise EmptySequenceError("no frames in sequence")
    return out
