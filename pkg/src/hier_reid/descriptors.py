"""Part-wise color histogram descriptors.

A descriptor is a 144-entry vector laid out part-major: for each body part
(head, torso, leg) and each channel (R, G, B) a 16-bin histogram of the
foreground intensities, each nonzero block normalized to sum 1. Quantizing
to 16 bins absorbs mild illumination differences between camera views.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DuplicateIdError, EmptySequenceError
from .silhouette import NormalizedSilhouette, permutation_invariant_mean, split_parts

N_PARTS = 3
N_CHANNELS = 3
N_BINS = 16
DESCRIPTOR_DIM = N_PARTS * N_CHANNELS * N_BINS  # 144

_TABLE_MAGIC = b"REIDDESC"
_TABLE_VERSION = 1


@dataclass
class ColorDescriptor:
    values: np.ndarray  # (144,) float64
    subject_id: str
    n_frames: int


@dataclass
class FeatureMatrix:
    rows: np.ndarray  # (N, 144) float64
    ids: list[str]

    def __len__(self):
        return self.rows.shape[0]


def _part_histogram(part: NormalizedSilhouette) -> np.ndarray:
    """16-bin histograms of one part's foreground pixels, per channel.

    Bin b covers [b/16, (b+1)/16), the last bin closed at 1. An all-background
    part yields an all-zero block.
    """
    out = np.zeros((N_CHANNELS, N_BINS), dtype=np.float64)
    fg = part.mask
    count = int(fg.sum())
    if count == 0:
        return out
    for c in range(N_CHANNELS):
        vals = part.pixels[..., c][fg]
        bins = np.minimum((vals * N_BINS).astype(np.int64), N_BINS - 1)
        out[c] = np.bincount(bins, minlength=N_BINS) / count
    return out


def frame_descriptor(sil: NormalizedSilhouette) -> np.ndarray:
    """144-dim histogram vector for one silhouette frame."""
    parts = split_parts(sil)
    return np.concatenate([_part_histogram(p).ravel() for p in parts])


def _renormalize_blocks(vec: np.ndarray) -> np.ndarray:
    """Rescale each 16-bin block to sum 1, leaving all-zero blocks untouched."""
    out = vec.copy()
    blocks = out.reshape(N_PARTS * N_CHANNELS, N_BINS)
    sums = blocks.sum(axis=1)
    nonzero = sums > 0
    blocks[nonzero] /= sums[nonzero, None]
    return out


def sequence_descriptor(seq: list[NormalizedSilhouette], subject_id: str = "") -> ColorDescriptor:
    """Average the per-frame histograms of a walking sequence.

    Frames whose parts were empty contribute zero blocks, so the averaged
    blocks are renormalized to sum 1 where nonzero.
    """
    if not seq:
        raise EmptySequenceError("cannot build a descriptor from an empty sequence")
    stack = np.stack([frame_descriptor(s) for s in seq])
    mean = permutation_invariant_mean(stack)
    return ColorDescriptor(
        values=_renormalize_blocks(mean), subject_id=subject_id, n_frames=len(seq)
    )


def build_feature_matrix(descs: list[ColorDescriptor]) -> FeatureMatrix:
    """Stack descriptors row-wise, preserving input order."""
    if not descs:
        raise EmptySequenceError("need at least one descriptor")
    seen = set()
    for d in descs:
        if d.subject_id in seen:
            raise DuplicateIdError(f"duplicate subject id {d.subject_id!r}")
        seen.add(d.subject_id)
    rows = np.stack([np.asarray(d.values, dtype=np.float64) for d in descs])
    return FeatureMatrix(rows=rows, ids=[d.subject_id for d in descs])


def save_descriptor_table(path: str | Path, matrix: FeatureMatrix) -> None:
    """Write the versioned columnar descriptor file (layout documented in README)."""
    rows = np.ascontiguousarray(matrix.rows, dtype="<f8")
    with open(path, "wb") as f:
        f.write(_TABLE_MAGIC)
        f.write(struct.pack("<III", _TABLE_VERSION, rows.shape[0], rows.shape[1]))
        for sid, row in zip(matrix.ids, rows):
            encoded = sid.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(row.tobytes())


def load_descriptor_table(path: str | Path) -> FeatureMatrix:
    with open(path, "rb") as f:
        magic = f.read(len(_TABLE_MAGIC))
        if magic != _TABLE_MAGIC:
            raise ValueError(f"{path}: not a descriptor table (bad magic {magic!r})")
        version, n, dim = struct.unpack("<III", f.read(12))
        if version != _TABLE_VERSION:
            raise ValueError(f"{path}: unsupported descriptor table version {version}")
        ids = []
        rows = np.empty((n, dim), dtype=np.float64)
        for i in range(n):
            (id_len,) = struct.unpack("<I", f.read(4))
            ids.append(f.read(id_len).decode("utf-8"))
            rows[i] = np.frombuffer(f.read(8 * dim), dtype="<f8")
    return FeatureMatrix(rows=rows, ids=ids)
