"""Dataset ingestion: directory scanning, training-pair generation, and
gallery/probe splitting.

Two on-disk layouts are supported:

* ``per-subject-dirs`` -- ``root/<subject_id>/<camera_id>/frame.png``
* ``two-camera-dirs``  -- ``root/<camera_dir>/<subject_id>[_...].png`` with one
  directory per camera and the subject id encoded in the file name up to the
  first underscore.

Sibling ``*_mask.png`` files are treated as masks, never as frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import (
    EmptyDatasetError,
    InsufficientFramesError,
    InsufficientSubjectsError,
    LayoutMismatchError,
    PolicyInfeasibleError,
)
from .silhouette import MASK_SUFFIX

IMAGE_EXTS = {".png", ".jpg", ".jpeg"}

LAYOUT_PER_SUBJECT = "per-subject-dirs"
LAYOUT_TWO_CAMERA = "two-camera-dirs"


@dataclass
class DatasetIndex:
    """subject_id -> camera_id -> ordered frame paths."""

    subjects: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    def subject_ids(self) -> list[str]:
        return sorted(self.subjects)

    def cameras(self, subject_id: str) -> list[str]:
        return sorted(self.subjects[subject_id])

    def frames_of(self, subject_id: str) -> list[Path]:
        """All frames of a subject across cameras, camera-sorted order."""
        out = []
        for cam in self.cameras(subject_id):
            out.extend(self.subjects[subject_id][cam])
        return out

    def n_frames(self, subject_id: str) -> int:
        return len(self.frames_of(subject_id))


@dataclass
class PairSample:
    path_a: Path
    path_b: Path
    label: int


def _is_frame(path: Path) -> bool:
    return path.suffix.lower() in IMAGE_EXTS and not path.name.endswith(MASK_SUFFIX)


def _readable(path: Path) -> bool:
    try:
        with Image.open(path) as im:
            im.verify()
        return True
    except Exception:
        return False


def _collect_frames(directory: Path, warnings: list) -> list[Path]:
    frames = []
    for p in sorted(directory.iterdir()):
        if not p.is_file() or not _is_frame(p):
            continue
        if _readable(p):
            frames.append(p)
        else:
            warnings.append(f"unreadable frame skipped: {p}")
    return frames


def scan_dataset(root: str | Path, layout: str = LAYOUT_PER_SUBJECT) -> DatasetIndex:
    """Build a deterministic index of the dataset under `root`.

    Unreadable files are recorded as warnings rather than silently dropped.
    """
    root = Path(root)
    if not root.is_dir():
        raise EmptyDatasetError(f"dataset root {root} does not exist")
    index = DatasetIndex()

    if layout == LAYOUT_PER_SUBJECT:
        for subject_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            cameras = {}
            for cam_dir in sorted(p for p in subject_dir.iterdir() if p.is_dir()):
                frames = _collect_frames(cam_dir, index.warnings)
                if frames:
                    cameras[cam_dir.name] = frames
            # frames directly under the subject dir -> single implicit camera
            loose = _collect_frames(subject_dir, index.warnings)
            if loose and cameras:
                raise LayoutMismatchError(
                    f"{subject_dir}: mixes camera subdirectories and loose frames"
                )
            if loose:
                cameras["cam1"] = loose
            if cameras:
                index.subjects[subject_dir.name] = cameras
    elif layout == LAYOUT_TWO_CAMERA:
        cam_dirs = sorted(p for p in root.iterdir() if p.is_dir())
        if not cam_dirs:
            raise LayoutMismatchError(f"{root}: no camera directories found")
        for cam_dir in cam_dirs:
            for frame in _collect_frames(cam_dir, index.warnings):
                subject = frame.stem.split("_")[0]
                index.subjects.setdefault(subject, {}).setdefault(cam_dir.name, []).append(frame)
    else:
        raise LayoutMismatchError(f"unknown layout {layout!r}")

    if not index.subjects:
        raise EmptyDatasetError(f"no frames found under {root} with layout {layout}")
    return index


def make_pairs(index: DatasetIndex, n_pos: int, n_neg: int, seed: int = 0) -> list[PairSample]:
    """Sample training pairs without replacement.

    Positive pairs prefer cross-camera frame combinations when a subject was
    seen by more than one camera; negatives draw frames from two different
    subjects. Exactly n_pos + n_neg pairs come back, label-1 first.
    """
    rng = np.random.default_rng(seed)
    ids = index.subject_ids()

    if n_neg > 0 and len(ids) < 2:
        raise InsufficientSubjectsError("negative pairs need at least two subjects")

    cross, same = [], []
    for sid in ids:
        cams = index.cameras(sid)
        per_cam = [index.subjects[sid][c] for c in cams]
        for i in range(len(per_cam)):
            for a in per_cam[i]:
                for j in range(i, len(per_cam)):
                    for b in per_cam[j]:
                        if i == j:
                            if str(a) < str(b):
                                same.append((a, b))
                        else:
                            cross.append((a, b))
    rng.shuffle(cross)
    rng.shuffle(same)
    positives = (cross + same)[:n_pos]
    if len(positives) < n_pos:
        raise InsufficientFramesError(
            f"only {len(positives)} distinct positive pairs available, {n_pos} requested"
        )

    negatives: list[tuple[Path, Path]] = []
    seen = set()
    max_tries = 50 * max(1, n_neg)
    tries = 0
    while len(negatives) < n_neg and tries < max_tries:
        tries += 1
        ia, ib = rng.choice(len(ids), size=2, replace=False)
        fa = index.frames_of(ids[ia])
        fb = index.frames_of(ids[ib])
        pa = fa[int(rng.integers(len(fa)))]
        pb = fb[int(rng.integers(len(fb)))]
        key = tuple(sorted((str(pa), str(pb))))
        if key in seen:
            continue
        seen.add(key)
        negatives.append((pa, pb))
    if len(negatives) < n_neg:
        # rejection sampling exhausted; enumerate whatever remains
        all_neg = []
        for i, sa in enumerate(ids):
            for sb in ids[i + 1:]:
                for pa in index.frames_of(sa):
                    for pb in index.frames_of(sb):
                        if tuple(sorted((str(pa), str(pb)))) not in seen:
                            all_neg.append((pa, pb))
        rng.shuffle(all_neg)
        negatives.extend(all_neg[: n_neg - len(negatives)])
    if len(negatives) < n_neg:
        raise InsufficientFramesError(
            f"only {len(negatives)} distinct negative pairs available, {n_neg} requested"
        )

    return (
        [PairSample(a, b, 1) for a, b in positives]
        + [PairSample(a, b, 0) for a, b in negatives]
    )


def pair_subject(index: DatasetIndex, path: Path) -> str:
    """Recover the subject id owning a frame path (used to audit pair labels)."""
    for sid in index.subject_ids():
        for cam in index.cameras(sid):
            if path in index.subjects[sid][cam]:
                return sid
    raise KeyError(f"{path} not in index")


POLICY_CAMERA = "camera-split"
POLICY_FRAME = "frame-split"


def split_gallery_probe(index: DatasetIndex, policy: str = POLICY_CAMERA, seed: int = 0
                        ) -> tuple[DatasetIndex, DatasetIndex]:
    """Split into gallery and probe sets; identities stay closed-set.

    camera-split: each subject's first camera goes to the gallery, the second
    to the probe set. frame-split: each camera's frame list is shuffled and
    halved per subject (gallery keeps the extra frame when odd).
    """
    gallery, probe = DatasetIndex(), DatasetIndex()
    rng = np.random.default_rng(seed)

    if policy == POLICY_CAMERA:
        for sid in index.subject_ids():
            cams = index.cameras(sid)
            if len(cams) < 2:
                raise PolicyInfeasibleError(
                    f"camera-split needs >= 2 cameras per subject; {sid} has {len(cams)}"
                )
            gallery.subjects[sid] = {cams[0]: list(index.subjects[sid][cams[0]])}
            probe.subjects[sid] = {cams[1]: list(index.subjects[sid][cams[1]])}
    elif policy == POLICY_FRAME:
        for sid in index.subject_ids():
            if index.n_frames(sid) < 2:
                raise PolicyInfeasibleError(
                    f"frame-split needs >= 2 frames per subject; {sid} has {index.n_frames(sid)}"
                )
            g_cams, p_cams = {}, {}
            for cam in index.cameras(sid):
                frames = list(index.subjects[sid][cam])
                order = rng.permutation(len(frames))
                half = (len(frames) + 1) // 2
                g = sorted(frames[i] for i in order[:half])
                p = sorted(frames[i] for i in order[half:])
                if g:
                    g_cams[cam] = g
                if p:
                    p_cams[cam] = p
            if not p_cams:  # all cameras had a single frame; move one over
                cam = sorted(g_cams)[-1]
                p_cams[cam] = [g_cams[cam].pop()]
                if not g_cams[cam]:
                    del g_cams[cam]
            gallery.subjects[sid] = g_cams
            probe.subjects[sid] = p_cams
    else:
        raise PolicyInfeasibleError(f"unknown split policy {policy!r}")

    return gallery, probe
