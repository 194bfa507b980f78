"""Command line front end.

Subcommands: synth | train | enroll | identify | eval | elbow. Every command
requires an --out directory and writes a run manifest there before any other
output. A JSON config file may supply any flag's value; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .clustering import elbow_curve, fit_kmeans, save_cluster_model
from .datasets import make_pairs, scan_dataset, split_gallery_probe
from .descriptors import build_feature_matrix, save_descriptor_table, sequence_descriptor
from .evaluation import ExperimentConfig, ablation, load_index_sequences, sweep
from .exceptions import (
    BadConfigError,
    DegeneratePairsError,
    EmptyDatasetError,
    HierReidError,
    InsufficientFramesError,
    InsufficientSubjectsError,
    LayoutMismatchError,
    PolicyInfeasibleError,
)
from .manifest import write_manifest
from .matcher import HierarchicalMatcher, load_gallery, save_gallery
from .siamese import SiameseConfig, init_model, load_checkpoint, save_checkpoint
from .silhouette import DEFAULT_FG_THRESHOLD, DEFAULT_HEIGHT, DEFAULT_WIDTH, prepare_sequence
from .synth import SynthConfig, synth_generate
from .training import TrainConfig, train

EXIT_USAGE = 2
EXIT_DEGENERATE_PAIRS = 3
EXIT_DATA = 4
EXIT_PIPELINE = 5

_DATA_ERRORS = (
    EmptyDatasetError,
    LayoutMismatchError,
    InsufficientFramesError,
    InsufficientSubjectsError,
    PolicyInfeasibleError,
    BadConfigError,
    FileNotFoundError,
)


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in str(text).replace(",", " ").split()]


def _resolve(args: argparse.Namespace, defaults: dict, parser: argparse.ArgumentParser) -> dict:
    """Merge defaults < config file < explicit flags (flags are parsed with
    default=None so an unset flag is distinguishable)."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config) as f:
            loaded = json.load(f)
        unknown = set(loaded) - set(defaults)
        if unknown:
            parser.error(f"config file has unknown keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if not cfg.get("out"):
        parser.error("--out is required")
    return cfg


def _probe_frames(directory: Path) -> list[Path]:
    frames = sorted(
        p for p in Path(directory).iterdir()
        if p.suffix.lower() in {".png", ".jpg", ".jpeg"} and not p.name.endswith("_mask.png")
    )
    if not frames:
        raise EmptyDatasetError(f"no frames under probe directory {directory}")
    return frames


# -- subcommand handlers ------------------------------------------------------

SYNTH_DEFAULTS = dict(subjects=20, frames=10, size="120x60", spread=1.0,
                      illum_shift=0.02, noise=0.01, similar_frac=0.0, seed=0, out="")


def cmd_synth(args, parser) -> int:
    cfg = _resolve(args, SYNTH_DEFAULTS, parser)
    try:
        h, w = (int(t) for t in str(cfg["size"]).lower().split("x"))
    except ValueError:
        parser.error(f"--size must look like 120x60, got {cfg['size']}")
    out = Path(cfg["out"])
    write_manifest(out, "synth", cfg, __version__)
    synth_cfg = SynthConfig(
        n_subjects=int(cfg["subjects"]), frames_per_camera=int(cfg["frames"]),
        height=h, width=w, palette_spread=float(cfg["spread"]),
        illumination_shift=float(cfg["illum_shift"]), noise_level=float(cfg["noise"]),
        similar_fraction=float(cfg["similar_frac"]), seed=int(cfg["seed"]),
    )
    manifest = synth_generate(synth_cfg, out)
    print(f"wrote dataset for {synth_cfg.n_subjects} subjects under {out}")
    print(f"ground truth: {manifest}")
    return 0


TRAIN_DEFAULTS = dict(data="", layout="per-subject-dirs", n_pos=200, n_neg=200,
                      eta=0.01, gamma=0.0005, epochs=50, batch_size=32,
                      loss_thresh=1e-5, err_thresh=1e-4, seed=0,
                      target_h=DEFAULT_HEIGHT, target_w=DEFAULT_WIDTH,
                      fg_threshold=DEFAULT_FG_THRESHOLD, out="")


def cmd_train(args, parser) -> int:
    cfg = _resolve(args, TRAIN_DEFAULTS, parser)
    if not cfg["data"]:
        parser.error("--data is required")
    if int(cfg["epochs"]) < 1:
        parser.error(f"--epochs must be >= 1, got {cfg['epochs']}")
    out = Path(cfg["out"])
    write_manifest(out, "train", cfg, __version__)

    index = scan_dataset(cfg["data"], cfg["layout"])
    pairs = make_pairs(index, int(cfg["n_pos"]), int(cfg["n_neg"]), int(cfg["seed"]))

    cache: dict = {}

    def silhouette_of(path):
        if path not in cache:
            cache[path] = prepare_sequence([path], float(cfg["fg_threshold"]),
                                           int(cfg["target_h"]), int(cfg["target_w"]))[0]
        return cache[path]

    stream = [(silhouette_of(p.path_a), silhouette_of(p.path_b), p.label) for p in pairs]

    part_h = int(cfg["target_h"]) // 3
    model = init_model(SiameseConfig(part_height=part_h, part_width=int(cfg["target_w"])),
                       seed=int(cfg["seed"]))
    train_cfg = TrainConfig(
        eta=float(cfg["eta"]), gamma=float(cfg["gamma"]), batch_size=int(cfg["batch_size"]),
        max_epochs=int(cfg["epochs"]), loss_threshold=float(cfg["loss_thresh"]),
        error_threshold=float(cfg["err_thresh"]), seed=int(cfg["seed"]),
    )
    model, report = train(model, stream, train_cfg)

    checkpoint = out / "checkpoint.npz"
    save_checkpoint(checkpoint, model, report)
    report.write_csv(out / "training_log.csv")
    print(f"epochs={report.epochs_run} loss={report.final_loss:.6g} "
          f"error_rate={report.final_error_rate:.6g} stop={report.stop_reason}")
    print(f"checkpoint: {checkpoint}")
    return 0


ENROLL_DEFAULTS = dict(data="", layout="per-subject-dirs", split="camera-split",
                       K=100, seed=0, checkpoint="", target_h=DEFAULT_HEIGHT,
                       target_w=DEFAULT_WIDTH, fg_threshold=DEFAULT_FG_THRESHOLD, out="")


def cmd_enroll(args, parser) -> int:
    cfg = _resolve(args, ENROLL_DEFAULTS, parser)
    if not cfg["data"] or not cfg["checkpoint"]:
        parser.error("--data and --checkpoint are required")
    out = Path(cfg["out"])
    write_manifest(out, "enroll", cfg, __version__, input_paths=[cfg["checkpoint"]])

    index = scan_dataset(cfg["data"], cfg["layout"])
    if cfg["split"] != "none":
        index, _ = split_gallery_probe(index, cfg["split"], int(cfg["seed"]))
    model = load_checkpoint(cfg["checkpoint"])
    matcher = HierarchicalMatcher(
        siamese_model=model, n_clusters=int(cfg["K"]), seed=int(cfg["seed"]),
        target_h=int(cfg["target_h"]), target_w=int(cfg["target_w"]),
        fg_threshold=float(cfg["fg_threshold"]),
    ).fit(index)

    gallery_path = out / "gallery.npz"
    save_gallery(gallery_path, matcher, checkpoint_ref=str(cfg["checkpoint"]))
    save_cluster_model(out / "clusters.bin", matcher.cluster_)
    save_descriptor_table(out / "descriptors.bin", matcher.matrix_)
    print(f"enrolled {len(matcher.entries_)} subjects into "
          f"{matcher.cluster_.centers_.shape[0]} clusters")
    print(f"gallery: {gallery_path}")
    return 0


IDENTIFY_DEFAULTS = dict(gallery="", probe="", kappa=1, checkpoint="",
                         fg_threshold=DEFAULT_FG_THRESHOLD, out="")


def cmd_identify(args, parser) -> int:
    cfg = _resolve(args, IDENTIFY_DEFAULTS, parser)
    if not cfg["gallery"] or not cfg["probe"]:
        parser.error("--gallery and --probe are required")
    out = Path(cfg["out"])
    write_manifest(out, "identify", cfg, __version__,
                   input_paths=[cfg["gallery"], cfg["checkpoint"]])

    model = load_checkpoint(cfg["checkpoint"]) if cfg["checkpoint"] else None
    matcher = load_gallery(cfg["gallery"], siamese_model=model)
    probe_seq = prepare_sequence(_probe_frames(cfg["probe"]), float(cfg["fg_threshold"]),
                                 matcher.target_h, matcher.target_w)
    result = matcher.identify(probe_seq, int(cfg["kappa"]))

    payload = result.to_json()
    (out / "match.json").write_text(payload + "\n")
    print(payload)
    return 0


EVAL_DEFAULTS = dict(data="", layout="per-subject-dirs", split_policy="camera-split",
                     checkpoint="", K="100", kappa="1", probes=None, seed=0,
                     max_rank=10, ablation=False, target_h=DEFAULT_HEIGHT,
                     target_w=DEFAULT_WIDTH, fg_threshold=DEFAULT_FG_THRESHOLD, out="")


def cmd_eval(args, parser) -> int:
    cfg = _resolve(args, EVAL_DEFAULTS, parser)
    if not cfg["data"] or not cfg["checkpoint"]:
        parser.error("--data and --checkpoint are required")
    out = Path(cfg["out"])
    write_manifest(out, "eval", cfg, __version__, input_paths=[cfg["checkpoint"]])

    exp = ExperimentConfig(
        data_root=cfg["data"], checkpoint=cfg["checkpoint"], out_dir=str(out),
        layout=cfg["layout"], split_policy=cfg["split_policy"],
        k_values=_int_list(cfg["K"]), kappa_values=_int_list(cfg["kappa"]),
        probe_count=None if cfg["probes"] is None else int(cfg["probes"]),
        seed=int(cfg["seed"]), max_rank=int(cfg["max_rank"]),
        target_h=int(cfg["target_h"]), target_w=int(cfg["target_w"]),
        fg_threshold=float(cfg["fg_threshold"]),
    )
    reports = sweep(exp)
    for report in reports:
        print(f"K={report.n_clusters} kappa={report.kappa} rank1={report.rank1:.4f} "
              f"mean_comparisons={report.mean_comparisons:.2f} "
              f"mean_ms={report.mean_ms:.2f}")
    if cfg["ablation"]:
        with_c, without_c = ablation(exp)
        print(f"ablation rank1 with={with_c.rank1:.4f} without={without_c.rank1:.4f} "
              f"comparisons with={with_c.mean_comparisons:.2f} "
              f"without={without_c.mean_comparisons:.2f}")
    print(f"reports under {out}")
    return 0


ELBOW_DEFAULTS = dict(data="", layout="per-subject-dirs", k_list="", seed=0,
                      restarts=1, target_h=DEFAULT_HEIGHT, target_w=DEFAULT_WIDTH,
                      fg_threshold=DEFAULT_FG_THRESHOLD, out="")


def cmd_elbow(args, parser) -> int:
    cfg = _resolve(args, ELBOW_DEFAULTS, parser)
    if not cfg["data"] or not cfg["k_list"]:
        parser.error("--data and --k-list are required")
    out = Path(cfg["out"])
    write_manifest(out, "elbow", cfg, __version__)

    index = scan_dataset(cfg["data"], cfg["layout"])
    sequences = load_index_sequences(index, float(cfg["fg_threshold"]),
                                     int(cfg["target_h"]), int(cfg["target_w"]))
    matrix = build_feature_matrix(
        [sequence_descriptor(sequences[sid], sid) for sid in sorted(sequences)]
    )
    points = elbow_curve(matrix, _int_list(cfg["k_list"]), seed=int(cfg["seed"]),
                         n_restarts=int(cfg["restarts"]))
    with open(out / "elbow.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["k", "error"])
        for p in points:
            w.writerow([p.k, repr(p.error)])
    for p in points:
        print(f"k={p.k} error={p.error:.6g}")
    return 0


# -- parser wiring ------------------------------------------------------------

def _add(sub, name, handler, helptext, flags):
    p = sub.add_parser(name, help=helptext)
    p.add_argument("--config", help="JSON file supplying any of this command's flags")
    for flag, kwargs in flags.items():
        p.add_argument(flag, default=None, **kwargs)
    p.set_defaults(handler=handler, parser=p)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hier-reid",
        description="Two-stage person re-identification: color-cluster pruning "
                    "plus part-based siamese verification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    _add(sub, "synth", cmd_synth, "generate a synthetic multi-camera dataset", {
        "--subjects": dict(type=int), "--frames": dict(type=int),
        "--size": dict(help="frame size HxW, e.g. 120x60"),
        "--spread": dict(type=float), "--illum-shift": dict(type=float, dest="illum_shift"),
        "--noise": dict(type=float),
        "--similar-frac": dict(type=float, dest="similar_frac"),
        "--seed": dict(type=int), "--out": dict(),
    })
    _add(sub, "train", cmd_train, "train the siamese verifier on image pairs", {
        "--data": dict(), "--layout": dict(),
        "--n-pos": dict(type=int, dest="n_pos"), "--n-neg": dict(type=int, dest="n_neg"),
        "--eta": dict(type=float), "--gamma": dict(type=float),
        "--epochs": dict(type=int), "--batch-size": dict(type=int, dest="batch_size"),
        "--loss-thresh": dict(type=float, dest="loss_thresh"),
        "--err-thresh": dict(type=float, dest="err_thresh"),
        "--target-h": dict(type=int, dest="target_h"),
        "--target-w": dict(type=int, dest="target_w"),
        "--fg-threshold": dict(type=float, dest="fg_threshold"),
        "--seed": dict(type=int), "--out": dict(),
    })
    _add(sub, "enroll", cmd_enroll, "enroll a gallery with color clustering", {
        "--data": dict(), "--layout": dict(),
        "--split": dict(choices=["camera-split", "frame-split", "none"]),
        "--K": dict(type=int, dest="K"), "--seed": dict(type=int),
        "--checkpoint": dict(),
        "--target-h": dict(type=int, dest="target_h"),
        "--target-w": dict(type=int, dest="target_w"),
        "--fg-threshold": dict(type=float, dest="fg_threshold"),
        "--out": dict(),
    })
    _add(sub, "identify", cmd_identify, "identify one probe sequence", {
        "--gallery": dict(), "--probe": dict(help="directory with probe frames"),
        "--kappa": dict(type=int), "--checkpoint": dict(),
        "--fg-threshold": dict(type=float, dest="fg_threshold"),
        "--out": dict(),
    })
    _add(sub, "eval", cmd_eval, "run the K/kappa sweep and optional ablation", {
        "--data": dict(), "--layout": dict(),
        "--split-policy": dict(dest="split_policy",
                               choices=["camera-split", "frame-split"]),
        "--checkpoint": dict(),
        "--K": dict(dest="K", help="comma-separated cluster counts"),
        "--kappa": dict(help="comma-separated top-cluster counts"),
        "--probes": dict(type=int), "--seed": dict(type=int),
        "--max-rank": dict(type=int, dest="max_rank"),
        "--ablation": dict(action="store_true"),
        "--target-h": dict(type=int, dest="target_h"),
        "--target-w": dict(type=int, dest="target_w"),
        "--fg-threshold": dict(type=float, dest="fg_threshold"),
        "--out": dict(),
    })
    _add(sub, "elbow", cmd_elbow, "emit the clustering-error elbow CSV", {
        "--data": dict(), "--layout": dict(),
        "--k-list": dict(dest="k_list", help="comma-separated K values"),
        "--seed": dict(type=int), "--restarts": dict(type=int),
        "--target-h": dict(type=int, dest="target_h"),
        "--target-w": dict(type=int, dest="target_w"),
        "--fg-threshold": dict(type=float, dest="fg_threshold"),
        "--out": dict(),
    })
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args, args.parser)
    except DegeneratePairsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE_PAIRS
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HierReidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
