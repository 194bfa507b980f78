import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from hier_reid.cli import (
    EXIT_DATA,
    EXIT_DEGENERATE_PAIRS,
    SYNTH_DEFAULTS,
    TRAIN_DEFAULTS,
    main,
)
from hier_reid.manifest import MANIFEST_FILENAME


def digest_tree(root, skip=(MANIFEST_FILENAME,)):
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file() and path.name not in skip:
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def run(*argv):
    return main([str(a) for a in argv])


class TestSynthCommand:
    def test_count_contract(self, tmp_path):
        out = tmp_path / "ds"
        assert run("synth", "--subjects", 4, "--frames", 3, "--seed", 7,
                   "--out", out) == 0
        frames = [p for p in out.rglob("*.png") if not p.name.endswith("_mask.png")]
        assert len(frames) == 4 * 2 * 3
        assert (out / "manifest.csv").exists()
        assert (out / MANIFEST_FILENAME).exists()

    def test_missing_out_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            run("synth", "--subjects", 4)
        assert excinfo.value.code == 2

    def test_same_flags_twice_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert run("synth", "--subjects", 3, "--frames", 2, "--seed", 5,
                       "--out", tmp_path / name) == 0
        assert digest_tree(tmp_path / "a") == digest_tree(tmp_path / "b")

    def test_bad_config_exit_code(self, tmp_path):
        assert run("synth", "--subjects", 1, "--out", tmp_path / "x") == EXIT_DATA


class TestTrainCommand:
    def test_zero_epochs_is_usage_error(self, tmp_path, synth_root):
        with pytest.raises(SystemExit) as excinfo:
            run("train", "--data", synth_root, "--epochs", 0, "--out", tmp_path)
        assert excinfo.value.code == 2

    def test_defaults_are_the_tuned_operating_point(self):
        assert TRAIN_DEFAULTS["eta"] == 0.01
        assert TRAIN_DEFAULTS["gamma"] == 0.0005
        assert TRAIN_DEFAULTS["loss_thresh"] == 1e-5
        assert TRAIN_DEFAULTS["err_thresh"] == 1e-4

    def test_degenerate_pairs_exit_code(self, tmp_path):
        # one subject only: positives exist, negatives impossible -> request none
        import shutil

        from hier_reid.synth import SynthConfig, synth_generate

        data = tmp_path / "one"
        synth_generate(SynthConfig(n_subjects=2, frames_per_camera=2, seed=0), data)
        shutil.rmtree(data / "s001")
        code = run("train", "--data", data, "--n-pos", 2, "--n-neg", 0,
                   "--epochs", 1, "--out", tmp_path / "out")
        assert code == EXIT_DEGENERATE_PAIRS

    def test_full_train_writes_checkpoint_and_log(self, tmp_path, synth_root):
        out = tmp_path / "run"
        code = run("train", "--data", synth_root, "--n-pos", 20, "--n-neg", 20,
                   "--epochs", 12, "--seed", 3, "--out", out)
        assert code == 0
        assert (out / "checkpoint.npz").exists()
        log = (out / "training_log.csv").read_text().splitlines()
        assert log[0] == "epoch,loss,error_rate"
        manifest = json.loads((out / MANIFEST_FILENAME).read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["eta"] == 0.01
        assert manifest["config"]["gamma"] == 0.0005


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, synth_root):
    out = tmp_path_factory.mktemp("cli-train")
    code = run("train", "--data", synth_root, "--n-pos", 40, "--n-neg", 40,
               "--epochs", 30, "--seed", 3, "--out", out)
    assert code == 0
    return out / "checkpoint.npz"


class TestEnrollIdentify:
    def test_enroll_then_identify(self, tmp_path, synth_root, trained_run):
        gallery_dir = tmp_path / "gal"
        assert run("enroll", "--data", synth_root, "--checkpoint", trained_run,
                   "--K", 3, "--seed", 0, "--out", gallery_dir) == 0
        assert (gallery_dir / "gallery.npz").exists()
        assert (gallery_dir / "clusters.bin").exists()
        assert (gallery_dir / "descriptors.bin").exists()

        probe_dir = Path(synth_root) / "s002" / "cam2"
        out = tmp_path / "match"
        assert run("identify", "--gallery", gallery_dir / "gallery.npz",
                   "--probe", probe_dir, "--kappa", 1, "--out", out) == 0
        payload = json.loads((out / "match.json").read_text())
        assert payload["predicted_id"] == "s002"
        assert set(payload) >= {"predicted_id", "ranked", "reduced_set_ids",
                                "n_comparisons"}

    def test_enroll_clamps_large_k(self, tmp_path, synth_root, trained_run):
        out = tmp_path / "gal"
        assert run("enroll", "--data", synth_root, "--checkpoint", trained_run,
                   "--K", 100, "--out", out) == 0


class TestEvalCommand:
    def test_sweep_and_ablation_outputs(self, tmp_path, synth_root, trained_run):
        out = tmp_path / "eval"
        code = run("eval", "--data", synth_root, "--checkpoint", trained_run,
                   "--K", "3,6", "--kappa", "1", "--max-rank", 6,
                   "--ablation", "--out", out)
        assert code == 0
        for name in ("cmc_3_1.csv", "cmc_6_1.csv", "sweep_summary.csv",
                     "ablation.csv"):
            assert (out / name).exists(), name
        summary = (out / "sweep_summary.csv").read_text().splitlines()
        assert summary[0] == "K,kappa,rank1,mean_comparisons,mean_ms"
        assert len(summary) == 3


class TestElbowCommand:
    def test_elbow_zero_at_k_equals_n(self, tmp_path, synth_root):
        out = tmp_path / "elbow"
        assert run("elbow", "--data", synth_root, "--k-list", "6",
                   "--out", out) == 0
        lines = (out / "elbow.csv").read_text().splitlines()
        assert lines[0] == "k,error"
        k, err = lines[1].split(",")
        assert (int(k), float(err)) == (6, 0.0)

    def test_elbow_k1_matches_variance_oracle(self, tmp_path, synth_root,
                                              gallery_sequences, probe_sequences):
        out = tmp_path / "elbow"
        assert run("elbow", "--data", synth_root, "--k-list", "1",
                   "--out", out) == 0
        (line,) = (out / "elbow.csv").read_text().splitlines()[1:]
        reported = float(line.split(",")[1])

        from hier_reid.descriptors import build_feature_matrix, sequence_descriptor
        from helpers import total_variance_about_mean

        all_seqs = {}
        for sid in gallery_sequences:
            all_seqs[sid] = gallery_sequences[sid] + probe_sequences[sid]
        matrix = build_feature_matrix(
            [sequence_descriptor(all_seqs[sid], sid) for sid in sorted(all_seqs)]
        )
        assert reported == pytest.approx(total_variance_about_mean(matrix.rows),
                                         rel=1e-9)


class TestConfigFile:
    def test_config_supplies_flags_and_cli_overrides(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"subjects": 3, "frames": 2, "seed": 5}))
        out = tmp_path / "ds"
        assert run("synth", "--config", cfg_path, "--frames", 4, "--out", out) == 0
        manifest = json.loads((out / MANIFEST_FILENAME).read_text())
        assert manifest["config"]["subjects"] == 3  # from config file
        assert manifest["config"]["frames"] == 4    # flag overrides config
        frames = [p for p in out.rglob("*.png") if not p.name.endswith("_mask.png")]
        assert len(frames) == 3 * 2 * 4

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"bogus": 1}))
        with pytest.raises(SystemExit) as excinfo:
            run("synth", "--config", cfg_path, "--out", tmp_path / "x")
        assert excinfo.value.code == 2


class TestManifests:
    def test_every_command_writes_manifest_first(self, tmp_path, synth_root):
        out = tmp_path / "elbow"
        run("elbow", "--data", synth_root, "--k-list", "2", "--out", out)
        manifest = json.loads((out / MANIFEST_FILENAME).read_text())
        assert manifest["tool"] == "hier-reid"
        assert manifest["command"] == "elbow"
        assert "created_utc" in manifest
        assert manifest["config"]["k_list"] == "2"

    def test_manifest_records_input_hashes(self, tmp_path, synth_root, trained_run):
        out = tmp_path / "gal"
        run("enroll", "--data", synth_root, "--checkpoint", trained_run,
            "--K", 2, "--out", out)
        manifest = json.loads((out / MANIFEST_FILENAME).read_text())
        assert str(trained_run) in manifest["input_hashes"]
        digest = hashlib.sha256(Path(trained_run).read_bytes()).hexdigest()
        assert manifest["input_hashes"][str(trained_run)] == digest


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as excinfo:
        run("--version")
    assert excinfo.value.code == 0
    assert "hier-reid" in capsys.readouterr().out
