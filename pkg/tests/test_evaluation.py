import numpy as np
import pytest

from hier_reid.evaluation import ExperimentConfig, ablation, cmc, sweep
from hier_reid.exceptions import UnknownGroundTruthError
from hier_reid.matcher import MatchResult
from hier_reid.siamese import save_checkpoint


def result(ranked, true_id, reduced=None):
    reduced = reduced if reduced is not None else [sid for sid, _ in ranked]
    return MatchResult(
        predicted_id=ranked[0][0], ranked=ranked, reduced_set_ids=reduced,
        n_comparisons=len(reduced), probe_descriptor=np.zeros(144), true_id=true_id,
    )


GALLERY = ["a", "b", "c", "d"]


class TestCmc:
    def test_all_correct_at_rank_one(self):
        results = [result([("a", 0.9), ("b", 0.1)], "a"),
                   result([("b", 0.8), ("a", 0.2)], "b")]
        assert np.array_equal(cmc(results, 5, GALLERY), np.ones(5))

    def test_hand_counted_mixed_ranks(self):
        results = [
            result([("a", 0.9), ("b", 0.5), ("c", 0.1)], "a"),   # hit at rank 1
            result([("a", 0.9), ("b", 0.5), ("c", 0.1)], "c"),   # hit at rank 3
        ]
        curve = cmc(results, 4, GALLERY)
        assert list(curve) == [0.5, 0.5, 1.0, 1.0]

    def test_pruned_true_id_misses_every_rank(self):
        results = [result([("b", 0.9), ("c", 0.5)], "a", reduced=["b", "c"])]
        assert np.array_equal(cmc(results, 6, GALLERY), np.zeros(6))

    def test_monotone_non_decreasing(self):
        rng = np.random.default_rng(0)
        results = []
        for _ in range(20):
            order = rng.permutation(GALLERY)
            ranked = [(sid, float(s)) for sid, s in
                      zip(order, sorted(rng.random(4), reverse=True))]
            results.append(result(ranked, GALLERY[int(rng.integers(4))]))
        curve = cmc(results, 4, GALLERY)
        assert all(curve[i + 1] >= curve[i] for i in range(3))
        assert curve[-1] <= 1.0

    def test_unknown_ground_truth(self):
        results = [result([("a", 0.9)], "zz")]
        with pytest.raises(UnknownGroundTruthError):
            cmc(results, 3, GALLERY)
        with pytest.raises(UnknownGroundTruthError):
            cmc([result([("a", 0.9)], None)], 3, GALLERY)


@pytest.fixture(scope="module")
def experiment(tmp_path_factory, synth_root, trained_model):
    out = tmp_path_factory.mktemp("eval-out")
    ckpt = out / "checkpoint.npz"
    save_checkpoint(ckpt, trained_model)

    def make(**kwargs):
        defaults = dict(
            data_root=str(synth_root), checkpoint=str(ckpt), out_dir=str(out),
            split_policy="camera-split", k_values=[3], kappa_values=[1], seed=0,
            max_rank=6,
        )
        defaults.update(kwargs)
        return ExperimentConfig(**defaults)

    return make, out


class TestSweep:
    def test_pruning_disabled_equals_rank_all(self, experiment):
        make, out = experiment
        reports = sweep(make(k_values=[6], kappa_values=[6]))
        _, baseline = ablation(make(), n_clusters=6, kappa=6)
        assert np.array_equal(reports[0].cmc, baseline.cmc)

    def test_larger_kappa_never_fewer_comparisons(self, experiment):
        make, _ = experiment
        reports = sweep(make(k_values=[3], kappa_values=[1, 2]))
        by_kappa = {r.kappa: r for r in reports}
        r1 = by_kappa[1].results
        r2 = by_kappa[2].results
        for a, b in zip(r1, r2):
            assert b.n_comparisons >= a.n_comparisons

    def test_perfect_rank1_on_distinct_palettes(self, experiment):
        make, _ = experiment
        reports = sweep(make(k_values=[3], kappa_values=[1]))
        assert reports[0].rank1 == 1.0

    def test_output_files_and_headers(self, experiment):
        make, out = experiment
        sweep(make(k_values=[3], kappa_values=[1]))
        cmc_file = out / "cmc_3_1.csv"
        summary = out / "sweep_summary.csv"
        assert cmc_file.exists() and summary.exists()
        assert cmc_file.read_text().splitlines()[0] == "rank,accuracy"
        assert summary.read_text().splitlines()[0] == \
            "K,kappa,rank1,mean_comparisons,mean_ms"

    def test_probe_count_selection(self, experiment):
        make, _ = experiment
        reports = sweep(make(k_values=[3], kappa_values=[1], probe_count=2))
        assert len(reports[0].results) == 2

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ExperimentConfig(data_root="x", checkpoint="y", out_dir="z", k_values=[])


class TestAblation:
    def test_without_arm_scans_full_gallery(self, experiment):
        make, _ = experiment
        with_c, without = ablation(make(), n_clusters=3, kappa=1)
        n = 6
        for r in without.results:
            assert r.n_comparisons == n
        assert without.mean_comparisons == n

    def test_with_clustering_fewer_comparisons(self, experiment):
        make, _ = experiment
        with_c, without = ablation(make(), n_clusters=3, kappa=1)
        assert with_c.mean_comparisons < without.mean_comparisons

    def test_arms_agree_when_single_cluster(self, experiment):
        make, _ = experiment
        with_c, without = ablation(make(), n_clusters=1, kappa=1)
        assert np.array_equal(with_c.cmc, without.cmc)
        for a, b in zip(with_c.results, without.results):
            assert a.ranked == b.ranked

    def test_rank1_matches_brute_force_argmax(self, experiment):
        make, _ = experiment
        _, without = ablation(make(), n_clusters=3, kappa=1)
        hits = sum(r.ranked[0][0] == r.true_id for r in without.results)
        assert without.rank1 == pytest.approx(hits / len(without.results))

    def test_ablation_csv(self, experiment):
        make, out = experiment
        ablation(make(), n_clusters=3, kappa=1)
        lines = (out / "ablation.csv").read_text().splitlines()
        assert lines[0] == "arm,rank,accuracy,mean_comparisons,mean_ms,median_ms"
        arms = {line.split(",")[0] for line in lines[1:]}
        assert arms == {"with-clustering", "without-clustering"}
