import pytest

from hier_reid.datasets import make_pairs, scan_dataset, split_gallery_probe
from hier_reid.siamese import init_model
from hier_reid.silhouette import prepare_sequence
from hier_reid.synth import SynthConfig, synth_generate
from hier_reid.training import TrainConfig, train


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Small distinct-palette dataset: 6 subjects x 2 cameras x 3 frames."""
    root = tmp_path_factory.mktemp("synth-data")
    synth_generate(SynthConfig(n_subjects=6, frames_per_camera=3, seed=7), root)
    return root


@pytest.fixture(scope="session")
def synth_index(synth_root):
    return scan_dataset(synth_root)


@pytest.fixture(scope="session")
def synth_split(synth_index):
    return split_gallery_probe(synth_index, "camera-split", seed=0)


def _load_sequences(index):
    return {sid: prepare_sequence(index.frames_of(sid), source_id=sid)
            for sid in index.subject_ids()}


@pytest.fixture(scope="session")
def gallery_sequences(synth_split):
    return _load_sequences(synth_split[0])


@pytest.fixture(scope="session")
def probe_sequences(synth_split):
    return _load_sequences(synth_split[1])


@pytest.fixture(scope="session")
def trained_model(synth_index):
    """Siamese model trained to zero error on the small synthetic set."""
    pairs = make_pairs(synth_index, n_pos=40, n_neg=40, seed=1)
    cache = {}

    def sil(path):
        if path not in cache:
            cache[path] = prepare_sequence([path])[0]
        return cache[path]

    stream = [(sil(p.path_a), sil(p.path_b), p.label) for p in pairs]
    model = init_model(seed=3)
    model, report = train(model, stream, TrainConfig(seed=3, max_epochs=30))
    assert report.final_error_rate == 0.0, "fixture training failed to separate"
    return model
