import numpy as np
import pytest

from topoclass.imaging import load_grayscale, read_manifest
from topoclass.persistence import betti_oracle
from topoclass.synthgen import (
    PlacementError,
    SynthSpec,
    generate_arrays,
    generate_dataset,
    generate_image,
    sample_rng,
)
from topoclass.vectorize import extract_features


@pytest.mark.parametrize("c", range(4))
def test_noise_free_topology(c):
    for i in range(25):
        img = generate_image(c, sample_rng(0, c, i), noise_amplitude=0)
        assert betti_oracle(img, 40) == (c + 1, 0)
        assert betti_oracle(img, 100) == (2 * c + 1, c)
        assert betti_oracle(img, 200) == (1, 0)


def test_examples():
    assert betti_oracle(generate_image(0, np.random.default_rng(1), noise_amplitude=0), 40) == (1, 0)
    assert betti_oracle(generate_image(3, np.random.default_rng(1), noise_amplitude=0), 100) == (7, 3)


def test_noise_bounds_and_determinism():
    a = generate_image(2, sample_rng(5, 2, 0), noise_amplitude=8)
    b = generate_image(2, sample_rng(5, 2, 0), noise_amplitude=8)
    assert a == b
    vals = set(np.unique(a.pixels))
    assert vals <= set(range(22, 39)) | set(range(52, 69)) | set(range(192, 209))
    assert a != generate_image(2, sample_rng(6, 2, 0), noise_amplitude=8)


def test_dataset_files(tmp_path):
    m = generate_dataset(SynthSpec((2, 2, 2, 2), (64, 64), 4, seed=1), tmp_path / "a")
    entries = read_manifest(m)
    assert len(entries) == 8 and len(list((tmp_path / "a").glob("*.pgm"))) == 8
    assert [e.label for e in entries] == [0, 0, 1, 1, 2, 2, 3, 3]
    assert load_grayscale(entries[0].image_path).pixels.shape == (64, 64)

    generate_dataset(SynthSpec((2, 2, 2, 2), (64, 64), 4, seed=1), tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_single_class_three(tmp_path):
    entries = read_manifest(generate_dataset(SynthSpec((0, 0, 0, 1)), tmp_path))
    assert [e.label for e in entries] == [3]


def test_arrays_match_files(tmp_path):
    spec = SynthSpec((1, 1, 1, 1), (64, 64), 8, seed=3)
    images, labels = generate_arrays(spec)
    entries = read_manifest(generate_dataset(spec, tmp_path))
    assert labels == [e.label for e in entries]
    assert images == [load_grayscale(e.image_path) for e in entries]


def test_class_curves_differ():
    feats = {c: extract_features(generate_image(c, sample_rng(0, c, 0), noise_amplitude=0)).concat()
             for c in range(4)}
    for a in range(4):
        for b in range(a + 1, 4):
            assert not np.array_equal(feats[a], feats[b])


def test_errors():
    with pytest.raises(PlacementError):
        generate_image(3, np.random.default_rng(0), size=(16, 16))
    with pytest.raises(ValueError):
        generate_image(4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        SynthSpec((1, 1, 1))
    with pytest.raises(ValueError):
        SynthSpec(noise_amplitude=21)
