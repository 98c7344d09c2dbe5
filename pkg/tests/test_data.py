import numpy as np
import pytest

from lookupvit.data import Dataset, gen_synthetic, load_dataset, save_dataset
from lookupvit.errors import ConfigurationError, SchemaError


def test_same_seed_same_bytes():
    a = gen_synthetic(3, 30, 16, seed=7)
    b = gen_synthetic(3, 30, 16, seed=7)
    assert a.sha256() == b.sha256()
    assert a.sha256() != gen_synthetic(3, 30, 16, seed=8).sha256()


def test_balanced_classes():
    ds = gen_synthetic(3, 300, 16, seed=0)
    np.testing.assert_array_equal(np.bincount(ds.labels), [100, 100, 100])
    assert ds.images.shape == (300, 16, 16, 3) and ds.images.dtype == np.uint8


def test_uneven_split_and_many_classes():
    ds = gen_synthetic(9, 20, 12, seed=1, channels=1)
    counts = np.bincount(ds.labels, minlength=9)
    assert counts.sum() == 20 and counts.max() - counts.min() <= 1


def test_bad_arguments():
    with pytest.raises(ConfigurationError):
        gen_synthetic(1, 10, 8, seed=0)
    with pytest.raises(ConfigurationError):
        gen_synthetic(5, 4, 8, seed=0)


def test_linear_probe_beats_chance():
    train = gen_synthetic(3, 300, 16, seed=0)
    test = gen_synthetic(3, 150, 16, seed=1)

    def design(ds):
        x = ds.as_float().reshape(len(ds), -1).astype(np.float64)
        return np.hstack([x, np.ones((len(ds), 1))])

    targets = np.eye(3)[train.labels]
    w, *_ = np.linalg.lstsq(design(train), targets, rcond=None)
    acc = np.mean(np.argmax(design(test) @ w, axis=1) == test.labels)
    assert acc > 0.5


def test_file_round_trip(tmp_path):
    ds = gen_synthetic(4, 40, 8, seed=3)
    save_dataset(ds, tmp_path / "d.lvds")
    back = load_dataset(tmp_path / "d.lvds")
    np.testing.assert_array_equal(back.images, ds.images)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert (back.classes, back.seed) == (4, 3)
    assert back.sha256() == ds.sha256()


def test_corrupt_files_rejected():
    raw = gen_synthetic(2, 4, 4, seed=0).to_bytes()
    with pytest.raises(SchemaError):
        Dataset.from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(SchemaError):
        Dataset.from_bytes(raw[:-1])
    with pytest.raises(SchemaError):
        Dataset.from_bytes(raw[:10])


def test_labels_validated():
    with pytest.raises(SchemaError):
        Dataset(np.zeros((1, 2, 2, 1), np.uint8), np.array([2]), 2, 0)
