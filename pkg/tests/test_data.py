import numpy as np
import pytest

from slfd.data import (
    HEADER_SIZE,
    Dataset,
    denormalize,
    gen_procedural,
    load_csv,
    load_dataset,
    normalize,
    save_dataset,
    templates,
)
from slfd.errors import FormatError


@pytest.fixture(scope="module")
def default_sets():
    return gen_procedural()


def test_shapes_and_balance(default_sets):
    train, test = default_sets
    assert train.images.shape == (2000, 1, 16, 16) and test.images.shape == (1000, 1, 16, 16)
    assert np.all(train.class_counts() == 200) and np.all(test.class_counts() == 100)
    assert train.images.min() >= -1 and train.images.max() <= 1
    assert train.split == "train" and test.split == "test"


def test_zero_noise_gives_templates():
    train, _ = gen_procedural(num_classes=4, n_train_per_class=3, n_test_per_class=1, res=8,
                              jitter=0, amp_sigma=0, pix_sigma=0)
    t = templates(4, 8)
    for c in range(4):
        for i in train.class_indices(c):
            np.testing.assert_allclose(train.images[i], t[c], atol=1e-6)


def test_nearest_template_oracle(default_sets):
    _, test = default_sets
    t = templates(10, 16).reshape(10, -1)
    x = test.images.reshape(len(test), -1)
    d = ((x[:, None, :] - t[None]) ** 2).sum(-1)
    assert np.mean(d.argmin(1) == test.labels) > 0.95


def test_determinism_and_disjointness(default_sets):
    train, test = default_sets
    again, _ = gen_procedural()
    assert train == again
    train_rows = {row.tobytes() for row in train.images}
    assert not any(row.tobytes() in train_rows for row in test.images)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        gen_procedural(res=12)
    with pytest.raises(ValueError):
        gen_procedural(num_classes=1)


def test_round_trip_and_size(tmp_path):
    rng = np.random.default_rng(0)
    d = Dataset(rng.uniform(-1, 1, size=(7, 3, 4, 5)).astype(np.float32),
                np.array([0, 1, 2, 0, 1, 2, 0]), 3, "test")
    path = tmp_path / "d.bin"
    save_dataset(d, path)
    assert path.stat().st_size == HEADER_SIZE + 7 * 3 * 4 * 5 * 4 + 7
    assert HEADER_SIZE == 28
    back = load_dataset(path, split="test")
    assert back == d


def test_corrupt_files(tmp_path):
    d, _ = gen_procedural(num_classes=2, n_train_per_class=2, n_test_per_class=1, res=8)
    path = tmp_path / "d.bin"
    save_dataset(d, path)
    blob = path.read_bytes()
    (tmp_path / "magic.bin").write_bytes(b"NOTASET!" + blob[8:])
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "magic.bin")
    (tmp_path / "trunc.bin").write_bytes(blob[:-3])
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "trunc.bin")
    with pytest.raises(OSError):
        load_dataset(tmp_path / "missing.bin")


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1, 2, 2), np.float32), np.array([0, 0]), 2).validate()
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1, 2, 2), np.float32), np.array([0]), 1)


def test_normalize(default_sets):
    train, test = default_sets
    xtr, xte, stats = normalize(train, test)
    assert np.max(np.abs(xtr.mean(axis=(0, 2, 3)))) < 1e-10
    np.testing.assert_allclose(xtr.std(axis=(0, 2, 3)), 1.0, atol=1e-10)
    np.testing.assert_allclose(denormalize(xte, stats), test.images, atol=1e-12)
    assert not stats.floored.any()


def test_normalize_constant_channel():
    imgs = np.zeros((4, 2, 3, 3), np.float32)
    imgs[:, 1] = np.random.default_rng(1).uniform(-1, 1, size=(4, 3, 3))
    imgs[:, 0] = 0.25
    d = Dataset(imgs, np.array([0, 1, 0, 1]), 2)
    x, stats = normalize(d)
    assert stats.floored.tolist() == [True, False]
    assert np.all(x[:, 0] == 0.0)


def test_csv_import(tmp_path):
    rows = np.array([[0, 0.1, 0.2, 0.3, 0.4], [1, -0.1, -0.2, -0.3, -0.4]])
    path = tmp_path / "d.csv"
    np.savetxt(path, rows, delimiter=",")
    d = load_csv(path, (1, 2, 2))
    assert len(d) == 2 and d.class_count == 2
    np.testing.assert_allclose(d.images[1, 0], [[-0.1, -0.2], [-0.3, -0.4]], atol=1e-7)
    with pytest.raises(FormatError):
        load_csv(path, (1, 3, 3))
