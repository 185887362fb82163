import numpy as np
import pytest
from scipy.spatial import cKDTree

from lmakit.data import (
    IMAGE_MAGIC,
    LABEL_MAGIC,
    gen_synthetic,
    idx_dataset,
    load_idx,
    read_idx,
    write_idx,
)
from lmakit.errors import ConfigurationError, FormatError


def test_same_seed_same_data():
    a = gen_synthetic("two-spirals", 300, 0.1, seed=4)
    b = gen_synthetic("two-spirals", 300, 0.1, seed=4)
    for name in ("x_train", "y_train", "x_test", "y_test"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = gen_synthetic("two-spirals", 300, 0.1, seed=5)
    assert not np.array_equal(a.x_train, c.x_train)


def test_split_is_eighty_twenty():
    d = gen_synthetic("grid-classes", 1000, 0.0, seed=0)
    assert len(d.y_train) == 800 and len(d.y_test) == 200
    assert d.n_fit(0.1) == 720


def test_noise_free_spirals_nearest_neighbour_is_perfect():
    d = gen_synthetic("two-spirals", 2000, 0.0, seed=0)
    _, idx = cKDTree(d.x_train).query(d.x_test)
    assert np.mean(d.y_train[idx] == d.y_test) == 1.0


def test_grid_labels_are_cell_parity_pairs():
    d = gen_synthetic("grid-classes", 400, 0.0, seed=1)
    x = np.concatenate([d.x_train, d.x_test])
    y = np.concatenate([d.y_train, d.y_test])
    ix = np.minimum(((x[:, 0] + 1) * 2).astype(int), 3)
    iy = np.minimum(((x[:, 1] + 1) * 2).astype(int), 3)
    np.testing.assert_array_equal(y, 2 * (ix % 2) + iy % 2)
    assert set(y) == {0, 1, 2, 3}


def test_too_few_samples_or_unknown_task():
    with pytest.raises(ConfigurationError):
        gen_synthetic("two-spirals", 19)
    with pytest.raises(ConfigurationError):
        gen_synthetic("grid-classes", 50, classes=6)
    with pytest.raises(ConfigurationError):
        gen_synthetic("moons", 100)


class TestIDX:
    def write(self, tmp_path, n=12):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(n, 3, 4), dtype=np.uint8)
        labels = rng.integers(0, 3, size=n, dtype=np.uint8)
        ip, lp = tmp_path / "img.idx", tmp_path / "lbl.idx"
        write_idx(ip, images)
        write_idx(lp, labels)
        return ip, lp, images, labels

    def test_round_trip(self, tmp_path):
        ip, lp, images, labels = self.write(tmp_path)
        assert ip.read_bytes()[:4] == bytes([0, 0, 8, 3])
        x, y = load_idx(ip, lp)
        assert x.shape == (12, 12)
        np.testing.assert_array_equal(x, images.reshape(12, -1) / 255.0)
        np.testing.assert_array_equal(y, labels)
        assert x.min() >= 0.0 and x.max() <= 1.0

    def test_length_matches_header(self, tmp_path):
        ip, _, images, _ = self.write(tmp_path)
        raw = ip.read_bytes()
        dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(3)]
        assert 4 + 4 * len(dims) + int(np.prod(dims)) == len(raw)

    def test_wrong_magic(self, tmp_path):
        ip, lp, _, _ = self.write(tmp_path)
        with pytest.raises(FormatError, match="offset 0"):
            read_idx(ip, LABEL_MAGIC)
        with pytest.raises(FormatError):
            load_idx(lp, ip)

    def test_truncated(self, tmp_path):
        ip, _, _, _ = self.write(tmp_path)
        raw = ip.read_bytes()
        ip.write_bytes(raw[:-5])
        with pytest.raises(FormatError) as info:
            read_idx(ip, IMAGE_MAGIC)
        assert info.value.offset == len(raw) - 5
        ip.write_bytes(raw[:10])
        with pytest.raises(FormatError, match="dimension header"):
            read_idx(ip, IMAGE_MAGIC)

    def test_dataset(self, tmp_path):
        ip, lp, _, _ = self.write(tmp_path, n=50)
        d = idx_dataset(ip, lp, seed=0)
        assert d.input_dim == 12 and len(d.y_train) == 40
