import numpy as np
import pytest
from PIL import Image

from fruitcnn.data import (Dataset, DatasetError, SplitSpec, batches, decode_image, export_image_dir,
                           load_image_dir, load_split_tree, one_hot, split, synth_dataset)


def _write(path, color, size=(10, 10), fmt="PNG"):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new("RGB", size, color).save(path, format=fmt)


def _toy(labels, shape=(3, 2, 2)):
    labels = np.asarray(labels)
    images = np.arange(len(labels) * int(np.prod(shape)), dtype=np.float32).reshape(len(labels), *shape)
    k = int(labels.max()) + 1
    return Dataset(images, labels, [f"c{i}" for i in range(k)])


def test_load_single_red_png(tmp_path):
    _write(tmp_path / "apple" / "a.png", (255, 0, 0))
    ds = load_image_dir(tmp_path)
    assert len(ds) == 1 and ds.class_names == ["apple"]
    assert ds.images.shape == (1, 3, 100, 100)
    assert np.all(ds.images[0, 0] == 1.0) and not ds.images[0, 1:].any()


def test_load_sorted_classes_jpeg_and_determinism(tmp_path):
    _write(tmp_path / "pear" / "2.jpg", (0, 200, 0), (40, 30), "JPEG")
    _write(tmp_path / "pear" / "1.png", (0, 0, 255))
    _write(tmp_path / "banana" / "x.PNG", (128, 128, 128), (120, 120))
    (tmp_path / "banana" / "notes.txt").write_text("ignored")
    a = load_image_dir(tmp_path, size=16)
    b = load_image_dir(tmp_path, size=16)
    assert a.class_names == ["banana", "pear"]
    assert a.labels.tolist() == [0, 1, 1]
    assert a.images.tobytes() == b.images.tobytes()
    assert a.images.min() >= 0 and a.images.max() <= 1
    # constant images stay constant after bilinear resize
    np.testing.assert_allclose(a.images[0], 128 / 255, atol=1e-7)


def test_load_errors(tmp_path):
    with pytest.raises(DatasetError):
        load_image_dir(tmp_path / "missing")
    with pytest.raises(DatasetError, match="no class"):
        load_image_dir(tmp_path)
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetError, match="empty"):
        load_image_dir(tmp_path)
    (tmp_path / "empty" / "bad.png").write_bytes(b"not an image")
    with pytest.raises(DatasetError, match="bad.png"):
        load_image_dir(tmp_path)


def test_decode_resizes(tmp_path):
    _write(tmp_path / "a.png", (10, 20, 30), (7, 13))
    img = decode_image(tmp_path / "a.png", 100)
    assert img.shape == (3, 100, 100) and img.dtype == np.float32


def test_split_tree(tmp_path):
    for part, n in (("Training", 3), ("Test", 1)):
        for cls in ("a", "b"):
            for i in range(n):
                _write(tmp_path / part / cls / f"{i}.png", (i * 40, 0, 0))
    ds = load_split_tree(tmp_path, size=8)
    tr, te = split(ds, SplitSpec(mode="directory_given"))
    assert (len(tr), len(te)) == (6, 2)
    with pytest.raises(DatasetError):
        split(_toy([0, 0, 1, 1]), SplitSpec(mode="directory_given"))


def test_split_counts_single_class():
    tr, te = split(_toy([0] * 10), SplitSpec(0.8, 1))
    assert (len(tr), len(te)) == (8, 2)


def test_split_full_size_counts():
    # class sizes roughly like a 25-class fruits subset; only the labels matter here
    rng = np.random.default_rng(0)
    sizes = rng.integers(600, 830, 25)
    sizes[-1] += 17_823 - sizes.sum()
    labels = np.repeat(np.arange(25), sizes)
    ds = Dataset(np.zeros((len(labels), 1, 1, 1), np.float32), labels, [f"c{i}" for i in range(25)])
    tr, te = split(ds, SplitSpec(0.8, 3))
    assert (len(tr), len(te)) == (14_258, 3_565)
    for c in range(25):
        n_c = int((labels == c).sum())
        assert abs(int((tr.labels == c).sum()) - 0.8 * n_c) < 1


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_split_is_partition_and_deterministic(seed):
    ds = _toy([0] * 7 + [1] * 5 + [2] * 9)
    ds.images = np.arange(len(ds), dtype=np.float32).reshape(-1, 1, 1, 1)
    tr, te = split(ds, SplitSpec(0.8, seed))
    tr2, _ = split(ds, SplitSpec(0.8, seed))
    ids_tr = set(tr.images.ravel().tolist())
    ids_te = set(te.images.ravel().tolist())
    assert ids_tr.isdisjoint(ids_te)
    assert ids_tr | ids_te == set(range(len(ds)))
    assert tr.images.tobytes() == tr2.images.tobytes()


def test_split_needs_two_per_class():
    with pytest.raises(DatasetError):
        split(_toy([0, 0, 1]), SplitSpec())


def test_batches_sizes_and_remainder():
    assert [len(x) for x, _ in batches(_toy([0, 1] * 15), 15, 1, 0)] == [15, 15]
    sizes = [len(x) for x, _ in batches(_toy([0] * 16 + [1] * 15), 15, 1, 0)]
    assert sizes == [15, 15, 1]


def test_batches_cover_dataset_and_seeded_order():
    ds = _toy([0, 1, 2] * 7)
    ds.images = np.arange(len(ds), dtype=np.float32).reshape(-1, 1, 1, 1)
    def order(epoch, seed):
        return np.concatenate([x.ravel() for x, _ in batches(ds, 4, epoch, seed)])
    e1 = order(1, 5)
    assert sorted(e1.tolist()) == list(range(len(ds)))
    assert e1.tolist() == order(1, 5).tolist()
    assert e1.tolist() != order(2, 5).tolist()
    for x, t in batches(ds, 4, 1, 5):
        assert t.shape == (len(x), 3)


def test_batches_errors():
    with pytest.raises(ValueError):
        batches(_toy([0, 1]), 0, 1, 0)
    empty = Dataset(np.zeros((0, 3, 2, 2), np.float32), [], ["a"])
    with pytest.raises(DatasetError):
        batches(empty, 2, 1, 0)


def test_one_hot():
    assert one_hot([0], 3).tolist() == [[1, 0, 0]]
    h = one_hot([2, 1], 3)
    assert h.tolist() == [[0, 0, 1], [0, 1, 0]]
    assert np.all(h.sum(axis=1) == 1)
    with pytest.raises(ValueError):
        one_hot([3], 3)


def test_synth_counts_and_determinism():
    ds = synth_dataset(3, 100, 32, seed=4)
    assert len(ds) == 300 and ds.num_classes == 3
    assert np.bincount(ds.labels).tolist() == [100, 100, 100]
    assert ds.images.shape == (300, 3, 32, 32)
    assert ds.images.tobytes() == synth_dataset(3, 100, 32, seed=4).images.tobytes()
    assert ds.images.tobytes() != synth_dataset(3, 100, 32, seed=5).images.tobytes()
    with pytest.raises(ValueError):
        synth_dataset(1, 10, 32, 0)


def test_synth_mean_colour_linear_classifier():
    """Least-squares linear map on mean RGB must separate the classes."""
    ds = synth_dataset(3, 100, 32, seed=0)
    feats = np.c_[ds.images.mean(axis=(2, 3)), np.ones(len(ds))]
    targets = one_hot(ds.labels, 3, np.float64)
    coef, *_ = np.linalg.lstsq(feats, targets, rcond=None)
    acc = float(((feats @ coef).argmax(axis=1) == ds.labels).mean())
    assert acc > 0.9


def test_export_round_trip(tmp_path):
    ds = synth_dataset(3, 4, 16, seed=1)
    paths = export_image_dir(ds, tmp_path)
    assert len(paths) == 12
    back = load_image_dir(tmp_path, size=16)
    assert back.class_names == ds.class_names
    assert back.labels.tolist() == ds.labels.tolist()
    np.testing.assert_allclose(back.images, ds.images, atol=1e-7)


def test_digest_changes_with_content():
    a = synth_dataset(2, 3, 8, 0)
    b = synth_dataset(2, 3, 8, 1)
    assert a.digest() == synth_dataset(2, 3, 8, 0).digest() != b.digest()
