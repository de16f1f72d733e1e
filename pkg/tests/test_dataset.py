import json

import numpy as np
import pytest

from gradshield import (
    ConfigError,
    DataError,
    HAM10000_CLASSES,
    LabeledDataset,
    concatenate,
    load_csv,
    oversample,
    save_csv,
    split,
    synthesize_toy,
)


def small_ds(labels, k=3, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    images = np.round(rng.uniform(0, 1, size=(len(labels), 3, 28, 28)) * 255) / 255
    return LabeledDataset(images=images, labels=labels, class_names=tuple("abcdefg"[:k]))


def test_dataset_validation():
    with pytest.raises(DataError):
        LabeledDataset(images=np.zeros((2, 3, 28)), labels=np.zeros(2, dtype=int))
    with pytest.raises(DataError):
        LabeledDataset(images=np.zeros((2, 3, 4, 4)), labels=np.zeros(3, dtype=int))
    with pytest.raises(DataError):
        LabeledDataset(images=np.zeros((1, 3, 4, 4)) + 1.5, labels=np.zeros(1, dtype=int))
    with pytest.raises(DataError):
        LabeledDataset(images=np.zeros((1, 3, 4, 4)), labels=np.array([9]))
    with pytest.raises(DataError):
        LabeledDataset(
            images=np.zeros((1, 3, 4, 4)), labels=np.zeros(1, dtype=int), provenance=("alien",)
        )


def test_default_class_names_and_provenance():
    ds = LabeledDataset(images=np.zeros((2, 3, 4, 4)), labels=np.array([0, 1]))
    assert ds.class_names == HAM10000_CLASSES
    assert ds.provenance == ("original", "original")
    assert ds.num_classes == 7


def test_subset_keeps_alignment():
    ds = small_ds([0, 1, 2, 1])
    sub = ds.subset([3, 0])
    assert np.array_equal(sub.labels, [1, 0])
    assert np.array_equal(sub.images[0], ds.images[3])
    assert len(sub.provenance) == 2


def test_concatenate_merges_and_validates():
    a, b = small_ds([0, 1]), small_ds([2], seed=1)
    both = concatenate([a, b])
    assert len(both) == 3
    assert np.array_equal(both.labels, [0, 1, 2])
    with pytest.raises(DataError):
        concatenate([a, small_ds([0], k=2)])
    with pytest.raises(DataError):
        concatenate([])


def test_csv_roundtrip_is_lossless(tmp_path):
    ds = synthesize_toy(n_per_class=3, classes=7, seed=4)
    path = tmp_path / "toy.csv"
    save_csv(ds, path)
    back = load_csv(path)
    assert np.array_equal(back.images, ds.images)
    assert np.array_equal(back.labels, ds.labels)
    assert back.class_names == ds.class_names
    assert back.provenance == ds.provenance
    # a second bounce reproduces the same bytes
    again = tmp_path / "again.csv"
    save_csv(back, again)
    assert again.read_bytes() == path.read_bytes()


def test_csv_sidecar_contents(tmp_path):
    ds = synthesize_toy(n_per_class=2, classes=7, seed=4)
    path = tmp_path / "toy.csv"
    save_csv(ds, path)
    meta = json.loads((tmp_path / "toy.csv.json").read_text())
    assert meta["schema"] == 1
    assert tuple(meta["class_names"]) == ds.class_names
    assert len(meta["provenance"]) == len(ds)


def test_load_csv_skips_header(tmp_path):
    ds = synthesize_toy(n_per_class=1, classes=7, seed=4)
    path = tmp_path / "toy.csv"
    save_csv(ds, path)
    body = path.read_text()
    header = ",".join(["label"] + [f"pixel{i:04d}" for i in range(2352)]) + "\n"
    path.write_text(header + body)
    back = load_csv(path)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.images, ds.images)


def test_load_csv_error_cases(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("")
    with pytest.raises(DataError):
        load_csv(p)
    p.write_text("1,2,3\n")
    with pytest.raises(DataError):
        load_csv(p)  # wrong column count
    row = ",".join(["0"] + ["0.5"] * 2352) + "\n"
    p.write_text(row)
    with pytest.raises(DataError):
        load_csv(p)  # non-integer pixels
    row = ",".join(["0"] + ["300"] * 2352) + "\n"
    p.write_text(row)
    with pytest.raises(DataError):
        load_csv(p)  # out of 0..255


def test_load_csv_raster_order(tmp_path):
    # first three values after the label are the RGB triple of pixel (0, 0)
    vals = [0] * 2352
    vals[0], vals[1], vals[2] = 255, 128, 64
    (tmp_path / "one.csv").write_text(",".join(["2"] + [str(v) for v in vals]) + "\n")
    ds = load_csv(tmp_path / "one.csv")
    assert ds.images[0, 0, 0, 0] == pytest.approx(1.0)
    assert ds.images[0, 1, 0, 0] == pytest.approx(128 / 255)
    assert ds.images[0, 2, 0, 0] == pytest.approx(64 / 255)
    assert ds.labels[0] == 2


def test_split_sizes_and_partition():
    ds = small_ds(np.arange(20) % 3)
    train, test = split(ds, 0.25, seed=5)
    assert len(train) == 15 and len(test) == 5
    # disjoint and exhaustive on pixel content
    key = lambda d: {d.images[i].tobytes() for i in range(len(d))}
    assert key(train) | key(test) == key(ds)
    assert not key(train) & key(test)


def test_split_rounds_to_nearest():
    ds = small_ds(np.zeros(7, dtype=int), k=1)
    train, test = split(ds, 0.2, seed=0)  # round(1.4) = 1
    assert len(test) == 1 and len(train) == 6


def test_split_is_seeded():
    ds = small_ds(np.arange(12) % 3)
    a1, b1 = split(ds, 0.25, seed=9)
    a2, b2 = split(ds, 0.25, seed=9)
    a3, _ = split(ds, 0.25, seed=10)
    assert np.array_equal(a1.images, a2.images)
    assert not np.array_equal(a1.images, a3.images)


def test_split_validates_fraction():
    ds = small_ds([0, 1])
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ConfigError):
            split(ds, bad, seed=0)


def test_oversample_equalizes_exactly():
    ds = small_ds([0] * 5 + [1] * 3 + [2] * 2)
    up = oversample(ds, seed=3)
    assert np.array_equal(up.class_counts(), [5, 5, 5])
    assert len(up) == 15
    # the originals all survive, in order, at the front
    assert np.array_equal(up.images[:10], ds.images)
    # duplicates really come from the matching class
    for i in range(10, 15):
        dup = up.images[i]
        pool = ds.images[ds.labels == up.labels[i]]
        assert any(np.array_equal(dup, p) for p in pool)


def test_oversample_on_balanced_data_is_identity():
    ds = small_ds([0, 1, 2, 0, 1, 2])
    assert oversample(ds, seed=0) is ds


def test_oversample_rejects_empty_class():
    ds = small_ds([0, 0, 1])
    with pytest.raises(DataError):
        oversample(ds, seed=0)


def test_synthesize_toy_shape_and_determinism():
    a = synthesize_toy(n_per_class=4, classes=7, seed=8)
    b = synthesize_toy(n_per_class=4, classes=7, seed=8)
    c = synthesize_toy(n_per_class=4, classes=7, seed=9)
    assert a.images.shape == (28, 3, 28, 28)
    assert np.array_equal(a.images, b.images)
    assert not np.array_equal(a.images, c.images)
    assert a.class_names == HAM10000_CLASSES  # 7 classes borrow the lesion names
    assert np.array_equal(a.class_counts(), [4] * 7)


def test_synthesize_toy_sits_on_the_csv_grid():
    ds = synthesize_toy(n_per_class=2, classes=5, seed=1)
    scaled = ds.images * 255.0
    assert np.abs(scaled - np.rint(scaled)).max() <= 1e-9
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0
    assert ds.class_names != HAM10000_CLASSES  # non-7 gets generic names


def test_synthesize_toy_classes_are_visually_distinct():
    ds = synthesize_toy(n_per_class=10, classes=7, seed=2)
    means = np.array([ds.images[ds.labels == k].mean(axis=(0, 2, 3)) for k in range(7)])
    # per-class mean colors must differ pairwise
    for i in range(7):
        for j in range(i + 1, 7):
            assert np.abs(means[i] - means[j]).max() > 0.02, (i, j)
