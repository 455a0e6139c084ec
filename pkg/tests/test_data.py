import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relubits import LabeledDataset, SplitSpec, load_idx, normalize, split, synth_blobs
from relubits.data import (
    denormalize,
    dumps_dataset,
    dumps_idx_images,
    dumps_idx_labels,
    load_dataset,
    loads_dataset,
    parse_idx,
    save_dataset,
    shift_images,
    split_indices,
    write_idx,
)
from relubits.errors import BadMagicError, CountMismatchError, DomainError, ParseError, TruncatedError


def test_idx_hand_built_fixture(tmp_path):
    img = struct.pack(">IIII", 0x803, 2, 2, 2) + bytes([0, 1, 2, 255, 10, 20, 30, 40])
    lab = struct.pack(">II", 0x801, 2) + bytes([7, 3])
    (tmp_path / "i").write_bytes(img)
    (tmp_path / "l").write_bytes(gzip.compress(lab))
    ds = load_idx(tmp_path / "i", tmp_path / "l")
    np.testing.assert_array_equal(ds.features[0], [0, 1 / 255, 2 / 255, 1.0])
    np.testing.assert_array_equal(ds.labels, [7, 3])


def test_idx_errors(tmp_path):
    img = struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(8)
    with pytest.raises(BadMagicError):
        parse_idx(img, 0x801)
    with pytest.raises(TruncatedError):
        parse_idx(img[:-1], 0x803)
    (tmp_path / "i").write_bytes(img)
    (tmp_path / "l").write_bytes(struct.pack(">II", 0x801, 3) + bytes(3))
    with pytest.raises(CountMismatchError):
        load_idx(tmp_path / "i", tmp_path / "l")
    assert issubclass(CountMismatchError, ParseError) and CountMismatchError is not TruncatedError


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), r=st.integers(1, 5), c=st.integers(1, 5), seed=st.integers(0, 999))
def test_idx_round_trip(tmp_path_factory, n, r, c, seed):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(n, r, c)).astype(np.uint8)
    labels = rng.integers(0, 10, size=n)
    d = tmp_path_factory.mktemp("idx")
    write_idx(d / "i", d / "l", images, labels)
    ds = load_idx(d / "i", d / "l")
    np.testing.assert_array_equal(np.rint(ds.features * 255).astype(np.uint8).reshape(n, r, c), images)
    np.testing.assert_array_equal(ds.labels, labels)
    assert parse_idx(dumps_idx_images(images), 0x803).tobytes() == images.tobytes()
    assert parse_idx(dumps_idx_labels(labels), 0x801).tolist() == labels.tolist()


def test_blobs_examples():
    ds = synth_blobs(3, [[1.0, 2.0], [-1.0, 0.0]], 0.0, seed=1)
    np.testing.assert_array_equal(ds.features, [[1, 2]] * 3 + [[-1, 0]] * 3)
    a = synth_blobs(50, [[0, 0], [1, 1]], 0.3, seed=4)
    b = synth_blobs(50, [[0, 0], [1, 1]], 0.3, seed=4)
    np.testing.assert_array_equal(a.features, b.features)


def test_separated_blobs_are_linearly_separable():
    ds = synth_blobs(500, [[-2.0, 0.0], [2.0, 0.0]], 0.5, seed=0)
    A = np.column_stack([ds.features, np.ones(len(ds))])
    w, *_ = np.linalg.lstsq(A, 2.0 * ds.labels - 1.0, rcond=None)
    assert np.mean((A @ w > 0) == (ds.labels == 1)) >= 0.99


def test_normalize_properties(rng):
    X = np.column_stack([rng.normal(3, 2, 200), np.full(200, 5.0), rng.uniform(size=200)])
    ds = LabeledDataset(X, np.zeros(200, int))
    nd = normalize(ds)
    np.testing.assert_array_equal(nd.features[:, 1], 0.0)
    assert np.abs(nd.features.mean(axis=0)).max() <= 1e-9
    np.testing.assert_allclose(nd.features[:, [0, 2]].std(axis=0), 1.0, atol=1e-6)
    np.testing.assert_allclose(denormalize(nd), X, atol=1e-12)
    again = normalize(nd)
    np.testing.assert_allclose(again.features, nd.features, atol=1e-9)
    other = LabeledDataset(rng.normal(size=(5, 3)), np.zeros(5, int))
    moved = normalize(other, stats=(nd.norm_mean, nd.norm_std))
    np.testing.assert_allclose(denormalize(moved), other.features, atol=1e-12)
    g = normalize(ds, "global")
    assert np.unique(g.norm_mean).size == 1
    with pytest.raises(DomainError):
        normalize(ds, "l2")


def test_split_examples():
    ds = LabeledDataset(np.arange(10.0)[:, None], np.arange(10))
    parts = split(ds, SplitSpec(0.8, 0.1, 0.1, seed=3))
    assert [len(p) for p in parts] == [8, 1, 1]
    again = split(ds, SplitSpec(0.8, 0.1, 0.1, seed=3))
    for p, q in zip(parts, again):
        np.testing.assert_array_equal(p.labels, q.labels)
    assert sorted(np.concatenate([p.labels for p in parts]).tolist()) == list(range(10))
    with pytest.raises(DomainError):
        split(LabeledDataset(np.zeros((3, 1)), np.zeros(3, int)), SplitSpec())
    with pytest.raises(DomainError):
        SplitSpec(0.5, 0.2, 0.2)


def test_split_partition_exact(rng):
    for _ in range(100):
        n = int(rng.integers(10, 500))
        seed = int(rng.integers(0, 2**31))
        parts = split_indices(n, SplitSpec(seed=seed))
        allidx = np.concatenate(parts)
        assert sorted(allidx.tolist()) == list(range(n))
        for p, q in zip(parts, split_indices(n, SplitSpec(seed=seed))):
            np.testing.assert_array_equal(p, q)


def test_dataset_file_round_trip(tmp_path, rng):
    ds = normalize(LabeledDataset(rng.normal(size=(7, 4)), rng.integers(0, 3, 7), source="blobs", seed=5, tag=1))
    save_dataset(tmp_path / "d.rbd", ds)
    back = load_dataset(tmp_path / "d.rbd")
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.norm_std, ds.norm_std)
    assert (back.source, back.seed, back.tag, back.norm_mode) == ("blobs", 5, 1, "per-feature")
    blob = dumps_dataset(ds)
    with pytest.raises(ParseError):
        loads_dataset(blob[:-8])


def test_shift_images():
    img = np.arange(9, dtype=np.uint8).reshape(1, 3, 3)
    np.testing.assert_array_equal(shift_images(img, 0, 1)[0], [[0, 0, 1], [0, 3, 4], [0, 6, 7]])
    np.testing.assert_array_equal(shift_images(img, -1, 0)[0], [[3, 4, 5], [6, 7, 8], [0, 0, 0]])
    np.testing.assert_array_equal(shift_images(img, 0, 0), img)


def test_desk_mnist_sizes_and_no_leakage():
    pytest.importorskip("mlxtend")
    from relubits.data import desk_mnist

    parts = desk_mnist((8000, 1000, 1000), seed=0)
    assert [p[0].shape for p in parts] == [(8000, 28, 28), (1000, 28, 28), (1000, 28, 28)]
    assert all(set(np.unique(p[1])) == set(range(10)) for p in parts)
    # unshifted originals lead each part; none of them appears in another part
    heads = [{im.tobytes() for im in p[0][:n]} for p, n in zip(parts, (4000, 500, 500))]
    assert not (heads[0] & heads[1]) and not (heads[0] & heads[2]) and not (heads[1] & heads[2])
