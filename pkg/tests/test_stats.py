import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_frequency
from relubits import ActivationDataset, FrequencyProfile, LayerLayout, activation_frequency, common_bit_fraction
from relubits import frequency_difference, frequency_histogram
from relubits.errors import DomainError, ShapeError
from relubits.stats import (
    ADVERSARIAL,
    ORIGINAL,
    common_bit_fraction_intersection,
    write_histogram_csv,
    write_layer_csv,
    write_node_csv,
)


def ds_of(rows, widths=None, tags=0):
    rows = np.asarray(rows, dtype=np.uint8)
    return ActivationDataset(rows, tags, 0, LayerLayout(widths or [rows.shape[1]]))


def profile(values, n):
    counts = np.rint(np.asarray(values) * n).astype(int)
    return FrequencyProfile(counts, n, LayerLayout([len(counts)]))


def test_frequency_examples():
    np.testing.assert_array_equal(activation_frequency(ds_of([[1, 0], [1, 1], [1, 0], [1, 1]])).values, [1.0, 0.5])
    np.testing.assert_array_equal(activation_frequency(ds_of([[0, 1, 1]])).values, [0, 1, 1])


def test_frequency_matches_loop_oracle(rng):
    rows = rng.integers(0, 2, size=(500, 64))
    p = activation_frequency(ds_of(rows))
    assert [Fraction(int(c), p.n) for c in p.counts] == naive_frequency(rows.tolist())


def test_frequency_tag_filter():
    ds = ActivationDataset(np.array([[1, 0], [0, 0], [1, 1]]), [ORIGINAL, ADVERSARIAL, ADVERSARIAL], [0, 1, 2],
                           LayerLayout([2]))
    np.testing.assert_array_equal(activation_frequency(ds, ORIGINAL).values, [1, 0])
    np.testing.assert_array_equal(activation_frequency(ds, ADVERSARIAL).values, [0.5, 0.5])
    with pytest.raises(DomainError):
        activation_frequency(ds_of([[1, 0]]), ADVERSARIAL)


def test_difference_examples(rng):
    p = profile([0.25, 0.5], 4)
    np.testing.assert_array_equal(frequency_difference(p, p), [0, 0])
    np.testing.assert_array_equal(frequency_difference(profile([1, 0], 3), profile([0, 1], 3)), [1, -1])
    a, b = (activation_frequency(ds_of(rng.integers(0, 2, size=(30, 12)))) for _ in range(2))
    np.testing.assert_array_equal(frequency_difference(a, b), a.values - b.values)
    with pytest.raises(ShapeError):
        frequency_difference(p, profile([0.5], 2))


def test_common_bit_examples(rng):
    np.testing.assert_allclose(common_bit_fraction(ds_of([[1, 0, 1]]), 1), [2 / 3])
    np.testing.assert_allclose(common_bit_fraction(ds_of([[1, 1], [1, 0]]), 1), [0.5])
    rows = rng.integers(0, 2, size=(200, 40))
    rows[:, :5] = 1
    rows[:, 30:33] = 0
    lay = [25, 15]
    for value in (0, 1):
        brute = [np.mean([all(r[k] == value for r in rows) for k in range(s, s + w)])
                 for s, w in ((0, 25), (25, 15))]
        np.testing.assert_allclose(common_bit_fraction(ds_of(rows, lay), value), brute)
        whole = np.mean([all(r[k] == value for r in rows) for k in range(40)])
        np.testing.assert_allclose(common_bit_fraction(ds_of(rows, lay), value, per_layer=False), [whole])


def test_common_bit_pooled_equals_intersection(rng):
    a = ds_of(rng.integers(0, 2, size=(6, 30)) | (np.arange(30) < 8), [10, 20])
    b = ds_of(rng.integers(0, 2, size=(6, 30)) | (np.arange(30) < 5), [10, 20], tags=1)
    for value in (0, 1):
        np.testing.assert_array_equal(common_bit_fraction(ActivationDataset.concat(a, b), value),
                                      common_bit_fraction_intersection(a, b, value))


def test_histogram_examples(rng):
    np.testing.assert_array_equal(frequency_histogram(profile([0, 1, 0.5], 2), 2), [2, 1])
    np.testing.assert_array_equal(frequency_histogram(profile([1, 1, 1, 1], 5), 4), [0, 0, 0, 4])
    p = activation_frequency(ds_of(rng.integers(0, 2, size=(37, 90))))
    assert frequency_histogram(p, 10).sum() == 90
    with pytest.raises(DomainError):
        frequency_histogram(p, 0)


def test_histogram_per_layer():
    p = FrequencyProfile([0, 4, 2, 1, 3], 4, LayerLayout([2, 3]))
    np.testing.assert_array_equal(frequency_histogram(p, 4, per_layer=True), [[1, 0, 0, 1], [1, 1, 1, 0]])


def test_profile_validation():
    with pytest.raises(DomainError):
        FrequencyProfile([3], 2, LayerLayout([1]))
    with pytest.raises(ShapeError):
        ActivationDataset(np.zeros((2, 3)), 0, 0, LayerLayout([2]))
    with pytest.raises(DomainError):
        ActivationDataset(np.zeros((0, 2)), 0, 0, LayerLayout([2]))


def test_dataset_file_round_trip(rng, tmp_path):
    ds = ActivationDataset(rng.integers(0, 2, size=(9, 11)), rng.integers(0, 2, 9), rng.integers(0, 10, 9),
                           LayerLayout([4, 7]))
    ds.save(tmp_path / "m.rbm")
    back = ActivationDataset.load(tmp_path / "m.rbm")
    np.testing.assert_array_equal(back.bits, ds.bits)
    np.testing.assert_array_equal(back.tags, ds.tags)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.layout == ds.layout


def test_csv_headers(rng):
    o = ds_of(rng.integers(0, 2, size=(10, 5)), [2, 3])
    a = ds_of(rng.integers(0, 2, size=(10, 5)), [2, 3], tags=1)
    po, pa = activation_frequency(o), activation_frequency(a)
    f = io.StringIO()
    write_node_csv(f, po, pa)
    lines = f.getvalue().splitlines()
    assert lines[0] == "node_index,layer,local_index,p_orig,p_adv,diff"
    assert len(lines) == 6 and lines[4].startswith("3,1,1,")
    f = io.StringIO()
    write_layer_csv(f, o, a)
    assert f.getvalue().splitlines()[0].startswith("layer,frac_common1_orig,frac_common1_adv,frac_common1_both")
    f = io.StringIO()
    write_histogram_csv(f, po, pa, 4)
    lines = f.getvalue().splitlines()
    assert lines[0] == "layer,bin,bin_lo,bin_hi,count_orig,count_adv"
    assert len(lines) == 1 + 2 * 4


rows_strategy = st.integers(1, 12).flatmap(
    lambda h: st.lists(st.lists(st.integers(0, 1), min_size=h, max_size=h), min_size=1, max_size=20))


@settings(max_examples=100, deadline=None)
@given(rows=rows_strategy, seed=st.integers(0, 1000))
def test_permutation_invariance(rows, seed):
    rows = np.array(rows)
    perm = np.random.default_rng(seed).permutation(len(rows))
    a, b = ds_of(rows), ds_of(rows[perm])
    np.testing.assert_array_equal(activation_frequency(a).counts, activation_frequency(b).counts)
    for value in (0, 1):
        np.testing.assert_array_equal(common_bit_fraction(a, value), common_bit_fraction(b, value))
    np.testing.assert_array_equal(frequency_histogram(activation_frequency(a), 7),
                                  frequency_histogram(activation_frequency(b), 7))


@settings(max_examples=100, deadline=None)
@given(a=rows_strategy, data=st.data())
def test_mixture_identity_and_common_bit_consistency(a, data):
    h = len(a[0])
    b = data.draw(st.lists(st.lists(st.integers(0, 1), min_size=h, max_size=h), min_size=1, max_size=20))
    pa, pb = activation_frequency(ds_of(a)), activation_frequency(ds_of(b))
    pu = activation_frequency(ds_of(a + b))
    for k in range(h):
        mix = (Fraction(int(pa.counts[k]), pa.n) * pa.n + Fraction(int(pb.counts[k]), pb.n) * pb.n) / (pa.n + pb.n)
        assert Fraction(int(pu.counts[k]), pu.n) == mix
    u = ds_of(a + b)
    assert common_bit_fraction(u, 1, per_layer=False)[0] == np.mean(pu.values == 1.0)
    assert common_bit_fraction(u, 0, per_layer=False)[0] == np.mean(pu.values == 0.0)
