"""Per-node activation statistics over sets of bit vectors.

Frequencies are kept as exact integer counts; ``values`` divides by ``n`` on
demand, and anything that needs an exact comparison (histogram bins, the
common-bit test) works from the counts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bitvec import BitVector, LayerLayout, dumps_bit_matrix, loads_bit_matrix
from .errors import DomainError, ShapeError

ORIGINAL, ADVERSARIAL = 0, 1


class ActivationDataset:
    """``N x h`` bit matrix with a per-row tag (0 original, 1 adversarial) and class label."""

    def __init__(self, bits, tags, labels, layout: LayerLayout):
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.ndim != 2 or bits.shape[1] != layout.total:
            raise ShapeError(f"bit matrix shape {bits.shape} does not match layout total {layout.total}")
        if bits.shape[0] < 1:
            raise DomainError("activation dataset needs at least one row")
        if np.any(bits > 1):
            raise ShapeError("bit matrix entries must be 0 or 1")
        tags = np.broadcast_to(np.asarray(tags, dtype=np.uint8), (bits.shape[0],)).copy()
        labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), (bits.shape[0],)).copy()
        if np.any(tags > 1):
            raise DomainError("tags must be 0 (original) or 1 (adversarial)")
        self.bits, self.tags, self.labels, self.layout = bits, tags, labels, layout

    def __len__(self):
        return self.bits.shape[0]

    def select(self, tag=None) -> "ActivationDataset":
        """Rows with the given tag (``None`` keeps everything)."""
        if tag is None:
            return self
        mask = self.tags == tag
        if not mask.any():
            raise DomainError(f"no rows with tag {tag}")
        return ActivationDataset(self.bits[mask], self.tags[mask], self.labels[mask], self.layout)

    def row(self, j: int) -> BitVector:
        return BitVector.from_bits(self.bits[j], self.layout)

    @staticmethod
    def concat(*parts: "ActivationDataset") -> "ActivationDataset":
        layout = parts[0].layout
        if any(p.layout != layout for p in parts):
            raise ShapeError("cannot concatenate datasets with different layouts")
        return ActivationDataset(
            np.concatenate([p.bits for p in parts]),
            np.concatenate([p.tags for p in parts]),
            np.concatenate([p.labels for p in parts]),
            layout,
        )

    def to_bytes(self) -> bytes:
        return dumps_bit_matrix(self.bits, self.layout.widths, self.tags, self.labels)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ActivationDataset":
        bits, widths, tags, labels = loads_bit_matrix(data)
        return cls(bits, tags, labels, LayerLayout(widths))

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ActivationDataset":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


@dataclass(frozen=True)
class FrequencyProfile:
    counts: np.ndarray
    n: int
    layout: LayerLayout

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (self.layout.total,):
            raise ShapeError("one count per node required")
        if self.n < 1 or np.any(counts < 0) or np.any(counts > self.n):
            raise DomainError("counts must lie in [0, n] with n >= 1")
        object.__setattr__(self, "counts", counts)

    @property
    def values(self) -> np.ndarray:
        return self.counts / self.n


def activation_frequency(ds: ActivationDataset, tag=None) -> FrequencyProfile:
    """Fraction of selected rows in which each node fires."""
    sel = ds.select(tag)
    return FrequencyProfile(sel.bits.sum(axis=0, dtype=np.int64), len(sel), ds.layout)


def frequency_difference(p: FrequencyProfile, q: FrequencyProfile) -> np.ndarray:
    if p.layout != q.layout:
        raise ShapeError(f"layout mismatch: {p.layout} vs {q.layout}")
    return p.values - q.values


def _per_layer_mean(mask: np.ndarray, layout: LayerLayout, per_layer: bool) -> np.ndarray:
    if not per_layer:
        return np.array([mask.mean()])
    return np.array([mask[layout.layer_range(i)].mean() for i in range(layout.n_layers)])


def common_bit_mask(ds: ActivationDataset, value: int, tag=None) -> np.ndarray:
    """Nodes at which every selected row has bit ``value``."""
    if value not in (0, 1):
        raise DomainError("value must be 0 or 1")
    p = activation_frequency(ds, tag)
    return p.counts == (p.n if value == 1 else 0)


def common_bit_fraction(ds: ActivationDataset, value: int, per_layer: bool = True, tag=None) -> np.ndarray:
    """Per-layer fraction of nodes where all selected rows share bit ``value``.

    Pass a dataset holding both originals and adversarials with ``tag=None`` for
    the pooled curve.
    """
    return _per_layer_mean(common_bit_mask(ds, value, tag), ds.layout, per_layer)


def common_bit_fraction_intersection(a: ActivationDataset, b: ActivationDataset, value: int,
                                     per_layer: bool = True) -> np.ndarray:
    """Fraction of nodes that are common-``value`` in ``a`` and, separately, in ``b``.

    Numerically the same as the pooled reading; kept so both definitions can be
    computed and compared.
    """
    if a.layout != b.layout:
        raise ShapeError("layout mismatch")
    mask = common_bit_mask(a, value) & common_bit_mask(b, value)
    return _per_layer_mean(mask, a.layout, per_layer)


def frequency_histogram(p: FrequencyProfile, bins: int, per_layer: bool = False) -> np.ndarray:
    """Counts of node frequencies in ``bins`` equal-width bins over [0, 1].

    Bins are closed on the right, ``[0, 1/b], (1/b, 2/b], ..., ((b-1)/b, 1]``,
    so a frequency sitting on an edge goes to the lower bin.  Returns shape
    ``(bins,)``, or ``(n_layers, bins)`` with ``per_layer``.
    """
    if bins < 1:
        raise DomainError("bins must be positive")
    # ceil(count * bins / n) - 1 in integers, so edge values never round the wrong way
    idx = np.maximum((p.counts * bins + p.n - 1) // p.n - 1, 0)
    if not per_layer:
        return np.bincount(idx, minlength=bins)
    return np.stack([np.bincount(idx[p.layout.layer_range(i)], minlength=bins)
                     for i in range(p.layout.n_layers)])


# -- CSV emission ------------------------------------------------------------

def write_node_csv(f, p_orig: FrequencyProfile, p_adv: FrequencyProfile):
    diff = frequency_difference(p_orig, p_adv)
    layers = p_orig.layout.layer_of()
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["node_index", "layer", "local_index", "p_orig", "p_adv", "diff"])
    po, pa = p_orig.values, p_adv.values
    for k in range(p_orig.layout.total):
        i = int(layers[k])
        w.writerow([k, i, k - p_orig.layout.offsets[i], repr(float(po[k])), repr(float(pa[k])), repr(float(diff[k]))])


LAYER_COLUMNS = [
    "layer",
    "frac_common1_orig", "frac_common1_adv", "frac_common1_both",
    "frac_common0_orig", "frac_common0_adv", "frac_common0_both",
]


def write_layer_csv(f, ds_orig: ActivationDataset, ds_adv: ActivationDataset):
    pooled = ActivationDataset.concat(ds_orig, ds_adv)
    cols = []
    for value in (1, 0):
        cols += [common_bit_fraction(ds_orig, value), common_bit_fraction(ds_adv, value),
                 common_bit_fraction(pooled, value)]
    w = csv.writer(f, lineterminator="\n")
    w.writerow(LAYER_COLUMNS)
    for i in range(ds_orig.layout.n_layers):
        w.writerow([i] + [repr(float(c[i])) for c in cols])


def write_histogram_csv(f, p_orig: FrequencyProfile, p_adv: FrequencyProfile, bins: int):
    ho = frequency_histogram(p_orig, bins, per_layer=True)
    ha = frequency_histogram(p_adv, bins, per_layer=True)
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["layer", "bin", "bin_lo", "bin_hi", "count_orig", "count_adv"])
    for i in range(p_orig.layout.n_layers):
        for j in range(bins):
            w.writerow([i, j, repr(j / bins), repr((j + 1) / bins), int(ho[i, j]), int(ha[i, j])])
