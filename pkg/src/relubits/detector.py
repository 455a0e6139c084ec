"""Binary bit classifier: pick discriminator nodes by frequency thresholds, then vote.

A node joins ``c_a`` when at least ``l1`` of originals fire there and at least
``l2`` of adversarials stay silent; it joins ``c_b`` in the mirrored case
(``l3`` originals silent, ``l4`` adversarials firing).  A test vector is called
original when at least ``vote_threshold`` of the selected nodes agree with the
reference pattern (1 on ``c_a``, 0 on ``c_b``).

Threshold tests are done on integer counts against the shortest decimal
reading of each threshold, so ``385/500 >= 0.77`` holds as it should.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bitvec import BitVector, LayerLayout
from .errors import DomainError, EmptyDiscriminatorError, ParseError, ShapeError
from .network import header_ints, read_text_header
from .stats import ADVERSARIAL, ORIGINAL, ActivationDataset, FrequencyProfile, activation_frequency

DETECTOR_MAGIC = b"RBC1\n"


def _exact(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def min_count(threshold: float, n: int) -> int:
    """Smallest integer ``c`` with ``c / n >= threshold``."""
    f = _exact(threshold)
    return -(-f.numerator * n // f.denominator)


@dataclass(frozen=True)
class Thresholds:
    l1: float
    l2: float
    l3: float
    l4: float

    def __post_init__(self):
        # values above 1 are accepted; they simply select nothing
        for name in ("l1", "l2", "l3", "l4"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"threshold {name} must be finite, got {v}")

    @classmethod
    def uniform(cls, lam: float) -> "Thresholds":
        return cls(lam, lam, lam, lam)

    def as_tuple(self):
        return (self.l1, self.l2, self.l3, self.l4)


def select_sets(p_orig: FrequencyProfile, p_adv: FrequencyProfile, lam: Thresholds) -> list[list[np.ndarray]]:
    """Per layer, the four threshold sets as sorted arrays of global node indices."""
    if p_orig.layout != p_adv.layout:
        raise ShapeError(f"layout mismatch: {p_orig.layout} vs {p_adv.layout}")
    co, no = p_orig.counts, p_orig.n
    ca, na = p_adv.counts, p_adv.n
    masks = [
        co >= min_count(lam.l1, no),
        (na - ca) >= min_count(lam.l2, na),
        (no - co) >= min_count(lam.l3, no),
        ca >= min_count(lam.l4, na),
    ]
    layout = p_orig.layout
    out = []
    for i in range(layout.n_layers):
        sl = layout.layer_range(i)
        out.append([np.flatnonzero(m[sl]) + sl.start for m in masks])
    return out


@dataclass
class DetectorModel:
    c_a: np.ndarray
    c_b: np.ndarray
    thresholds: Thresholds
    layout: LayerLayout
    vote_threshold: float = 0.5
    n_overlap: int = 0

    def __post_init__(self):
        self.c_a = np.asarray(self.c_a, dtype=np.int64)
        self.c_b = np.asarray(self.c_b, dtype=np.int64)
        for name in ("c_a", "c_b"):
            idx = getattr(self, name)
            if idx.ndim != 1 or np.any(np.diff(idx) <= 0):
                raise DomainError(f"{name} must be strictly ascending")
            if idx.size and (idx[0] < 0 or idx[-1] >= self.layout.total):
                raise DomainError(f"{name} has indices outside [0, {self.layout.total})")
        if np.intersect1d(self.c_a, self.c_b).size:
            raise DomainError("c_a and c_b must be disjoint")

    @property
    def n_bits(self) -> int:
        """Number of voting nodes."""
        return int(self.c_a.size + self.c_b.size)

    @property
    def n_selected(self) -> int:
        """``|c_a| + |c_b|`` before overlapping nodes were dropped from both sets."""
        return self.n_bits + 2 * self.n_overlap

    @property
    def indices(self) -> np.ndarray:
        return np.concatenate([self.c_a, self.c_b])

    @property
    def b_c(self) -> np.ndarray:
        """Reference pattern over ``indices``: ones for ``c_a`` then zeros for ``c_b``."""
        return np.concatenate([np.ones(self.c_a.size, np.uint8), np.zeros(self.c_b.size, np.uint8)])

    def bits_per_layer(self) -> np.ndarray:
        return np.bincount(self.layout.layer_of()[self.indices], minlength=self.layout.n_layers)

    # -- file format ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        lines = [
            "widths " + " ".join(map(str, self.layout.widths)),
            "lambdas " + " ".join(repr(float(v)) for v in self.thresholds.as_tuple()),
            f"vote_threshold {float(self.vote_threshold)!r}",
            f"overlap_removed {self.n_overlap}",
            "c_a " + " ".join(map(str, [self.c_a.size, *self.c_a.tolist()])),
            "c_b " + " ".join(map(str, [self.c_b.size, *self.c_b.tolist()])),
            "end",
        ]
        return DETECTOR_MAGIC + ("\n".join(lines) + "\n").encode("ascii")

    @classmethod
    def from_bytes(cls, data: bytes) -> "DetectorModel":
        entries, pos = read_text_header(data, DETECTOR_MAGIC)
        if pos != len(data):
            raise ParseError("trailing bytes after 'end'", pos)
        f = {key: (values, off) for key, values, off in entries}
        for key in ("widths", "lambdas", "vote_threshold", "c_a", "c_b"):
            if key not in f:
                raise ParseError(f"missing key {key!r}", len(DETECTOR_MAGIC))
        try:
            lams = [float(v) for v in f["lambdas"][0]]
            vote = float(f["vote_threshold"][0][0])
        except (ValueError, IndexError):
            raise ParseError("bad threshold values", f["lambdas"][1]) from None
        if len(lams) != 4:
            raise ParseError("need four lambdas", f["lambdas"][1])
        sets = {}
        for key in ("c_a", "c_b"):
            values, off = f[key]
            ints = header_ints(values, off, key)
            if not ints or ints[0] != len(ints) - 1:
                raise ParseError(f"{key}: declared count does not match listed indices", off)
            sets[key] = ints[1:]
        n_overlap = header_ints(*f.get("overlap_removed", (["0"], 0)), "overlap_removed")[0]
        try:
            return cls(sets["c_a"], sets["c_b"], Thresholds(*lams),
                       LayerLayout(header_ints(*f["widths"], "widths")), vote, n_overlap)
        except (DomainError, ShapeError) as e:
            raise ParseError(str(e), len(DETECTOR_MAGIC)) from None

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "DetectorModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def build_detector(ds_orig: ActivationDataset, ds_adv: ActivationDataset, lam: Thresholds,
                   vote_threshold: float = 0.5) -> DetectorModel:
    """Fit the classifier index sets from original and adversarial bit vectors."""
    if ds_orig.layout != ds_adv.layout:
        raise ShapeError("original and adversarial datasets have different layouts")
    per_layer = select_sets(activation_frequency(ds_orig), activation_frequency(ds_adv), lam)
    union = [np.concatenate([layer[j] for layer in per_layer]) for j in range(4)]
    c_a = np.intersect1d(union[0], union[1])
    c_b = np.intersect1d(union[2], union[3])
    # a node cannot vote both ways; only reachable when some lambda pair sums to <= 1
    both = np.intersect1d(c_a, c_b)
    c_a, c_b = np.setdiff1d(c_a, both), np.setdiff1d(c_b, both)
    if c_a.size + c_b.size == 0:
        raise EmptyDiscriminatorError(f"no discriminator bits at thresholds {lam.as_tuple()}")
    return DetectorModel(c_a, c_b, lam, ds_orig.layout, vote_threshold, int(both.size))


def classify_matrix(model: DetectorModel, bits) -> tuple[np.ndarray, np.ndarray]:
    """Vote every row of an ``(N, h)`` bit matrix; returns ``(tags, agreement)``."""
    bits = np.atleast_2d(np.asarray(bits))
    if bits.shape[1] != model.layout.total:
        raise ShapeError(f"bit rows have {bits.shape[1]} entries, model expects {model.layout.total}")
    n = model.n_bits
    if n == 0:
        raise DomainError("detector has no classifier bits")
    matches = bits[:, model.c_a].sum(axis=1, dtype=np.int64) + (bits[:, model.c_b] == 0).sum(axis=1, dtype=np.int64)
    v = _exact(model.vote_threshold)
    is_orig = matches * v.denominator >= v.numerator * n
    return np.where(is_orig, ORIGINAL, ADVERSARIAL).astype(np.uint8), matches / n


def classify(model: DetectorModel, v: BitVector) -> tuple[int, float]:
    """``(ORIGINAL or ADVERSARIAL, agreement fraction)`` for one bit vector."""
    if v.layout != model.layout:
        raise ShapeError(f"layout mismatch: {v.layout} vs {model.layout}")
    tags, agree = classify_matrix(model, v.to_array()[None, :])
    return int(tags[0]), float(agree[0])


@dataclass
class EvalReport:
    accuracy: float
    tp_rate: float
    tn_rate: float
    tp: int
    fn: int
    tn: int
    fp: int
    n_bits: int
    thresholds: Thresholds
    bits_per_layer: list = field(default_factory=list)

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "tp_rate": self.tp_rate,
            "tn_rate": self.tn_rate,
            "counts": {"tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp},
            "n_bits": self.n_bits,
            "thresholds": list(self.thresholds.as_tuple()),
            "bits_per_layer": list(self.bits_per_layer),
        }


def evaluate(model: DetectorModel, ds_orig: ActivationDataset, ds_adv: ActivationDataset) -> EvalReport:
    """Positive means original: TP rate is the fraction of originals accepted."""
    pred_o, _ = classify_matrix(model, ds_orig.bits)
    pred_a, _ = classify_matrix(model, ds_adv.bits)
    tp = int(np.sum(pred_o == ORIGINAL))
    tn = int(np.sum(pred_a == ADVERSARIAL))
    fn, fp = len(ds_orig) - tp, len(ds_adv) - tn
    return EvalReport(
        accuracy=(tp + tn) / (len(ds_orig) + len(ds_adv)),
        tp_rate=tp / len(ds_orig),
        tn_rate=tn / len(ds_adv),
        tp=tp, fn=fn, tn=tn, fp=fp,
        n_bits=model.n_bits,
        thresholds=model.thresholds,
        bits_per_layer=model.bits_per_layer().tolist(),
    )


@dataclass
class SweepRow:
    lam: float
    n_bits: int
    val_accuracy: float = float("nan")
    tp: float = float("nan")
    tn: float = float("nan")
    valid: bool = False


@dataclass
class SweepResult:
    rows: list[SweepRow]
    selected: float
    model: DetectorModel

    def write_csv(self, f):
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["lambda", "n_bits", "val_accuracy", "tp", "tn", "valid"])
        for r in self.rows:
            metrics = [repr(r.val_accuracy), repr(r.tp), repr(r.tn)] if r.valid else ["", "", ""]
            w.writerow([repr(float(r.lam)), r.n_bits, *metrics, int(r.valid)])


def _raw_selection_size(p_orig, p_adv, lam) -> int:
    per_layer = select_sets(p_orig, p_adv, lam)
    union = [np.concatenate([layer[j] for layer in per_layer]) for j in range(4)]
    return int(np.intersect1d(union[0], union[1]).size + np.intersect1d(union[2], union[3]).size)


def sweep(train_orig: ActivationDataset, train_adv: ActivationDataset,
          val_orig: ActivationDataset, val_adv: ActivationDataset,
          grid, vote_threshold: float = 0.5) -> SweepResult:
    """Fit at every shared threshold in ``grid`` and pick the best on validation.

    ``n_bits`` in each row is ``|c_a| + |c_b|`` as selected by the thresholds,
    which only shrinks as the threshold grows.  The winner has the highest
    validation accuracy; ties go to fewer bits, then to the earlier grid point.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise DomainError("threshold grid is empty")
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise DomainError("grid values must lie in [0, 1]")
    p_orig, p_adv = activation_frequency(train_orig), activation_frequency(train_adv)
    rows, models = [], {}
    for j, g in enumerate(grid):
        lam = Thresholds.uniform(g)
        row = SweepRow(g, _raw_selection_size(p_orig, p_adv, lam))
        try:
            model = build_detector(train_orig, train_adv, lam, vote_threshold)
        except EmptyDiscriminatorError:
            rows.append(row)
            continue
        rep = evaluate(model, val_orig, val_adv)
        row.val_accuracy, row.tp, row.tn, row.valid = rep.accuracy, rep.tp_rate, rep.tn_rate, True
        rows.append(row)
        models[j] = model
    if not models:
        raise EmptyDiscriminatorError("no grid point yields discriminator bits")
    best = min(models, key=lambda j: (-rows[j].val_accuracy, rows[j].n_bits, j))
    return SweepResult(rows, grid[best], models[best])


def lambda_grid(lo: float, hi: float, steps: int) -> list[float]:
    if steps < 1:
        raise DomainError("need at least one grid point")
    if steps == 1:
        return [float(lo)]
    return [float(v) for v in np.linspace(lo, hi, steps)]
