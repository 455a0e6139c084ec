"""Probing the polyhedral decomposition a ReLU network induces on its input space.

Each region is labelled by the bit vector its points produce.  Regions met
along a segment are found by bisection on the bit vector; a census over a
nested dyadic grid lists the bit vectors realised inside a 2-D box.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bitvec import BitVector, LayerLayout, bit_matrix, extract_bits, hamming
from .errors import BudgetError, DomainError
from .network import NetworkSpec, forward


@dataclass(frozen=True)
class RegionId:
    bits: BitVector
    witness: np.ndarray

    def verify(self, net: NetworkSpec) -> bool:
        return region_of(net, self.witness).bits == self.bits


def region_of(net: NetworkSpec, x) -> RegionId:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DomainError("region_of takes a single input vector")
    bits = extract_bits(forward(net, x), LayerLayout.of(net))
    return RegionId(bits, x.copy())


def is_hamming_neighbor(u: BitVector, v: BitVector) -> bool:
    """Differ in exactly one bit.

    Necessary for two regions to share a facet, not sufficient.
    """
    return hamming(u, v) == 1


@dataclass(frozen=True)
class Transition:
    t_lo: float
    t_hi: float
    flipped: tuple[int, ...]

    @property
    def t(self) -> float:
        return 0.5 * (self.t_lo + self.t_hi)


@dataclass
class WalkResult:
    transitions: list[Transition]
    regions: list[RegionId]
    tolerance: float

    @property
    def total_flips(self) -> int:
        return sum(len(tr.flipped) for tr in self.transitions)

    def write_csv(self, f):
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t_lo", "t_hi", "flipped_indices"])
        for tr in self.transitions:
            w.writerow([repr(tr.t_lo), repr(tr.t_hi), " ".join(map(str, tr.flipped))])


def segment_walk(net: NetworkSpec, a, b, delta: float, max_evals: int = 1_000_000) -> WalkResult:
    """Locate bit-vector changes along ``x(t) = (1 - t) a + t b`` to within ``delta`` in ``t``.

    An interval is split only while its endpoints disagree, so an excursion that
    leaves a region and comes back between two agreeing samples is not seen.
    Several bits flipping inside one final interval are reported together.
    """
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError("endpoints must be vectors of equal length")
    layout = LayerLayout.of(net)
    cache: dict[float, BitVector] = {}

    def point(t):
        return a if t == 0.0 else b if t == 1.0 else (1.0 - t) * a + t * b

    def bits_at(t):
        if t not in cache:
            if len(cache) >= max_evals:
                raise BudgetError(f"more than {max_evals} evaluations; deepest interval {deepest}", deepest)
            cache[t] = extract_bits(forward(net, point(t)), layout)
        return cache[t]

    deepest = (0.0, 1.0)
    transitions = []
    stack = [(0.0, 1.0)]
    while stack:
        lo, hi = stack.pop()
        u, v = bits_at(lo), bits_at(hi)
        if u == v:
            continue
        if hi - lo <= delta:
            flipped = np.flatnonzero(u.to_array() != v.to_array())
            transitions.append(Transition(lo, hi, tuple(int(k) for k in flipped)))
            continue
        mid = 0.5 * (lo + hi)
        if hi - lo < deepest[1] - deepest[0]:
            deepest = (lo, hi)
        if not lo < mid < hi:
            raise BudgetError(f"interval {(lo, hi)} cannot be split further at delta={delta}", (lo, hi))
        stack.append((mid, hi))
        stack.append((lo, mid))
    regions = [RegionId(bits_at(0.0), a.copy())]
    regions += [RegionId(bits_at(tr.t_hi), point(tr.t_hi)) for tr in transitions]
    return WalkResult(transitions, regions, delta)


@dataclass(frozen=True)
class CensusEntry:
    bits: BitVector
    count: int
    witness: np.ndarray


def grid_points(box, depth: int) -> np.ndarray:
    """``(2**depth + 1)**2`` points of the dyadic grid, row-major in (x, y).

    Coordinates are ``lo + (hi - lo) * (i / 2**depth)``; the fraction is exact
    so every grid point reappears bit-for-bit at the next depth.
    """
    if depth < 0:
        raise DomainError("depth must be >= 0")
    lo, hi = (float(v) for v in box)
    if not lo < hi:
        raise DomainError(f"box must satisfy lo < hi, got {box}")
    n = 2 ** depth
    coords = lo + (hi - lo) * (np.arange(n + 1) / n)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def grid_census(net: NetworkSpec, box, depth: int) -> list[CensusEntry]:
    """Distinct bit vectors on the grid over ``box x box``, in first-seen order."""
    if net.input_dim != 2:
        raise DomainError(f"grid census needs a 2-D input, network takes {net.input_dim}")
    pts = grid_points(box, depth)
    bits = bit_matrix(net, pts)
    uniq, first, counts = np.unique(bits, axis=0, return_index=True, return_counts=True)
    layout = LayerLayout.of(net)
    order = np.argsort(first)
    return [CensusEntry(BitVector.from_bits(uniq[j], layout), int(counts[j]), pts[first[j]].copy())
            for j in order]


def write_census_csv(f, census: list[CensusEntry]):
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["bitvector_hex", "count", "witness_x", "witness_y"])
    for e in census:
        w.writerow([e.bits.hex(), e.count, repr(float(e.witness[0])), repr(float(e.witness[1]))])
