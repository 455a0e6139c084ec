"""Activation bit vectors: which ReLU nodes fire strictly positive for an input.

Global node order is layer-major: node ``k`` of layer ``i`` sits at
``offsets[i] + k``.  Single vectors are packed into little-endian uint64 words
(bit ``k`` lives in word ``k // 64`` at position ``k % 64``).
"""

from __future__ import annotations

import io

import numpy as np

from .errors import ParseError, ShapeError
from .network import ActivationTrace, NetworkSpec, forward, header_ints, read_text_header

BITMATRIX_MAGIC = b"RBM1\n"


class LayerLayout:
    """Maps global node indices to ``(layer, local index)`` and back."""

    def __init__(self, widths):
        widths = [int(w) for w in widths]
        if not widths or any(w <= 0 for w in widths):
            raise ShapeError(f"layer widths must be positive, got {widths}")
        self.widths = tuple(widths)
        self.offsets = tuple(int(o) for o in np.concatenate([[0], np.cumsum(widths)[:-1]]))
        self.total = int(sum(widths))

    @classmethod
    def of(cls, net: NetworkSpec) -> "LayerLayout":
        return cls(net.hidden_widths)

    @property
    def n_layers(self) -> int:
        return len(self.widths)

    def locate(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.total:
            raise IndexError(f"node index {k} outside [0, {self.total})")
        i = int(np.searchsorted(self.offsets, k, side="right")) - 1
        return i, k - self.offsets[i]

    def global_index(self, layer: int, local: int) -> int:
        if not 0 <= layer < self.n_layers:
            raise IndexError(f"layer {layer} outside [0, {self.n_layers})")
        if not 0 <= local < self.widths[layer]:
            raise IndexError(f"local index {local} outside layer {layer} of width {self.widths[layer]}")
        return self.offsets[layer] + local

    def layer_of(self) -> np.ndarray:
        """Layer index of every global node, shape ``(total,)``."""
        return np.repeat(np.arange(self.n_layers), self.widths)

    def layer_range(self, layer: int) -> slice:
        if not 0 <= layer < self.n_layers:
            raise IndexError(f"layer {layer} outside [0, {self.n_layers})")
        return slice(self.offsets[layer], self.offsets[layer] + self.widths[layer])

    def __eq__(self, other):
        return isinstance(other, LayerLayout) and self.widths == other.widths

    def __hash__(self):
        return hash(self.widths)

    def __repr__(self):
        return f"LayerLayout({list(self.widths)})"


def pack_bits(bits) -> np.ndarray:
    """Pack a 0/1 array into uint64 words, zero-padded past the end."""
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ShapeError("pack_bits takes a 1-D array")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ShapeError("bits must be 0 or 1")
    n_words = -(-bits.size // 64)
    raw = np.packbits(bits.astype(np.uint8), bitorder="little")
    raw = np.concatenate([raw, np.zeros(8 * n_words - raw.size, dtype=np.uint8)])
    return raw.view("<u8").astype(np.uint64)


def unpack_bits(words: np.ndarray, length: int) -> np.ndarray:
    raw = np.ascontiguousarray(words, dtype="<u8").view(np.uint8)
    return np.unpackbits(raw, count=length, bitorder="little")


class BitVector:
    """Immutable packed bit vector tied to a layer layout."""

    __slots__ = ("words", "layout")

    def __init__(self, words: np.ndarray, layout: LayerLayout):
        words = np.asarray(words, dtype=np.uint64)
        if words.shape != (-(-layout.total // 64),):
            raise ShapeError(f"{words.size} words cannot hold {layout.total} bits")
        words = words.copy()
        words.flags.writeable = False
        self.words = words
        self.layout = layout

    @classmethod
    def from_bits(cls, bits, layout: LayerLayout) -> "BitVector":
        bits = np.asarray(bits)
        if bits.shape != (layout.total,):
            raise ShapeError(f"got {bits.shape[0] if bits.ndim else 0} bits for layout of {layout.total}")
        return cls(pack_bits(bits), layout)

    def __len__(self):
        return self.layout.total

    def to_array(self) -> np.ndarray:
        return unpack_bits(self.words, self.layout.total)

    def __getitem__(self, k):
        return self.to_array()[k]

    def __eq__(self, other):
        return (
            isinstance(other, BitVector)
            and self.layout == other.layout
            and np.array_equal(self.words, other.words)
        )

    def __hash__(self):
        return hash((self.layout, self.words.tobytes()))

    def hex(self) -> str:
        """Hex of the little-endian packed bytes, ``ceil(h/8)`` bytes long."""
        return np.packbits(self.to_array(), bitorder="little").tobytes().hex()

    def __repr__(self):
        return f"BitVector({''.join(map(str, self.to_array()))})"


def extract_bits(trace: ActivationTrace, layout: LayerLayout) -> BitVector:
    """Bit ``k`` is 1 iff node ``k`` outputs a strictly positive value."""
    if list(trace.widths) != list(layout.widths):
        raise ShapeError(f"trace widths {trace.widths} do not match layout {list(layout.widths)}")
    if trace.post_activations[0].ndim != 1:
        raise ShapeError("extract_bits takes a single-input trace; use extract_bit_matrix for batches")
    bits = np.concatenate([a > 0 for a in trace.post_activations]).astype(np.uint8)
    return BitVector.from_bits(bits, layout)


def extract_bit_matrix(trace: ActivationTrace, layout: LayerLayout) -> np.ndarray:
    """Bits of a batch trace as a uint8 ``(N, h)`` matrix."""
    if list(trace.widths) != list(layout.widths):
        raise ShapeError(f"trace widths {trace.widths} do not match layout {list(layout.widths)}")
    return np.concatenate([np.atleast_2d(a) > 0 for a in trace.post_activations], axis=1).astype(np.uint8)


def bit_matrix(net: NetworkSpec, X, chunk: int = 4096) -> np.ndarray:
    """Forward ``X`` in chunks and return its ``(N, h)`` bit matrix."""
    layout = LayerLayout.of(net)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    parts = [extract_bit_matrix(forward(net, X[s:s + chunk]), layout) for s in range(0, X.shape[0], chunk)]
    if not parts:
        return np.zeros((0, layout.total), dtype=np.uint8)
    return np.concatenate(parts, axis=0)


def hamming(a: BitVector, b: BitVector) -> int:
    if a.layout != b.layout:
        raise ShapeError(f"layout mismatch: {a.layout} vs {b.layout}")
    return int(np.bitwise_count(a.words ^ b.words).sum())


def layer_slice(v: BitVector, layer: int) -> np.ndarray:
    return v.to_array()[v.layout.layer_range(layer)]


# -- bit-matrix files --------------------------------------------------------

def dumps_bit_matrix(bits: np.ndarray, widths, tags, labels) -> bytes:
    """Serialize an ``(N, h)`` 0/1 matrix with per-row tag (0 original, 1 adversarial) and label."""
    bits = np.asarray(bits, dtype=np.uint8)
    n, h = bits.shape
    if sum(widths) != h:
        raise ShapeError(f"widths sum to {sum(widths)}, matrix has {h} columns")
    tags = np.asarray(tags, dtype=np.uint8)
    labels = np.asarray(labels, dtype="<i4")
    if tags.shape != (n,) or labels.shape != (n,):
        raise ShapeError("need one tag and one label per row")
    buf = io.BytesIO()
    buf.write(BITMATRIX_MAGIC)
    header = f"n {n}\nh {h}\nwidths {' '.join(map(str, widths))}\nend\n"
    buf.write(header.encode("ascii"))
    buf.write(tags.tobytes())
    buf.write(labels.tobytes())
    buf.write(np.packbits(bits, axis=1, bitorder="little").tobytes())
    return buf.getvalue()


def loads_bit_matrix(data: bytes):
    """Inverse of :func:`dumps_bit_matrix`; returns ``(bits, widths, tags, labels)``."""
    entries, pos = read_text_header(data, BITMATRIX_MAGIC)
    fields = {}
    for key, values, off in entries:
        if key not in ("n", "h", "widths"):
            raise ParseError(f"unknown header key {key!r}", off)
        fields[key] = (header_ints(values, off, key), off)
    for key in ("n", "h", "widths"):
        if key not in fields:
            raise ParseError(f"missing header key {key!r}", len(BITMATRIX_MAGIC))
    (n,), _ = fields["n"]
    (h,), off_h = fields["h"]
    widths, off_w = fields["widths"]
    if sum(widths) != h or any(w <= 0 for w in widths):
        raise ParseError(f"widths {widths} inconsistent with h={h}", off_w)
    row_bytes = -(-h // 8)
    need = n + 4 * n + n * row_bytes
    if len(data) - pos != need:
        raise ParseError(f"payload is {len(data) - pos} bytes, header implies {need}", pos)
    tags = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos).copy()
    if np.any(tags > 1):
        raise ParseError("tag bytes must be 0 or 1", pos)
    labels = np.frombuffer(data, dtype="<i4", count=n, offset=pos + n).astype(np.int64)
    packed = np.frombuffer(data, dtype=np.uint8, count=n * row_bytes, offset=pos + 5 * n)
    bits = np.unpackbits(packed.reshape(n, row_bytes), axis=1, count=h, bitorder="little")
    return bits, widths, tags, labels
