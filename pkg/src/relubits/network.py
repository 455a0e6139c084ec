"""Fully-connected ReLU networks: forward pass, loss, input gradients, SGD, model files.

A network with ``layer_dims = [m, h_1, ..., h_L, c]`` has ``L`` hidden ReLU
layers followed by an affine output layer producing ``c`` logits.  All
arithmetic is float64.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, LabelError, ParseError, ShapeError

log = logging.getLogger(__name__)

MODEL_MAGIC = b"RBP1\n"


@dataclass(eq=False)
class NetworkSpec:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        dims = self.layer_dims
        if len(dims) < 3:
            raise ShapeError("need at least one hidden ReLU layer: layer_dims=[m, h_1, ..., c]")
        if any(d <= 0 for d in dims):
            raise ShapeError(f"layer dims must be positive, got {dims}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ShapeError(f"expected {len(dims) - 1} weight/bias pairs")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]):
                raise ShapeError(f"layer {i}: weight shape {w.shape}, expected {(dims[i + 1], dims[i])}")
            if b.shape != (dims[i + 1],):
                raise ShapeError(f"layer {i}: bias shape {b.shape}, expected {(dims[i + 1],)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DomainError(f"layer {i}: non-finite parameters")
        if self.seed < 0:
            raise DomainError("seed must be unsigned")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def hidden_widths(self) -> list[int]:
        return self.layer_dims[1:-1]

    def copy(self) -> "NetworkSpec":
        return NetworkSpec(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.seed,
        )

    def __eq__(self, other):
        if not isinstance(other, NetworkSpec):
            return NotImplemented
        return (
            self.layer_dims == other.layer_dims
            and self.seed == other.seed
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


@dataclass
class ActivationTrace:
    """Pre/post activations of every hidden layer plus the logits.

    For a single input each entry is 1-D; for a batch each entry is ``(N, width)``.
    """

    pre_activations: list[np.ndarray]
    post_activations: list[np.ndarray]
    logits: np.ndarray

    @property
    def widths(self) -> list[int]:
        return [z.shape[-1] for z in self.pre_activations]


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    weight_init_scale: float = 1.0
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if self.epochs < 0:
            raise DomainError("epochs must be non-negative")
        if self.batch_size <= 0:
            raise DomainError("batch_size must be positive")
        if self.seed < 0:
            raise DomainError("seed must be unsigned")
        if not self.weight_init_scale > 0:
            raise DomainError("weight_init_scale must be positive")


def init_network(layer_dims, seed=0, weight_init_scale=1.0) -> NetworkSpec:
    """Uniform init in [-s, s], s = weight_init_scale / sqrt(fan_in), for weights and biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        s = weight_init_scale / np.sqrt(fan_in)
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-s, s, size=fan_out))
    return NetworkSpec(list(layer_dims), weights, biases, seed)


def _check_input(net: NetworkSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise ShapeError(f"input has shape {x.shape}, network expects last dim {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise DomainError("input contains non-finite values")
    return x


def forward(net: NetworkSpec, x) -> ActivationTrace:
    """Run ``x`` (a vector, or a batch with one input per row) through the network."""
    a = _check_input(net, x)
    pre, post = [], []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w.T + b
        a = np.maximum(z, 0.0)
        pre.append(z)
        post.append(a)
    logits = a @ net.weights[-1].T + net.biases[-1]
    return ActivationTrace(pre, post, logits)


def predict(net: NetworkSpec, X) -> np.ndarray:
    return np.argmax(forward(net, X).logits, axis=-1)


def accuracy(net: NetworkSpec, X, y) -> float:
    return float(np.mean(predict(net, X) == np.asarray(y)))


def _check_labels(labels, n_classes):
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise LabelError("labels must be integer class indices")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"label out of range [0, {n_classes})")
    return labels


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def loss(logits, label) -> float:
    """Softmax cross-entropy ``-log softmax(logits)[label]``."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ShapeError("loss takes a single logit vector")
    if not np.all(np.isfinite(logits)):
        raise DomainError("logits contain non-finite values")
    label = int(_check_labels(np.array([label]), logits.size)[0])
    top = int(np.argmax(logits))
    # log1p over the non-max terms keeps saturated losses (~1e-9) accurate
    rest = np.exp(np.delete(logits, top) - logits[top]).sum()
    return float((logits[top] - logits[label]) + np.log1p(rest))


def _softmax(logits):
    e = np.exp(logits - np.max(logits, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _backward(net: NetworkSpec, X: np.ndarray, trace: ActivationTrace, dlogits: np.ndarray):
    """Backprop ``dlogits`` (N, c) for a batch ``X``; returns (input grad, weight grads, bias grads)."""
    n_layers = len(net.weights)
    gw, gb = [None] * n_layers, [None] * n_layers
    delta = dlogits
    for i in range(n_layers - 1, -1, -1):
        a_prev = trace.post_activations[i - 1] if i > 0 else X
        gw[i] = delta.T @ a_prev
        gb[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i]
        if i > 0:
            # subgradient 0 at the kink, matching bit 0 for z == 0
            delta = delta * (trace.pre_activations[i - 1] > 0)
    return delta, gw, gb


def input_gradient(net: NetworkSpec, x, label) -> np.ndarray:
    """Gradient of the cross-entropy loss with respect to the input.

    ``x`` may be one vector (``label`` an int) or a batch (``label`` an array);
    batch rows get their own per-example gradient.
    """
    x = _check_input(net, x)
    single = x.ndim == 1
    labels = _check_labels(np.atleast_1d(label), net.n_classes)
    X = np.atleast_2d(x)
    trace = forward(net, X)
    if labels.shape[0] != trace.logits.shape[0]:
        raise ShapeError("one label per input row required")
    dlogits = _softmax(trace.logits)
    dlogits[np.arange(labels.size), labels] -= 1.0
    dx, _, _ = _backward(net, X, trace, dlogits)
    return dx[0] if single else dx


def train(net: NetworkSpec, features, labels, cfg: TrainConfig) -> NetworkSpec:
    """Mini-batch SGD on mean softmax cross-entropy; returns a new network.

    Deterministic given the network, ``cfg.seed`` and the row order of the data.
    Per-epoch (loss, train accuracy) pairs are appended to ``cfg.history``.
    """
    X = _check_input(net, features)
    y = _check_labels(labels, net.n_classes)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DomainError("training set is empty")
    if y.shape != (X.shape[0],):
        raise ShapeError("one label per training row required")
    out = net.copy()
    if cfg.epochs == 0:
        return out
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = X[idx]
            trace = forward(out, xb)
            dlogits = _softmax(trace.logits)
            dlogits[np.arange(idx.size), y[idx]] -= 1.0
            dlogits /= idx.size
            _, gw, gb = _backward(out, xb, trace, dlogits)
            for i in range(len(out.weights)):
                out.weights[i] -= cfg.learning_rate * gw[i]
                out.biases[i] -= cfg.learning_rate * gb[i]
        logits = forward(out, X).logits
        mean_loss = float(-np.mean(_log_softmax(logits)[np.arange(n), y]))
        acc = float(np.mean(np.argmax(logits, axis=1) == y))
        cfg.history.append((mean_loss, acc))
        log.debug("epoch %d loss %.4f acc %.4f", epoch, mean_loss, acc)
    if not all(np.all(np.isfinite(w)) for w in out.weights):
        raise DomainError("training diverged; lower the learning rate")
    log.info("trained %d epochs, final train accuracy %.4f", cfg.epochs, cfg.history[-1][1])
    return out


# -- model files -------------------------------------------------------------

def save_model(net: NetworkSpec) -> bytes:
    lines = [
        "layer_dims " + " ".join(map(str, net.layer_dims)),
        f"seed {net.seed}",
    ]
    for i, w in enumerate(net.weights):
        lines.append(f"layer {i} {w.shape[0]} {w.shape[1]}")
    lines.append("end")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(("\n".join(lines) + "\n").encode("ascii"))
    for w, b in zip(net.weights, net.biases):
        buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return buf.getvalue()


def read_text_header(data: bytes, magic: bytes) -> tuple[list[tuple[str, list[str], int]], int]:
    """Parse ``magic`` + newline-terminated ``key values...`` lines up to ``end``.

    Returns ``[(key, values, line_offset)]`` and the offset of the first payload byte.
    """
    if not data.startswith(magic):
        raise ParseError(f"bad magic, expected {magic!r}", 0)
    pos = len(magic)
    entries = []
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ParseError("header not terminated by 'end'", pos)
        try:
            parts = data[pos:nl].decode("ascii").split()
        except UnicodeDecodeError:
            raise ParseError("non-ascii header line", pos) from None
        if parts == ["end"]:
            return entries, nl + 1
        if not parts:
            raise ParseError("empty header line", pos)
        entries.append((parts[0], parts[1:], pos))
        pos = nl + 1


def header_ints(values, offset, what):
    try:
        return [int(v) for v in values]
    except ValueError:
        raise ParseError(f"non-integer value in {what}", offset) from None


def load_model(data: bytes) -> NetworkSpec:
    entries, pos = read_text_header(data, MODEL_MAGIC)
    dims, seed, declared = None, 0, {}
    for key, values, off in entries:
        if key == "layer_dims":
            dims = header_ints(values, off, key)
        elif key == "seed":
            (seed,) = header_ints(values, off, key)
        elif key == "layer":
            if len(values) != 3:
                raise ParseError("layer line needs index, rows, cols", off)
            i, r, c = header_ints(values, off, key)
            declared[i] = (r, c, off)
        else:
            raise ParseError(f"unknown header key {key!r}", off)
    if dims is None or len(dims) < 3 or any(d <= 0 for d in dims):
        raise ParseError("missing or invalid layer_dims", len(MODEL_MAGIC))
    weights, biases = [], []
    for i in range(len(dims) - 1):
        rows, cols = dims[i + 1], dims[i]
        if i in declared and declared[i][:2] != (rows, cols):
            r, c, off = declared[i]
            raise ParseError(f"layer {i}: declared size {r}x{c} does not match layer_dims {rows}x{cols}", off)
        need = 8 * (rows * cols + rows)
        if pos + need > len(data):
            raise ParseError(f"layer {i}: truncated, need {need} bytes, have {len(data) - pos}", pos)
        w = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols)
        b = np.frombuffer(data, dtype="<f8", count=rows, offset=pos + 8 * rows * cols)
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
        pos += need
    extra = set(declared) - set(range(len(dims) - 1))
    if extra:
        raise ParseError(f"layer {min(extra)}: declared but not implied by layer_dims", declared[min(extra)][2])
    if pos != len(data):
        raise ParseError(f"{len(data) - pos} trailing bytes after last layer", pos)
    return NetworkSpec(dims, weights, biases, seed)


def write_model_file(path, net: NetworkSpec):
    with open(path, "wb") as f:
        f.write(save_model(net))


def read_model_file(path) -> NetworkSpec:
    with open(path, "rb") as f:
        return load_model(f.read())
