"""Dense feed-forward networks and the exact derivatives the importance
estimators consume.

All batch routines share one reverse sweep layout: for every layer they yield a
pair ``(delta, a_prev)`` where ``delta`` holds derivatives with respect to the
layer's pre-activations and ``a_prev`` the layer input. The derivative with
respect to ``W[j, k]`` is then ``delta[..., j] * a_prev[..., k]`` and with
respect to ``b[j]`` simply ``delta[..., j]``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericError, ShapeError

EPS_P = 1e-12
BIAS = -1

ACTIVATIONS = ("relu", "identity")
HEADS = ("regression", "classification")


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2:
            raise ShapeError("layer weights must be a matrix")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != out dim {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise NumericError("layer parameters must be finite")

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]


@dataclass
class Network:
    layers: list
    head: str = "regression"
    temperature: float = 1.0
    include_bias: bool = True

    def __post_init__(self):
        self.layers = list(self.layers)
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        for l, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise ShapeError(
                    f"layer {l} out dim {a.out_dim} != layer {l + 1} in dim {b.in_dim}"
                )

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    @property
    def n_params(self):
        return self.flat_index().size

    def flat_index(self):
        return FlatIndex.from_network(self)

    def get_flat(self):
        parts = []
        for layer in self.layers:
            parts.append(layer.weights.ravel())
            if self.include_bias:
                parts.append(layer.bias)
        return np.concatenate(parts)

    def with_flat(self, w):
        """Copy of the network with its compressible parameters replaced by ``w``."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got {w.shape}")
        layers = []
        pos = 0
        for layer in self.layers:
            n = layer.weights.size
            weights = w[pos:pos + n].reshape(layer.weights.shape).copy()
            pos += n
            if self.include_bias:
                bias = w[pos:pos + layer.out_dim].copy()
                pos += layer.out_dim
            else:
                bias = layer.bias.copy()
            layers.append(DenseLayer(weights, bias, layer.activation))
        return replace(self, layers=layers)

    def with_temperature(self, temperature):
        return replace(self, temperature=float(temperature))

    def copy(self):
        return self.with_flat(self.get_flat())


@dataclass(frozen=True)
class FlatIndex:
    """Bijection between global parameter indices and (layer, row, col).

    ``col == BIAS`` marks a bias entry. Within a layer the weight matrix comes
    first in row-major order, followed by the bias vector when biases are part
    of the compressed parameter set.
    """

    shapes: tuple
    include_bias: bool = True
    offsets: tuple = field(init=False)

    def __post_init__(self):
        offs = [0]
        for out_dim, in_dim in self.shapes:
            offs.append(offs[-1] + out_dim * in_dim + (out_dim if self.include_bias else 0))
        object.__setattr__(self, "offsets", tuple(offs))

    @classmethod
    def from_network(cls, net):
        return cls(tuple(l.weights.shape for l in net.layers), net.include_bias)

    @property
    def size(self):
        return self.offsets[-1]

    def layer_slice(self, layer):
        return slice(self.offsets[layer], self.offsets[layer + 1])

    def to_global(self, layer, row, col):
        out_dim, in_dim = self.shapes[layer]
        if not 0 <= row < out_dim:
            raise IndexError(f"row {row} out of range for layer {layer}")
        base = self.offsets[layer]
        if col == BIAS:
            if not self.include_bias:
                raise IndexError("biases are excluded from the parameter vector")
            return base + out_dim * in_dim + row
        if not 0 <= col < in_dim:
            raise IndexError(f"col {col} out of range for layer {layer}")
        return base + row * in_dim + col

    def from_global(self, i):
        if not 0 <= i < self.size:
            raise IndexError(f"global index {i} out of range")
        layer = int(np.searchsorted(self.offsets, i, side="right")) - 1
        out_dim, in_dim = self.shapes[layer]
        local = i - self.offsets[layer]
        if local >= out_dim * in_dim:
            return layer, local - out_dim * in_dim, BIAS
        return layer, local // in_dim, local % in_dim

    def table(self):
        """Arrays (layer, row, col) for every global index, in order."""
        layers, rows, cols = [], [], []
        for l, (out_dim, in_dim) in enumerate(self.shapes):
            r, c = np.divmod(np.arange(out_dim * in_dim), in_dim)
            layers.append(np.full(out_dim * in_dim, l))
            rows.append(r)
            cols.append(c)
            if self.include_bias:
                layers.append(np.full(out_dim, l))
                rows.append(np.arange(out_dim))
                cols.append(np.full(out_dim, BIAS))
        return np.concatenate(layers), np.concatenate(rows), np.concatenate(cols)


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        self.inputs = np.array(self.inputs, dtype=np.float64, ndmin=2)
        if self.inputs.shape[0] < 1:
            raise ShapeError("dataset is empty")
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape[0] != self.inputs.shape[0]:
                raise ShapeError("labels and inputs disagree on sample count")
            self.labels = labels

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def has_labels(self):
        return self.labels is not None

    def repeat(self, times):
        labels = None if self.labels is None else np.concatenate([self.labels] * times)
        return Dataset(np.concatenate([self.inputs] * times), labels)


def _activate(kind, z):
    if kind == "relu":
        return np.where(z >= 0, z, 0.0)
    return z


def _activate_deriv(kind, z):
    if kind == "relu":
        return (z >= 0).astype(np.float64)
    return np.ones_like(z)


def _softmax(logits, temperature):
    s = logits / temperature
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def _check_inputs(net, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != net.input_dim:
        raise ShapeError(f"input dim {X.shape[1]} != network input dim {net.input_dim}")
    return X


class _Trace:
    """Activations ``a[0..L]`` and pre-activations ``z[1..L]`` of a batch."""

    def __init__(self, net, X):
        self.a = [X]
        self.z = []
        for layer in net.layers:
            z = self.a[-1] @ layer.weights.T + layer.bias
            self.z.append(z)
            self.a.append(_activate(layer.activation, z))
        if not np.all(np.isfinite(self.a[-1])):
            raise NumericError("non-finite network output")
        if net.head == "classification":
            self.out = _softmax(self.a[-1], net.temperature)
        else:
            self.out = self.a[-1]


def forward_batch(net, X):
    """Outputs for every row of ``X``: raw values or temperature-scaled softmax."""
    return _Trace(net, _check_inputs(net, X)).out


def forward(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("forward expects a single input vector")
    return forward_batch(net, x)[0]


def _sweep(net, trace, delta_out):
    """Push ``delta_out`` (dF/da_L, shape (n, K, out)) back through the net."""
    G = delta_out
    terms = [None] * len(net.layers)
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        delta = G * _activate_deriv(layer.activation, trace.z[l])[:, None, :]
        terms[l] = (delta, trace.a[l])
        if l:
            G = delta @ layer.weights
    return terms


def output_terms(net, X):
    """Per-layer (delta, a_prev) for every output component.

    ``delta`` has shape (n, C, out_dim). Also returns the network outputs.
    """
    trace = _Trace(net, _check_inputs(net, X))
    n, C = trace.out.shape
    if net.head == "classification":
        p = trace.out
        J = (p[:, :, None] * np.eye(C)[None] - p[:, :, None] * p[:, None, :]) / net.temperature
    else:
        J = np.broadcast_to(np.eye(C), (n, C, C))
    return _sweep(net, trace, J), trace.out


def _labels_matrix(net, Y, n):
    if Y is None:
        raise ValueError("labels are required for loss-based quantities")
    Y = np.asarray(Y)
    if net.head == "classification":
        Y = Y.reshape(-1).astype(np.int64)
        if Y.shape[0] != n:
            raise ShapeError("label count mismatch")
        if np.any(Y < 0) or np.any(Y >= net.output_dim):
            raise ShapeError("class label out of range")
        return np.eye(net.output_dim)[Y]
    Y = np.asarray(Y, dtype=np.float64).reshape(n, -1)
    if Y.shape[1] != net.output_dim:
        raise ShapeError(f"target dim {Y.shape[1]} != output dim {net.output_dim}")
    return Y


def loss_values(net, X, Y):
    """Per-sample loss: cross-entropy at the network temperature, or squared
    error (no 1/2 factor) for regression heads."""
    X = _check_inputs(net, X)
    trace = _Trace(net, X)
    T = _labels_matrix(net, Y, X.shape[0])
    if net.head == "classification":
        p = np.maximum(trace.out, EPS_P)
        return -np.sum(T * np.log(p), axis=1)
    return np.sum((trace.out - T) ** 2, axis=1)


def loss_grad_terms(net, X, Y):
    """Per-layer (delta, a_prev) of the per-sample loss gradient; delta is (n, out)."""
    X = _check_inputs(net, X)
    trace = _Trace(net, X)
    T = _labels_matrix(net, Y, X.shape[0])
    if net.head == "classification":
        g = (trace.out - T) / net.temperature
    else:
        g = 2.0 * (trace.out - T)
    terms = _sweep(net, trace, g[:, None, :])
    return [(d[:, 0, :], a) for d, a in terms]


def loss_hess_terms(net, X, Y):
    """Per-layer (h, a_prev) where ``h[n, j]`` is d2L/dz_j^2 for sample n.

    The diagonal Hessian entry of weight ``W[j, k]`` is ``h[n, j] * a_prev[n, k]**2``.
    Full curvature blocks are propagated layer by layer; ReLU and identity have
    zero second derivative away from the kink, so the result is exact there.
    """
    X = _check_inputs(net, X)
    trace = _Trace(net, X)
    n = X.shape[0]
    _labels_matrix(net, Y, n)
    C = net.output_dim
    if net.head == "classification":
        p = trace.out
        H = (p[:, :, None] * np.eye(C)[None] - p[:, :, None] * p[:, None, :]) / net.temperature**2
    else:
        H = np.broadcast_to(2.0 * np.eye(C), (n, C, C))
    terms = [None] * len(net.layers)
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        d = _activate_deriv(layer.activation, trace.z[l])
        Hz = H * d[:, :, None] * d[:, None, :]
        terms[l] = (np.diagonal(Hz, axis1=1, axis2=2).copy(), trace.a[l])
        if l:
            H = layer.weights.T @ Hz @ layer.weights
    return terms


def assemble(net, terms, power=1):
    """Stack per-layer (delta, a_prev) terms into per-sample flat vectors.

    ``power`` raises ``a_prev`` before the product; with ``power=2`` and
    Hessian terms this yields the diagonal Hessian entries.
    """
    parts = []
    for delta, a in terms:
        ap = a if power == 1 else a**power
        n = delta.shape[0]
        lead = delta.shape[:-1]
        dW = delta[..., :, None] * ap.reshape((n,) + (1,) * (delta.ndim - 2) + ap.shape[1:])[..., None, :]
        parts.append(dW.reshape(lead + (-1,)))
        if net.include_bias:
            parts.append(delta)
    out = np.concatenate(parts, axis=-1)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite derivative")
    return out


def jacobian_outputs(net, x):
    """Matrix (C, m) of d f^(c) / d w_i at a single input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("jacobian_outputs expects a single input vector")
    terms, _ = output_terms(net, x)
    return assemble(net, terms)[0]


def grad_loss(net, x, y):
    x = np.asarray(x, dtype=np.float64)
    return assemble(net, loss_grad_terms(net, x, [y] if np.ndim(y) == 0 else np.atleast_2d(y)))[0]


def hessian_diag_loss(net, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = [y] if np.ndim(y) == 0 else np.atleast_2d(y)
    return assemble(net, loss_hess_terms(net, x, y), power=2)[0]


def mean_grad_loss(net, data):
    """Gradient of the mean loss over a dataset (flat vector)."""
    parts = []
    for delta, a in loss_grad_terms(net, data.inputs, data.labels):
        parts.append((delta.T @ a).ravel() / data.n)
        if net.include_bias:
            parts.append(delta.mean(axis=0))
    return np.concatenate(parts)
