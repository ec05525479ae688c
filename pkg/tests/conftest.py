import sys

import numpy as np
import pytest
from hypothesis import settings

from rdcompress.net import Dataset, DenseLayer, Network

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")


def random_net(rng, sizes, head="regression", last="identity", temperature=1.0, include_bias=True, scale=1.0):
    layers = []
    for l, (a, b) in enumerate(zip(sizes, sizes[1:])):
        act = last if l == len(sizes) - 2 else "relu"
        W = scale * rng.standard_normal((b, a)) / np.sqrt(a)
        layers.append(DenseLayer(W, 0.3 * rng.standard_normal(b), act))
    return Network(layers, head=head, temperature=temperature, include_bias=include_bias)


def random_data(rng, net, n, labels=True):
    X = rng.standard_normal((n, net.input_dim))
    if not labels:
        return Dataset(X)
    if net.head == "classification":
        return Dataset(X, rng.integers(0, net.output_dim, size=n))
    return Dataset(X, rng.standard_normal((n, net.output_dim)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def kink_margin(net, X):
    """Smallest |pre-activation| of any ReLU unit over the batch."""
    a = np.atleast_2d(X)
    margin = np.inf
    for layer in net.layers:
        z = a @ layer.weights.T + layer.bias
        if layer.activation == "relu":
            margin = min(margin, float(np.min(np.abs(z))))
            a = np.maximum(z, 0.0)
        else:
            a = z
    return margin


def smooth_net(rng, sizes, x, margin=1e-3, **kw):
    """A random net whose ReLUs all sit at least ``margin`` from their kink at ``x``."""
    for _ in range(1000):
        net = random_net(rng, sizes, **kw)
        if kink_margin(net, x) > margin:
            return net
    raise RuntimeError("could not draw a net away from the ReLU kinks")


def fd_jacobian(f, w, h=1e-6):
    cols = []
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        cols.append((f(w + e) - f(w - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_second_diag(f, w, h=1e-4):
    f0 = f(w)
    out = np.empty(len(w))
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        out[i] = (f(w + e) - 2 * f0 + f(w - e)) / (h * h)
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
