"""Distortion and quality metrics, network-level compression and the sweep harness."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import compress, importance
from . import net as netmod
from .errors import DomainError, ShapeError

COMPRESSORS = ("prune", "quant", "quant-quartic")
MODES = ("layer", "global")
REPORT_COLUMNS = (
    "method", "compressor", "param", "ratio", "mse", "kl",
    "supervised_sq", "accuracy", "cross_entropy", "loss_gap",
)


def _same_shape(net, net_hat):
    if len(net.layers) != len(net_hat.layers):
        raise ShapeError("networks differ in depth")
    for a, b in zip(net.layers, net_hat.layers):
        if a.weights.shape != b.weights.shape:
            raise ShapeError("networks differ in layer shapes")
    if net.head != net_hat.head:
        raise ShapeError("networks differ in head")


def distortion_mse(net, net_hat, data):
    """Mean over samples of ||f_w(x) - f_what(x)||^2 (regression heads)."""
    _same_shape(net, net_hat)
    if net.head != "regression":
        raise ValueError("distortion_mse needs regression heads")
    d = netmod.forward_batch(net, data.inputs) - netmod.forward_batch(net_hat, data.inputs)
    return float(np.mean(np.sum(d * d, axis=1)))


def kl_rows(p_hat, p, eps=netmod.EPS_P):
    """Row-wise sum_c p_hat log(p_hat / max(p, eps)); 0 log 0 = 0."""
    p_hat = np.asarray(p_hat, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if p_hat.shape != p.shape:
        raise ShapeError("distribution shapes differ")
    safe = np.where(p_hat > 0, p_hat, 1.0)
    terms = np.where(p_hat > 0, p_hat * np.log(safe / np.maximum(p, eps)), 0.0)
    return terms.sum(axis=-1)


def kl_quadratic(p_hat, p, eps=netmod.EPS_P):
    """Second-order expansion 1/2 sum_c (p_hat - p)^2 / p of :func:`kl_rows`."""
    p_hat = np.asarray(p_hat, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    return 0.5 * np.sum((p_hat - p) ** 2 / np.maximum(p, eps), axis=-1)


def distortion_kl(net, net_hat, data):
    """Mean KL(f_what(x) || f_w(x)) in nats (classification heads)."""
    _same_shape(net, net_hat)
    if net.head != "classification":
        raise ValueError("distortion_kl needs classification heads")
    p = netmod.forward_batch(net, data.inputs)
    q = netmod.forward_batch(net_hat, data.inputs)
    return float(np.mean(kl_rows(q, p)))


def _require_labels(data):
    if not data.has_labels:
        raise ValueError("metric needs labels")


def distortion_supervised(net, net_hat, data):
    """Mean of (L_w(x, y) - L_what(x, y))^2."""
    _same_shape(net, net_hat)
    _require_labels(data)
    d = netmod.loss_values(net, data.inputs, data.labels) - netmod.loss_values(net_hat, data.inputs, data.labels)
    return float(np.mean(d * d))


def loss_gap(net, net_hat, data):
    """Mean of L_what - L_w. Reported only; signed, so not a distortion."""
    _same_shape(net, net_hat)
    _require_labels(data)
    d = netmod.loss_values(net_hat, data.inputs, data.labels) - netmod.loss_values(net, data.inputs, data.labels)
    return float(np.mean(d))


def supervised_surrogate(net, w_hat, data):
    """mean_n (g_n . e + 1/2 sum_i h_ni e_i^2)^2 with e = w_hat - w.

    Second-order model of :func:`distortion_supervised` built from the exact
    per-sample gradient and Hessian diagonal at ``w``.
    """
    _require_labels(data)
    e = np.asarray(w_hat, dtype=np.float64) - net.get_flat()
    g = netmod.assemble(net, netmod.loss_grad_terms(net, data.inputs, data.labels))
    h = netmod.assemble(net, netmod.loss_hess_terms(net, data.inputs, data.labels), power=2)
    s = g @ e + 0.5 * (h @ (e * e))
    return float(np.mean(s * s))


def accuracy(net, data):
    if net.head != "classification":
        raise ValueError("accuracy needs a classification head")
    _require_labels(data)
    pred = np.argmax(netmod.forward_batch(net, data.inputs), axis=1)
    return float(np.mean(pred == np.asarray(data.labels).reshape(-1)))


def cross_entropy(net, data):
    """Mean cross-entropy in nats at the network's temperature."""
    if net.head != "classification":
        raise ValueError("cross_entropy needs a classification head")
    _require_labels(data)
    return float(np.mean(netmod.loss_values(net, data.inputs, data.labels)))


def _groups(net, mode):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "global":
        return [slice(0, net.n_params)]
    idx = net.flat_index()
    return [idx.layer_slice(l) for l in range(len(net.layers))]


@dataclass
class NetworkCompression:
    net: netmod.Network
    ratio: float
    masks: list = field(default_factory=list)
    codebooks: list = field(default_factory=list)


def prune_network(net, imp, r, mode="layer"):
    """Keep round(r * m_l) weights in every layer (or over the whole pool)."""
    w = net.get_flat()
    w_hat = np.empty_like(w)
    masks, kept = [], 0
    for sl in _groups(net, mode):
        mask, w_hat[sl] = compress.prune(w[sl], imp.subset(sl), r)
        masks.append(mask)
        kept += int(np.count_nonzero(mask.keep))
    return NetworkCompression(net.with_flat(w_hat), kept / len(w), masks=masks)


def _exact_codebook(w):
    """One centroid per distinct value: quantization is then lossless."""
    c, A = np.unique(w, return_inverse=True)
    return compress.Codebook(c, A.astype(np.int64), np.bincount(A, minlength=len(c)), [0.0], 0, True, [])


def quantize_network(net, imp, k, bits=32, quartic=False, iters=100, seed=0, mode="layer", n_init=10):
    """Weight sharing with ``k`` centroids per group.

    Group ``g`` draws its restarts from ``(seed, g)``. A group with at most
    ``k`` distinct values keeps them exactly (and pays for that many centroids).
    The reported ratio is total raw bits over total assignment-plus-codebook bits.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    w = net.get_flat()
    w_hat = np.empty_like(w)
    books = []
    raw = coded = 0
    for g, sl in enumerate(_groups(net, mode)):
        ws, part = w[sl], imp.subset(sl)
        if len(np.unique(ws)) <= k:
            cb = _exact_codebook(ws)
        elif quartic:
            cb = compress.quartic_weighted_kmeans(ws, part, k, iters, [seed, g], n_init=n_init, strict=False)
        else:
            cb = compress.weighted_kmeans(ws, part.quadratic, k, iters, [seed, g], n_init=n_init)
        w_hat[sl] = compress.apply_codebook(ws, cb)
        books.append(cb)
        m = len(ws)
        raw += m * bits
        coded += compress.code_bits(m, cb.cluster_sizes) + cb.k * bits
    return NetworkCompression(net.with_flat(w_hat), raw / coded, codebooks=books)


def compress_network(net, imp, compressor, param, bits=32, iters=100, seed=0, mode="layer", n_init=10):
    if compressor == "prune":
        return prune_network(net, imp, float(param), mode)
    if compressor == "quant":
        return quantize_network(net, imp, int(param), bits, False, iters, seed, mode, n_init)
    if compressor == "quant-quartic":
        return quantize_network(net, imp, int(param), bits, True, iters, seed, mode, n_init)
    raise ValueError(f"unknown compressor {compressor!r}")


def evaluate(net, net_hat, data):
    """Every metric that applies to the head and labels; NaN for the rest."""
    nan = float("nan")
    out = dict(mse=nan, kl=nan, supervised_sq=nan, accuracy=nan, cross_entropy=nan, loss_gap=nan)
    if net.head == "regression":
        out["mse"] = distortion_mse(net, net_hat, data)
    else:
        out["kl"] = distortion_kl(net, net_hat, data)
    if data.has_labels:
        out["supervised_sq"] = distortion_supervised(net, net_hat, data)
        out["loss_gap"] = loss_gap(net, net_hat, data)
        if net.head == "classification":
            out["accuracy"] = accuracy(net_hat, data)
            out["cross_entropy"] = cross_entropy(net_hat, data)
    return out


@dataclass
class ReportRow:
    method: str
    compressor: str
    param: float
    ratio: float
    metrics: dict

    def values(self):
        return (self.method, self.compressor, self.param, self.ratio) + tuple(
            self.metrics[c] for c in REPORT_COLUMNS[4:]
        )


@dataclass
class CompressionReport:
    compressor: str
    rows: list
    seed: int = 0
    reference: dict = field(default_factory=dict)

    def methods(self):
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def series(self, method):
        return [r for r in self.rows if r.method == method]

    def table(self):
        return [r.values() for r in self.rows]

    def plot_data(self, metric, x="ratio"):
        """(x, y, series) triples for one metric."""
        out = []
        for r in self.rows:
            xv = r.ratio if x == "ratio" else r.param
            out.append((xv, r.metrics[metric], r.method))
        return out


def sweep(net, data, kinds, compressor, grid, seed=0, eval_data=None, ridge=0.0,
          bits=32, iters=100, mode="layer", n_init=10, threads=1):
    """Compress ``net`` at every grid point for every importance kind.

    Importance is estimated on ``data``; metrics use ``eval_data`` (default
    ``data``). Rows are ordered by kind, then by ratio. The result does not
    depend on ``threads``.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    if compressor not in COMPRESSORS:
        raise ValueError(f"unknown compressor {compressor!r}")
    eval_data = data if eval_data is None else eval_data
    kinds = [importance.ALIASES.get(k, k) for k in kinds]
    imps = {k: importance.compute(k, net, data, ridge) for k in kinds}
    jobs = [(k, p) for k in kinds for p in grid]

    def run(job):
        kind, p = job
        res = compress_network(net, imps[kind], compressor, p, bits, iters, seed, mode, n_init)
        return ReportRow(kind, compressor, p, res.ratio, evaluate(net, res.net, eval_data))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(j) for j in jobs]
    order = {k: i for i, k in enumerate(kinds)}
    rows.sort(key=lambda r: (order[r.method], r.ratio, r.param))
    return CompressionReport(compressor, rows, seed, evaluate(net, net, eval_data))


def finite_or_nan(x):
    return x if math.isfinite(x) else float("nan")
