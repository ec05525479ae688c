"""Diagonal weight-importance scores for every compression objective.

Each score is a sample mean of a separable per-weight quantity. For a weight
``W[j, k]`` of some layer the per-sample value always factors as
``u[n, j] * v[n, k]`` (a pre-activation term times a power of the layer input),
so the means are accumulated layer by layer without materialising the
per-sample gradient matrix.
"""

from dataclasses import dataclass

import numpy as np

from . import net as netmod
from .errors import NumericError, ShapeError

KINDS = (
    "baseline",
    "unsup_regression",
    "unsup_classification",
    "sup_gradient",
    "sup_hessian",
    "sup_grad_hessian",
)

# CLI spellings
ALIASES = {
    "baseline": "baseline",
    "unsup-reg": "unsup_regression",
    "unsup-cls": "unsup_classification",
    "grad": "sup_gradient",
    "hess": "sup_hessian",
    "grad-hess": "sup_grad_hessian",
}

SUPERVISED = ("sup_gradient", "sup_hessian", "sup_grad_hessian")

_CHUNK_ELEMS = 1 << 22


@dataclass
class ImportanceDiag:
    quadratic: np.ndarray
    quartic: np.ndarray = None
    kind: str = "baseline"
    hessian_ridge: float = 0.0

    def __post_init__(self):
        self.quadratic = np.asarray(self.quadratic, dtype=np.float64)
        if self.quartic is not None:
            self.quartic = np.asarray(self.quartic, dtype=np.float64)
            if self.quartic.shape != self.quadratic.shape:
                raise ShapeError("quadratic and quartic parts differ in length")
        for part in (self.quadratic, self.quartic):
            if part is None:
                continue
            if not np.all(np.isfinite(part)):
                raise NumericError("importance contains non-finite entries")
            if np.any(part < 0):
                raise ValueError("importance entries must be nonnegative")

    def __len__(self):
        return len(self.quadratic)

    def subset(self, sl):
        H = None if self.quartic is None else self.quartic[sl]
        return ImportanceDiag(self.quadratic[sl], H, self.kind, self.hessian_ridge)


def _mean_outer(u, v):
    """``mean_n u[n, j] * v[n, k]`` summed in sample order.

    The running total is fed back as the first row of each chunk so the sum is
    strictly sequential regardless of chunking.
    """
    n, J = u.shape
    K = v.shape[1]
    step = max(1, _CHUNK_ELEMS // max(1, J * K))
    total = None
    for s in range(0, n, step):
        block = u[s:s + step, :, None] * v[s:s + step, None, :]
        if total is not None:
            block = np.concatenate([total[None], block])
        total = block.sum(axis=0)
    return total / n


def _mean_rows(u):
    return u.sum(axis=0) / u.shape[0]


def _flatten(net, per_layer):
    """per_layer: list of (weight_block (out, in), bias_block (out,))."""
    parts = []
    for wb, bb in per_layer:
        parts.append(wb.ravel())
        if net.include_bias:
            parts.append(bb)
    return np.concatenate(parts)


def _require_data(data):
    if data is None or data.n < 1:
        raise ValueError("importance needs a nonempty dataset")


def _require_labels(data):
    if not data.has_labels:
        raise ValueError("supervised importance needs labels")


def baseline(net):
    """All-ones scores: the plain objective sum (w_i - w_hat_i)^2."""
    return ImportanceDiag(np.ones(net.n_params), None, "baseline")


def unsup_regression(net, data):
    _require_data(data)
    if net.head != "regression":
        raise ValueError("unsup_regression needs a regression head")
    terms, _ = netmod.output_terms(net, data.inputs)
    per_layer = []
    for delta, a in terms:
        s = np.sum(delta**2, axis=1)
        per_layer.append((_mean_outer(s, a**2), _mean_rows(s)))
    return ImportanceDiag(_flatten(net, per_layer), None, "unsup_regression")


def unsup_classification(net, data):
    _require_data(data)
    if net.head != "classification":
        raise ValueError("unsup_classification needs a classification head")
    terms, p = netmod.output_terms(net, data.inputs)
    inv_p = 1.0 / np.maximum(p, netmod.EPS_P)
    per_layer = []
    for delta, a in terms:
        s = np.sum(delta**2 * inv_p[:, :, None], axis=1)
        per_layer.append((_mean_outer(s, a**2), _mean_rows(s)))
    return ImportanceDiag(_flatten(net, per_layer), None, "unsup_classification")


def sup_gradient(net, data):
    _require_data(data)
    _require_labels(data)
    per_layer = []
    for delta, a in netmod.loss_grad_terms(net, data.inputs, data.labels):
        s = delta**2
        per_layer.append((_mean_outer(s, a**2), _mean_rows(s)))
    return ImportanceDiag(_flatten(net, per_layer), None, "sup_gradient")


def _mean_hessian_diag(net, data):
    per_layer = []
    for h, a in netmod.loss_hess_terms(net, data.inputs, data.labels):
        per_layer.append((_mean_outer(h, a**2), _mean_rows(h)))
    return _flatten(net, per_layer)


def sup_hessian(net, data, ridge=0.0):
    """Mean diagonal Hessian of the loss, clamped at zero, plus ``ridge``."""
    _require_data(data)
    _require_labels(data)
    if ridge < 0:
        raise ValueError("hessian ridge must be nonnegative")
    I = np.maximum(_mean_hessian_diag(net, data), 0.0) + ridge
    return ImportanceDiag(I, None, "sup_hessian", float(ridge))


def sup_grad_hessian(net, data, ridge=0.0):
    """Quadratic part: mean squared gradient. Quartic part: a quarter of the
    mean squared diagonal Hessian, plus ``ridge``."""
    _require_data(data)
    _require_labels(data)
    if ridge < 0:
        raise ValueError("hessian ridge must be nonnegative")
    quad = sup_gradient(net, data).quadratic
    per_layer = []
    for h, a in netmod.loss_hess_terms(net, data.inputs, data.labels):
        h2 = h**2
        per_layer.append((_mean_outer(h2, a**4), _mean_rows(h2)))
    H = 0.25 * _flatten(net, per_layer) + ridge
    return ImportanceDiag(quad, H, "sup_grad_hessian", float(ridge))


def compute(kind, net, data=None, ridge=0.0):
    kind = ALIASES.get(kind, kind)
    if kind == "baseline":
        return baseline(net)
    if kind == "unsup_regression":
        return unsup_regression(net, data)
    if kind == "unsup_classification":
        return unsup_classification(net, data)
    if kind == "sup_gradient":
        return sup_gradient(net, data)
    if kind == "sup_hessian":
        return sup_hessian(net, data, ridge)
    if kind == "sup_grad_hessian":
        return sup_grad_hessian(net, data, ridge)
    raise ValueError(f"unknown importance kind {kind!r}")


def ridge_sweep(net, data, ridges, kind="sup_hessian"):
    """Importance for each ridge value on a grid; the Hessian means are
    computed once."""
    _require_data(data)
    _require_labels(data)
    kind = ALIASES.get(kind, kind)
    if kind == "sup_hessian":
        base = np.maximum(_mean_hessian_diag(net, data), 0.0)
        return [ImportanceDiag(base + r, None, kind, float(r)) for r in ridges]
    if kind == "sup_grad_hessian":
        ref = sup_grad_hessian(net, data, 0.0)
        return [ImportanceDiag(ref.quadratic, ref.quartic + r, kind, float(r)) for r in ridges]
    raise ValueError("ridge sweep applies to Hessian-based kinds only")
