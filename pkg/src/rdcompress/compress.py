"""Pruning and weight-sharing quantization under importance-weighted objectives."""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import DomainError, ShapeError
from .importance import ImportanceDiag


@dataclass
class PruneMask:
    keep: np.ndarray
    ratio: float


@dataclass
class Codebook:
    centroids: np.ndarray
    assignments: np.ndarray
    cluster_sizes: np.ndarray
    objective_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    cubic_delta0: list = field(default_factory=list)

    @property
    def k(self):
        return len(self.centroids)


def _parts(imp, m):
    if isinstance(imp, ImportanceDiag):
        I, H = imp.quadratic, imp.quartic
    else:
        I, H = np.asarray(imp, dtype=np.float64), None
    if I.shape != (m,):
        raise ShapeError(f"importance length {I.shape} does not match {m} weights")
    if H is None:
        H = np.zeros(m)
    return np.ascontiguousarray(I, dtype=np.float64), np.ascontiguousarray(H, dtype=np.float64)


def objective_value(w, w_hat, imp):
    """sum_i I_i (w_i - what_i)^2 + H_i (w_i - what_i)^4."""
    w = np.asarray(w, dtype=np.float64)
    I, H = _parts(imp, w.shape[0])
    e2 = (w - np.asarray(w_hat, dtype=np.float64)) ** 2
    return float(np.sum(I * e2 + H * e2 * e2))


def keep_count(r, m):
    """round(r * m), halves away from zero."""
    if not 0.0 <= r <= 1.0:
        raise DomainError(f"keep ratio {r} outside [0, 1]")
    return min(m, int(math.floor(r * m + 0.5)))


def prune_scores(w, imp):
    w = np.asarray(w, dtype=np.float64)
    I, H = _parts(imp, w.shape[0])
    w2 = w * w
    return I * w2 + H * w2 * w2


def prune(w, imp, r):
    """Zero the lowest-scoring weights, keeping round(r * m) of them.

    Ties go to the lower global index first.
    """
    w = np.asarray(w, dtype=np.float64)
    m = w.shape[0]
    n_keep = keep_count(r, m)
    order = np.argsort(prune_scores(w, imp), kind="stable")
    keep = np.ones(m, dtype=bool)
    keep[order[: m - n_keep]] = False
    return PruneMask(keep, n_keep / m if m else 1.0), np.where(keep, w, 0.0)


def pruning_compression_ratio(mask):
    m = len(mask.keep)
    return float(np.count_nonzero(mask.keep)) / m if m else 1.0


def cubic_real_root(a, b, c, d):
    """The unique real root of a x^3 + b x^2 + c x + d with a > 0 and
    b^2 - 3ac < 0."""
    if not a > 0:
        raise DomainError("leading coefficient must be positive")
    if not b * b - 3.0 * a * c < 0:
        raise DomainError("cubic is not strictly increasing (b^2 - 3ac >= 0)")
    return float(kernels.cubic_root_scalar(float(a), float(b), float(c), float(d)))


def _init_centroids(w, I, H, k, rng):
    """Importance-weighted k-means++ seeding on distinct weight values."""
    m = w.shape[0]
    mass = I + H
    p = mass / mass.sum() if mass.sum() > 0 else np.full(m, 1.0 / m)
    chosen = [w[rng.choice(m, p=p)]]
    d2 = (w - chosen[0]) ** 2
    while len(chosen) < k:
        score = I * d2 + H * d2 * d2
        if score.sum() > 0:
            i = rng.choice(m, p=score / score.sum())
        else:
            # importance vanishes away from the current centroids
            cand = np.flatnonzero(d2 > 0)
            i = rng.choice(cand)
        chosen.append(w[i])
        d2 = np.minimum(d2, (w - w[i]) ** 2)
    return np.array(chosen, dtype=np.float64)


def _fill_empty(w, I, H, A, c):
    k = len(c)
    counts = np.bincount(A, minlength=k)
    while np.any(counts == 0):
        j = int(np.flatnonzero(counts == 0)[0])
        e = w - c[A]
        e2 = e * e
        cost = I * e2 + H * e2 * e2
        movable = counts[A] > 1
        # lexicographic: weighted cost, then raw distance; lowest index on ties
        key = np.where(movable, cost, -1.0)
        best = key.max()
        cand = np.flatnonzero(key == best)
        if best <= 0:
            cand = np.flatnonzero(movable & (e2 == np.max(np.where(movable, e2, -1.0))))
        i = int(cand[0])
        counts[A[i]] -= 1
        A[i] = j
        counts[j] += 1
        c[j] = w[i]
    return A, c


def _lloyd(w, I, H, k, iters, seed, init=None):
    w = np.ascontiguousarray(w, dtype=np.float64)
    m = w.shape[0]
    if k < 1:
        raise DomainError("k must be at least 1")
    if iters < 1:
        raise ValueError("iters must be at least 1")
    if k > len(np.unique(w)):
        raise DomainError(f"k={k} exceeds the number of distinct weights")
    rng = np.random.default_rng(seed if isinstance(seed, np.random.SeedSequence) else _entropy(seed))
    c = _init_centroids(w, I, H, k, rng) if init is None else np.array(init, dtype=np.float64)
    A = kernels.assign_nearest(w, c)
    A, c = _fill_empty(w, I, H, A, c)
    history, deltas = [], []
    converged = False
    t = 0
    for t in range(1, iters + 1):
        c, coef, solved = kernels.centroid_update(w, I, H, A, k, c)
        if solved.any():
            d0 = coef[solved, 1] ** 2 - 3.0 * coef[solved, 0] * coef[solved, 2]
            sI = np.bincount(A, weights=I, minlength=k)[solved]
            if np.any((sI > 0) & (d0 >= 0)):
                raise AssertionError("update cubic with positive quadratic mass is not monotone")
            deltas.extend(d0.tolist())
        history.append(float(kernels.objective(w, I, H, A, c)))
        A_new = kernels.assign_nearest(w, c)
        A_new, c_moved = _fill_empty(w, I, H, A_new, c.copy())
        if np.array_equal(A_new, A):
            converged = True
            break
        A, c = A_new, c_moved
    sizes = np.bincount(A, minlength=k)
    return Codebook(c, A, sizes, history, t, converged, deltas)


def _entropy(seed):
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return [int(seed)]


def _restarts(w, I, H, k, iters, seed, init, n_init):
    if init is not None:
        return _lloyd(w, I, H, k, iters, seed, init)
    best = None
    for r in range(n_init):
        cb = _lloyd(w, I, H, k, iters, np.random.SeedSequence(_entropy(seed) + [r]), None)
        if best is None or cb.objective_history[-1] < best.objective_history[-1]:
            best = cb
    return best


def weighted_kmeans(w, imp, k, iters=100, seed=0, init=None, n_init=10):
    """Lloyd iterations for sum_i I_i (w_i - c_{A_i})^2 on scalar weights.

    Runs ``n_init`` seeded restarts (restart r draws from ``(seed, r)``) and
    keeps the lowest final objective. Assignments are 0-based. Centroids of
    clusters with no importance mass fall back to the unweighted mean.
    """
    w = np.asarray(w, dtype=np.float64)
    I, _ = _parts(imp, w.shape[0])
    return _restarts(w, I, np.zeros_like(I), k, iters, seed, init, n_init)


def quartic_weighted_kmeans(w, imp, k, iters=100, seed=0, init=None, n_init=10, strict=True):
    """k-means for sum_i I_i (w_i - c)^2 + H_i (w_i - c)^4.

    The update step takes the unique real root of each cluster's stationarity
    cubic. With H identically zero this is exactly :func:`weighted_kmeans`.
    ``strict=False`` admits weights with zero total importance (they then only
    influence clusters through the unweighted-mean fallback).
    """
    w = np.asarray(w, dtype=np.float64)
    I, H = _parts(imp, w.shape[0])
    if strict and np.any((I <= 0) & (H <= 0)):
        raise DomainError("every weight needs positive quadratic or quartic importance")
    return _restarts(w, I, H, k, iters, seed, init, n_init)


def apply_codebook(w, cb):
    A = np.asarray(cb.assignments)
    if len(A) != len(w):
        raise ShapeError("assignment count differs from weight count")
    if A.size and (A.min() < 0 or A.max() >= len(cb.centroids)):
        raise IndexError("assignment out of range")
    return np.asarray(cb.centroids, dtype=np.float64)[A]


def _ceil_log2_fraction(q):
    """Smallest integer e with 2**e >= q for a positive Fraction q."""
    e = max(0, q.numerator.bit_length() - q.denominator.bit_length() - 1)
    while Fraction(2) ** e < q:
        e += 1
    while e > 0 and Fraction(2) ** (e - 1) >= q:
        e -= 1
    return e


def code_bits(m, cluster_sizes):
    """Total assignment bits sum_j m_j * ceil(log2(m / m_j)); empty clusters add 0."""
    total = 0
    for mj in cluster_sizes:
        mj = int(mj)
        if mj:
            total += mj * _ceil_log2_fraction(Fraction(m, mj))
    return total


def quantization_compression_ratio(m, b, cluster_sizes, k):
    sizes = [int(s) for s in cluster_sizes]
    if any(s < 0 for s in sizes) or sum(sizes) != m:
        raise ValueError("cluster sizes must be nonnegative and sum to m")
    if len(sizes) > k:
        raise ValueError("more cluster sizes than clusters")
    return float(Fraction(m * b, code_bits(m, sizes) + k * b))
