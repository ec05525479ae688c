"""Inner loops of the 1-D k-means variants and the monotone cubic solver.

Every public function here has two implementations: a loop version compiled
with numba and a vectorised numpy version. Which one is bound is decided once
at import time by :mod:`rdcompress._accel`. Both accumulate cluster sums in
weight order and break distance ties towards the lower centroid index, so the
two backends agree bit for bit on the same inputs.

The one-unit ReLU moment routines at the bottom are written once as plain
loops; they are compiled when numba is active and interpreted otherwise.
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit

NEWTON_MAX_ITER = 200


# ---------------------------------------------------------------------------
# numba path


@njit
def _cubic_root_scalar(a, b, c, d):
    # Strictly increasing cubic: Newton from the inflection point, falling back
    # to bisection whenever a step leaves the sign-change bracket.
    bound = 1.0 + max(abs(b), max(abs(c), abs(d))) / a
    lo, hi = -bound, bound
    x = -b / (3.0 * a)
    if x < lo or x > hi:
        x = 0.0
    for _ in range(NEWTON_MAX_ITER):
        f = ((a * x + b) * x + c) * x + d
        if f == 0.0:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x
        fp = (3.0 * a * x + 2.0 * b) * x + c
        step_ok = fp > 0.0
        if step_ok:
            xn = x - f / fp
            step_ok = lo < xn < hi
        if not step_ok:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 1e-15 * max(1.0, abs(x)) or hi - lo <= 1e-15 * max(1.0, abs(x)):
            return xn
        x = xn
    return x


@njit
def _assign_nb(w, c):
    m = w.shape[0]
    k = c.shape[0]
    A = np.empty(m, dtype=np.int64)
    for i in range(m):
        best = 0
        bd = (w[i] - c[0]) * (w[i] - c[0])
        for j in range(1, k):
            dj = (w[i] - c[j]) * (w[i] - c[j])
            if dj < bd:
                bd = dj
                best = j
        A[i] = best
    return A


@njit
def _sums_nb(w, I, H, A, k):
    S = np.zeros((7, k))
    for i in range(w.shape[0]):
        j = A[i]
        wi = w[i]
        w2 = wi * wi
        S[0, j] += 1.0
        S[1, j] += wi
        S[2, j] += I[i]
        S[3, j] += I[i] * wi
        S[4, j] += H[i]
        S[5, j] += H[i] * wi
        S[6, j] += H[i] * w2
    return S


@njit
def _hw3_nb(w, H, A, k):
    out = np.zeros(k)
    for i in range(w.shape[0]):
        out[A[i]] += H[i] * (w[i] * w[i] * w[i])
    return out


@njit
def _objective_nb(w, I, H, A, c):
    total = 0.0
    for i in range(w.shape[0]):
        e = w[i] - c[A[i]]
        e2 = e * e
        total += I[i] * e2 + H[i] * e2 * e2
    return total


# ---------------------------------------------------------------------------
# numpy path


def _cubic_root_np(a, b, c, d):
    """Vectorised safeguarded Newton for arrays of strictly increasing cubics."""
    a, b, c, d = (np.asarray(v, dtype=np.float64) for v in (a, b, c, d))
    bound = 1.0 + np.maximum(np.abs(b), np.maximum(np.abs(c), np.abs(d))) / a
    lo, hi = -bound, bound.copy()
    x = -b / (3.0 * a)
    x = np.where((x < lo) | (x > hi), 0.0, x)
    done = np.zeros(x.shape, dtype=bool)
    out = x.copy()
    for _ in range(NEWTON_MAX_ITER):
        f = ((a * x + b) * x + c) * x + d
        hit = (f == 0.0) & ~done
        out = np.where(hit, x, out)
        done |= hit
        lo = np.where(f < 0.0, x, lo)
        hi = np.where(f > 0.0, x, hi)
        fp = (3.0 * a * x + 2.0 * b) * x + c
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - f / fp
        ok = (fp > 0.0) & (lo < xn) & (xn < hi)
        xn = np.where(ok, xn, 0.5 * (lo + hi))
        scale = np.maximum(1.0, np.abs(x))
        conv = ((np.abs(xn - x) <= 1e-15 * scale) | (hi - lo <= 1e-15 * scale)) & ~done
        out = np.where(conv, xn, out)
        done |= conv
        if done.all():
            return out
        x = np.where(done, x, xn)
    return np.where(done, out, x)


def _assign_np(w, c):
    return np.argmin((w[:, None] - c[None, :]) * (w[:, None] - c[None, :]), axis=1).astype(np.int64)


def _sums_np(w, I, H, A, k):
    S = np.empty((7, k))
    S[0] = np.bincount(A, minlength=k).astype(np.float64)
    S[1] = np.bincount(A, weights=w, minlength=k)
    S[2] = np.bincount(A, weights=I, minlength=k)
    S[3] = np.bincount(A, weights=I * w, minlength=k)
    S[4] = np.bincount(A, weights=H, minlength=k)
    S[5] = np.bincount(A, weights=H * w, minlength=k)
    S[6] = np.bincount(A, weights=H * (w * w), minlength=k)
    return S


def _hw3_np(w, H, A, k):
    return np.bincount(A, weights=H * (w * w * w), minlength=k)


def _objective_np(w, I, H, A, c):
    e = w - c[A]
    e2 = e * e
    terms = I * e2 + H * e2 * e2
    # sequential order to match the compiled loop
    return float(np.add.accumulate(terms)[-1]) if terms.size else 0.0


# ---------------------------------------------------------------------------
# public bindings

if HAVE_NUMBA:
    assign_nearest = _assign_nb
    cluster_sums = _sums_nb
    cluster_hw3 = _hw3_nb
    objective = _objective_nb

    def cubic_roots(a, b, c, d):
        a, b, c, d = (np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in (a, b, c, d))
        return np.array([_cubic_root_scalar(a[i], b[i], c[i], d[i]) for i in range(a.shape[0])])

    cubic_root_scalar = _cubic_root_scalar
else:
    assign_nearest = _assign_np
    cluster_sums = _sums_np
    cluster_hw3 = _hw3_np
    objective = _objective_np

    def cubic_roots(a, b, c, d):
        return np.atleast_1d(_cubic_root_np(a, b, c, d))

    def cubic_root_scalar(a, b, c, d):
        return float(_cubic_root_np(a, b, c, d))


def centroid_update(w, I, H, A, k, old):
    """Per-cluster minimiser of sum I (w - x)^2 + H (w - x)^4.

    Returns (centroids, cubic coefficient array (k, 4), mask of clusters solved
    through the cubic). Clusters without quartic mass use the importance
    weighted mean, or the plain mean when their importance is all zero; empty
    clusters keep ``old``.
    """
    S = cluster_sums(w, I, H, A, k)
    count, sw, sI, sIw, sH, sHw, sHw2 = S
    hw3 = cluster_hw3(w, H, A, k)
    coef = np.stack([4.0 * sH, -12.0 * sHw, 12.0 * sHw2 + 2.0 * sI, -(4.0 * hw3 + 2.0 * sIw)], axis=1)
    c = np.array(old, dtype=np.float64, copy=True)
    nonempty = count > 0
    quad_only = nonempty & (sH == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        wmean = np.where(sI > 0.0, sIw / sI, sw / np.where(count > 0, count, 1.0))
    c = np.where(quad_only, wmean, c)
    use_cubic = nonempty & (sH > 0.0)
    delta0 = coef[:, 1] ** 2 - 3.0 * coef[:, 0] * coef[:, 2]
    # all-equal weights with zero quadratic mass give a triple root at the common value
    flat = use_cubic & (delta0 >= 0.0) & (sI == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(flat, sHw / sH, c)
    solve = use_cubic & ~flat
    if solve.any():
        idx = np.flatnonzero(solve)
        c[idx] = cubic_roots(coef[idx, 0], coef[idx, 1], coef[idx, 2], coef[idx, 3])
    return c, coef, solve


# ---------------------------------------------------------------------------
# one-unit ReLU moments (shared by both backends; plain Python without numba)


@njit
def relu_series(rho, sq):
    """sum_p sq[p] * rho**p by Horner's rule."""
    acc = 0.0
    for p in range(sq.shape[0] - 1, -1, -1):
        acc = acc * rho + sq[p]
    return acc


@njit
def relu_mse_moments(a2, b2, cross, sq):
    """E[(relu(u) - relu(v))^2] for centred Gaussians with E u^2 = a2,
    E v^2 = b2, E uv = cross, via the truncated Hermite series."""
    if b2 <= 0.0:
        return 0.5 * a2
    if a2 <= 0.0:
        return 0.5 * b2
    a = np.sqrt(a2)
    b = np.sqrt(b2)
    rho = cross / (a * b)
    if rho > 1.0:
        rho = 1.0
    elif rho < -1.0:
        rho = -1.0
    return 0.5 * a2 + 0.5 * b2 - 2.0 * a * b * relu_series(rho, sq)


@njit
def _codebook_mse(L, M, c, a2, sq):
    b2 = 0.0
    cr = 0.0
    for j in range(c.shape[0]):
        b2 += L[j] * c[j] * c[j]
        cr += M[j] * c[j]
    return relu_mse_moments(a2, b2, cr, sq)


@njit
def _line_min(L, M, c, j, a2, sq, tol):
    # expand a bracket around c[j], then golden-section inside it
    x0 = c[j]
    h = 0.1 * max(abs(x0), 1e-3)
    c[j] = x0
    f0 = _codebook_mse(L, M, c, a2, sq)
    c[j] = x0 + h
    fr = _codebook_mse(L, M, c, a2, sq)
    if fr > f0:
        h = -h
        c[j] = x0 + h
        fr = _codebook_mse(L, M, c, a2, sq)
        if fr > f0:
            lo, hi = x0 - abs(h), x0 + abs(h)
        else:
            lo, hi = x0, x0
    else:
        lo, hi = x0, x0
    if lo == hi:
        a_pt, b_pt, fb = x0, x0 + h, fr
        for _ in range(200):
            h *= 2.0
            c[j] = b_pt + h
            fn = _codebook_mse(L, M, c, a2, sq)
            if fn > fb:
                lo, hi = min(a_pt, b_pt + h), max(a_pt, b_pt + h)
                break
            a_pt, b_pt, fb = b_pt, b_pt + h, fn
    g = 0.5 * (np.sqrt(5.0) - 1.0)
    x1 = hi - g * (hi - lo)
    x2 = lo + g * (hi - lo)
    c[j] = x1
    f1 = _codebook_mse(L, M, c, a2, sq)
    c[j] = x2
    f2 = _codebook_mse(L, M, c, a2, sq)
    for _ in range(400):
        if hi - lo <= tol * max(1.0, abs(lo) + abs(hi)):
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - g * (hi - lo)
            c[j] = x1
            f1 = _codebook_mse(L, M, c, a2, sq)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + g * (hi - lo)
            c[j] = x2
            f2 = _codebook_mse(L, M, c, a2, sq)
    best = x1 if f1 <= f2 else x2
    fbest = min(f1, f2)
    c[j] = x0
    if fbest < _codebook_mse(L, M, c, a2, sq):
        c[j] = best


@njit
def minimize_codebook_mse(L, M, a2, sq, c0, tol, max_sweeps):
    """Coordinate descent over centroids of the one-unit ReLU MSE.

    ``L[j]`` and ``M[j]`` are the cluster sums of lambda_i and lambda_i w_i, so
    the compressed moments are sum_j L_j c_j^2 and sum_j M_j c_j. Clusters with
    ``L[j] == 0`` are left untouched. Returns (centroids, mse, sweeps).
    """
    c = c0.copy()
    f = _codebook_mse(L, M, c, a2, sq)
    sweeps = 0
    for s in range(max_sweeps):
        sweeps = s + 1
        f_old = f
        c_old = c.copy()
        for j in range(c.shape[0]):
            if L[j] > 0.0:
                _line_min(L, M, c, j, a2, sq, tol)
        f = _codebook_mse(L, M, c, a2, sq)
        moved = 0.0
        for j in range(c.shape[0]):
            moved = max(moved, abs(c[j] - c_old[j]))
        if f_old - f <= 1e-16 * max(1.0, abs(f)) and moved <= 1e-10:
            break
    return c, f, sweeps
