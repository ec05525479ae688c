"""Gaussian-space analysis of a single ReLU unit and exhaustive verifiers.

For ``f_w(x) = relu(w^T x)`` with ``x ~ N(0, diag(lam))`` the mean squared
difference between two units depends on ``w`` and ``w_hat`` only through the
three moments ``w^T S w``, ``w_hat^T S w_hat`` and ``w^T S w_hat``. Expanding
relu in the orthonormal probabilists' Hermite basis gives

    E[relu(a u) relu(b v)] = a b sum_p sigma_p^2 rho^p

for unit-variance ``u, v`` with correlation ``rho`` and scales ``a, b >= 0``.
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermitenorm, roots_laguerre

from . import kernels
from .errors import DomainError, ShapeError

DEFAULT_PMAX = 40
DEFAULT_TOL = 1e-9
# Gauss-Laguerre weights underflow to nan beyond this in double precision
MAX_NODES = 320


def _log_double_factorial(n):
    return math.fsum(math.log(v) for v in range(n, 0, -2))


def _hermite_table(x, p_max):
    """Orthonormal probabilists' Hermite values h_0..h_pmax at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    h = np.zeros((p_max + 1,) + x.shape)
    h[0] = 1.0
    if p_max >= 1:
        h[1] = x
    for p in range(1, p_max):
        h[p + 1] = (x * h[p] - math.sqrt(p) * h[p - 1]) / math.sqrt(p + 1)
    return h


@dataclass
class HermiteCoeffs:
    sigma_hat: np.ndarray
    printed_formula: np.ndarray
    single_factorial_formula: np.ndarray
    nodes: int

    @property
    def p_max(self):
        return len(self.sigma_hat) - 1

    @property
    def squared(self):
        return self.sigma_hat**2

    def parseval_sum(self):
        return float(np.sum(self.squared))

    def truncation_gap(self):
        """1/2 - sum sigma_p^2; scales the MSE truncation error by 2ab."""
        return 0.5 - self.parseval_sum()

    def formula_mismatch(self, tol=1e-10):
        """Even p >= 2 where each closed form disagrees with |quadrature|."""
        even = np.arange(2, self.p_max + 1, 2)
        q = np.abs(self.sigma_hat[even])
        return {
            "printed": even[np.abs(self.printed_formula[even] - q) > tol].tolist(),
            "single_factorial": even[np.abs(self.single_factorial_formula[even] - q) > tol].tolist(),
        }


@lru_cache(maxsize=16)
def _coeffs_cached(p_max, nodes):
    # relu(z) = z/2 + |z|/2. The linear half is a polynomial against the
    # Gaussian weight (Gauss-Hermite is exact). For the |z| half substitute
    # u = z^2 / 2 on each half line: the integrand becomes a polynomial in u
    # against e^-u, which Gauss-Laguerre integrates exactly.
    x, wx = roots_hermitenorm(nodes)
    wx = wx / math.sqrt(2.0 * math.pi)
    lin = _hermite_table(x, p_max) @ (wx * x)
    u, wu = roots_laguerre(nodes)
    s = np.sqrt(2.0 * u)
    even_part = (_hermite_table(s, p_max) + _hermite_table(-s, p_max)) @ wu
    absz = even_part / math.sqrt(2.0 * math.pi)
    sigma = 0.5 * lin + 0.5 * absz

    printed = np.full(p_max + 1, np.nan)
    single = np.full(p_max + 1, np.nan)
    for p in range(2, p_max + 1, 2):
        log_denom = 0.5 * (math.log(2.0 * math.pi) + math.lgamma(p + 1))
        ldf = _log_double_factorial(p - 3)
        printed[p] = math.exp(min(2.0 * ldf - log_denom, 709.0))
        single[p] = math.exp(ldf - log_denom)
    return sigma, printed, single


def hermite_coeffs(p_max=DEFAULT_PMAX, nodes=256):
    """ReLU expansion coefficients E[relu(Z) h_p(Z)] for p = 0..p_max.

    Computed by quadrature. The two closed forms for even p (the printed
    squared double factorial and the single double factorial) are attached
    for comparison.
    """
    if p_max < 1:
        raise ValueError("p_max must be at least 1")
    if not 200 <= nodes <= MAX_NODES:
        raise ValueError(f"quadrature nodes must lie in [200, {MAX_NODES}]")
    if p_max >= nodes:
        raise ValueError("quadrature needs more nodes than p_max")
    sigma, printed, single = _coeffs_cached(int(p_max), int(nodes))
    return HermiteCoeffs(sigma.copy(), printed.copy(), single.copy(), int(nodes))


def _squared_coeffs(p_max):
    return np.ascontiguousarray(hermite_coeffs(p_max).squared)


def _check_diag(lam, m):
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim == 2:
        if np.any(lam != np.diag(np.diag(lam))):
            raise DomainError("input covariance must be diagonal")
        lam = np.diag(lam).copy()
    if lam.shape != (m,):
        raise ShapeError("covariance diagonal has the wrong length")
    if np.any(lam <= 0):
        raise DomainError("covariance diagonal must be positive")
    return lam


def relu_weighted_objective(w, w_hat, lam):
    """(w - w_hat)^T diag(lam) (w - w_hat)."""
    w = np.asarray(w, dtype=np.float64)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    if w.shape != w_hat.shape:
        raise ShapeError("w and w_hat differ in shape")
    lam = _check_diag(lam, w.shape[0])
    e = w - w_hat
    return float(np.sum(lam * e * e))


def analytic_relu_mse(w, w_hat, lam, p_max=DEFAULT_PMAX):
    """E_X[(relu(w^T X) - relu(w_hat^T X))^2] for X ~ N(0, diag(lam))."""
    if p_max < 10 or p_max % 2:
        raise ValueError("p_max must be even and at least 10")
    w = np.asarray(w, dtype=np.float64)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    if w.shape != w_hat.shape:
        raise ShapeError("w and w_hat differ in shape")
    lam = _check_diag(lam, w.shape[0])
    a2 = float(np.sum(lam * w * w))
    b2 = float(np.sum(lam * w_hat * w_hat))
    cross = float(np.sum(lam * w * w_hat))
    return float(kernels.relu_mse_moments(a2, b2, cross, _squared_coeffs(p_max)))


def _mse_from_moments(a2, b2, cross, sq):
    """Vectorised twin of kernels.relu_mse_moments."""
    a2, b2, cross = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (a2, b2, cross)))
    a, b = np.sqrt(a2), np.sqrt(b2)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.clip(cross / (a * b), -1.0, 1.0)
    series = np.polynomial.polynomial.polyval(np.nan_to_num(rho), sq)
    out = 0.5 * a2 + 0.5 * b2 - 2.0 * a * b * series
    out = np.where(b2 <= 0, 0.5 * a2, out)
    return np.where(a2 <= 0, 0.5 * b2, out)


def _substream(seed, c):
    base = [int(v) for v in seed] if isinstance(seed, (list, tuple)) else [int(seed)]
    return np.random.SeedSequence(base + [c])


def monte_carlo_relu_mse(w, w_hat, lam, n_samples=1_000_000, seed=0, chunk=1 << 16):
    """Sample mean and standard error of (relu(w^T X) - relu(w_hat^T X))^2.

    Chunk ``c`` draws from its own generator seeded with ``(seed, c)``;
    ``seed`` may itself be a list of ints.
    """
    w = np.asarray(w, dtype=np.float64)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    lam = _check_diag(lam, w.shape[0])
    sd = np.sqrt(lam)
    total = total_sq = 0.0
    for c, start in enumerate(range(0, n_samples, chunk)):
        size = min(chunk, n_samples - start)
        rng = np.random.default_rng(_substream(seed, c))
        X = rng.standard_normal((size, w.shape[0])) * sd
        d = np.maximum(X @ w, 0.0) - np.maximum(X @ w_hat, 0.0)
        d2 = d * d
        total += d2.sum()
        total_sq += (d2 * d2).sum()
    mean = total / n_samples
    var = (total_sq - n_samples * mean * mean) / (n_samples - 1)
    return float(mean), float(math.sqrt(max(var, 0.0) / n_samples))


def half_gaussian_check(w, w_hat, lam, n_samples=1_000_000, seed=0, chunk=1 << 16):
    """Monte Carlo E[1{w^T X >= 0} ((w - w_hat)^T X)^2] against
    (1/2)(w - w_hat)^T diag(lam) (w - w_hat).

    Returns (estimate, stderr, closed_form).
    """
    w = np.asarray(w, dtype=np.float64)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    lam = _check_diag(lam, w.shape[0])
    sd = np.sqrt(lam)
    e = w - w_hat
    total = total_sq = 0.0
    for c, start in enumerate(range(0, n_samples, chunk)):
        size = min(chunk, n_samples - start)
        rng = np.random.default_rng(_substream(seed, c))
        X = rng.standard_normal((size, w.shape[0])) * sd
        v = np.where(X @ w >= 0, (X @ e) ** 2, 0.0)
        total += v.sum()
        total_sq += (v * v).sum()
    mean = total / n_samples
    var = (total_sq - n_samples * mean * mean) / (n_samples - 1)
    return float(mean), float(math.sqrt(max(var, 0.0) / n_samples)), 0.5 * float(np.sum(lam * e * e))


@dataclass
class DpTerms:
    a2: float
    b2: float
    cross: float

    @classmethod
    def from_weights(cls, w, w_hat, lam):
        w = np.asarray(w, dtype=np.float64)
        w_hat = np.asarray(w_hat, dtype=np.float64)
        lam = _check_diag(lam, w.shape[0])
        return cls(float(np.sum(lam * w * w)), float(np.sum(lam * w_hat * w_hat)), float(np.sum(lam * w * w_hat)))

    @property
    def rho(self):
        if self.a2 <= 0 or self.b2 <= 0:
            return 0.0
        return self.cross / math.sqrt(self.a2 * self.b2)

    @property
    def A(self):
        return self.a2

    @property
    def B(self):
        # w_hat^T S (w_hat - w)
        return self.b2 - self.cross

    @property
    def C(self):
        # (w - w_hat)^T S (w - w_hat)
        return self.a2 - 2.0 * self.cross + self.b2


def dp_term(terms, p):
    """A^p - 2 (A + B - C)^p + (A + 2B - C)^p."""
    if p < 0 or int(p) != p:
        raise ValueError("p must be a nonnegative integer")
    A, B, C = terms.A, terms.B, terms.C
    return A**p - 2.0 * (A + B - C) ** p + (A + 2.0 * B - C) ** p


def dp_term_abc(A, B, C, p):
    return A**p - 2.0 * (A + B - C) ** p + (A + 2.0 * B - C) ** p


def _argmin_set(values, tol):
    best = float(np.min(values))
    return np.flatnonzero(values <= best + tol * max(1.0, abs(best))), best


@dataclass
class PruneVerdict:
    objective_argmin: list
    mse_argmin: list
    agree: bool
    gap: float
    objective_min: float
    mse_min: float


def verify_prune_optimality(w, lam, keep_count, p_max=DEFAULT_PMAX, tol=DEFAULT_TOL):
    """Enumerate every mask keeping ``keep_count`` weights and compare the
    argmin of the weighted objective with the argmin of the analytic MSE.

    Masks are returned as tuples of kept indices.
    """
    w = np.asarray(w, dtype=np.float64)
    m = w.shape[0]
    if m > 20:
        raise DomainError("enumeration limited to m <= 20")
    if not 0 <= keep_count <= m:
        raise DomainError("keep_count outside [0, m]")
    lam = _check_diag(lam, m)
    sq = _squared_coeffs(p_max)
    masks = list(itertools.combinations(range(m), keep_count))
    K = np.zeros((len(masks), m))
    for r, kept in enumerate(masks):
        K[r, list(kept)] = 1.0
    W_hat = K * w
    E = w - W_hat
    obj = (E * E) @ lam
    a2 = float(np.sum(lam * w * w))
    b2 = (W_hat * W_hat) @ lam
    cross = W_hat @ (lam * w)
    mse = _mse_from_moments(a2, b2, cross, sq)
    io, omin = _argmin_set(obj, tol)
    im, mmin = _argmin_set(mse, tol)
    return PruneVerdict(
        objective_argmin=[masks[i] for i in io],
        mse_argmin=[masks[i] for i in im],
        agree=set(io.tolist()) == set(im.tolist()),
        gap=float(mse[io].min() - mmin),
        objective_min=float(omin),
        mse_min=float(mmin),
    )


@dataclass
class QuantVerdict:
    objective_argmin: list
    mse_argmin: list
    agree: bool
    gap: float
    codebook_gap: float
    objective_min: float
    mse_min: float
    centroids_objective: np.ndarray = field(repr=False, default=None)
    centroids_mse: np.ndarray = field(repr=False, default=None)


def verify_quant_optimality(w, lam, k, p_max=DEFAULT_PMAX, tol=DEFAULT_TOL, cd_tol=1e-13, max_sweeps=2000):
    """Enumerate all k^m assignments.

    For each assignment the weighted-objective centroids are the lam-weighted
    cluster means, and the MSE-optimal centroids come from coordinate descent
    (golden-section line searches) started at those means. ``agree`` says
    whether an assignment minimising the weighted objective also attains the
    smallest MSE over all assignments within ``tol``. ``codebook_gap`` is the
    MSE of the objective-optimal codebook itself minus that minimum.
    """
    w = np.asarray(w, dtype=np.float64)
    m = w.shape[0]
    if m > 8 or k > 3 or k < 1:
        raise DomainError("enumeration limited to m <= 8 and k <= 3")
    lam = _check_diag(lam, m)
    sq = _squared_coeffs(p_max)
    a2 = float(np.sum(lam * w * w))
    assigns = np.array(list(itertools.product(range(k), repeat=m)), dtype=np.int64)
    n = len(assigns)
    obj = np.empty(n)
    mse_at_obj = np.empty(n)
    mse = np.empty(n)
    C_obj = np.zeros((n, k))
    C_mse = np.zeros((n, k))
    lw = lam * w
    for r in range(n):
        A = assigns[r]
        L = np.bincount(A, weights=lam, minlength=k)
        M = np.bincount(A, weights=lw, minlength=k)
        c = np.where(L > 0, M / np.where(L > 0, L, 1.0), 0.0)
        e = w - c[A]
        obj[r] = float(np.sum(lam * e * e))
        b2 = float(np.sum(L * c * c))
        cr = float(np.sum(M * c))
        mse_at_obj[r] = kernels.relu_mse_moments(a2, b2, cr, sq)
        c_opt, f_opt, _ = kernels.minimize_codebook_mse(L, M, a2, sq, c.copy(), cd_tol, max_sweeps)
        mse[r] = min(f_opt, mse_at_obj[r])
        C_obj[r] = c
        C_mse[r] = c_opt if f_opt <= mse_at_obj[r] else c
    io, omin = _argmin_set(obj, tol)
    im, mmin = _argmin_set(mse, tol)
    best_obj = io[np.argmin(mse[io])]
    gap = float(mse[best_obj] - mmin)
    label = lambda r: "".join(str(int(a)) for a in assigns[r])
    return QuantVerdict(
        objective_argmin=[label(r) for r in io],
        mse_argmin=[label(r) for r in im],
        agree=gap <= tol * max(1.0, abs(mmin)),
        gap=gap,
        codebook_gap=float(mse_at_obj[best_obj] - mmin),
        objective_min=float(omin),
        mse_min=float(mmin),
        centroids_objective=C_obj[best_obj],
        centroids_mse=C_mse[im[0]],
    )


def random_instance(rng, m, lam_range=(0.2, 2.0)):
    """Gaussian weights and a random positive diagonal covariance."""
    return rng.standard_normal(m), rng.uniform(*lam_range, size=m)
