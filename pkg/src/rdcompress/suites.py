"""Self-checks run by ``rdcompress verify``.

Every suite returns a :class:`SuiteResult`: named checks with the measured
value, the threshold it was held to and a verdict, plus optional per-instance
detail rows.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import compress, presets, relu_oracle
from .importance import ImportanceDiag
from .rd_linear import achievability_report

SUITES = ("linear", "relu-prune", "relu-quant", "hermite", "cubic")
CHECK_COLUMNS = ("check", "value", "threshold", "passed")
VERDICT_COLUMNS = ("instance_id", "objective_argmin", "mse_argmin", "agree", "gap")


@dataclass
class SuiteResult:
    name: str
    checks: list = field(default_factory=list)
    detail_columns: tuple = ()
    detail: list = field(default_factory=list)

    def add(self, check, value, threshold, passed):
        self.checks.append((check, value, threshold, bool(passed)))

    @property
    def passed(self):
        return all(c[3] for c in self.checks)


def linear_suite(D=3.0, n_samples=100_000, seed=0, source=None):
    src = presets.fig2_source() if source is None else source
    rep = achievability_report(src, D, n_samples, seed)
    res = SuiteResult("linear")
    rel = abs(rep.empirical_distortion - D) / D
    res.add("distortion_rel_err", rel, 0.02, rel <= 0.02)
    active = ~rep.full
    z = np.abs(rep.cov[active]) / rep.cov_stderr[active]
    zmax = float(z.max()) if z.size else 0.0
    res.add("cov_max_z", zmax, 3.0, zmax <= 3.0)
    res.add("full_coords_zero", float(rep.full_all_zero), 1.0, rep.full_all_zero)
    gap = abs(rep.mutual_information_nats - rep.rate_nats)
    res.add("mi_minus_rate", gap, 1e-12, gap <= 1e-12)
    res.detail_columns = ("coord", "level", "full", "var_hat", "var_hat_target", "cov", "cov_stderr")
    res.detail = list(rep.rows())
    return res


def _verdict_row(i, v):
    fmt = lambda ms: " ".join("".join(map(str, m)) if isinstance(m, tuple) else str(m) for m in ms)
    return (i, fmt(v.objective_argmin), fmt(v.mse_argmin), v.agree, v.gap)


def relu_prune_suite(n_instances=100, seed=0, m=presets.RELU8_M, keep=presets.RELU8_KEEP,
                     p_max=relu_oracle.DEFAULT_PMAX, tol=relu_oracle.DEFAULT_TOL):
    res = SuiteResult("relu-prune", detail_columns=VERDICT_COLUMNS)
    agree = 0
    for i in range(n_instances):
        w, lam = presets.relu_instance(seed, i, m)
        v = relu_oracle.verify_prune_optimality(w, lam, keep, p_max, tol)
        agree += v.agree
        res.detail.append(_verdict_row(i, v))
    res.add("agree_count", agree, n_instances, agree == n_instances)
    return res


def relu_quant_suite(n_instances=30, seed=0, m=presets.RELUQ_M, k=presets.RELUQ_K,
                     p_max=relu_oracle.DEFAULT_PMAX, tol=relu_oracle.DEFAULT_TOL):
    res = SuiteResult("relu-quant", detail_columns=VERDICT_COLUMNS + ("codebook_gap",))
    agree, cb_gap = 0, 0.0
    for i in range(n_instances):
        w, lam = presets.relu_instance(seed, i, m)
        v = relu_oracle.verify_quant_optimality(w, lam, k, p_max, tol)
        agree += v.agree
        cb_gap = max(cb_gap, v.codebook_gap)
        res.detail.append(_verdict_row(i, v) + (v.codebook_gap,))
    res.add("agree_count", agree, n_instances, agree == n_instances)
    # informational: the objective's own centroids are not MSE-optimal
    res.add("max_codebook_gap", cb_gap, float("inf"), True)
    return res


def hermite_suite(p_max=relu_oracle.DEFAULT_PMAX, n_instances=20, n_samples=1_000_000, seed=0, m=4):
    res = SuiteResult("hermite")
    hc = relu_oracle.hermite_coeffs(p_max)
    s = hc.sigma_hat
    e0 = abs(s[0] - 1.0 / math.sqrt(2.0 * math.pi))
    res.add("sigma0_err", e0, 1e-12, e0 <= 1e-12)
    e1 = abs(s[1] - 0.5)
    res.add("sigma1_err", e1, 1e-12, e1 <= 1e-12)
    odd = float(np.max(np.abs(s[3::2]))) if p_max >= 3 else 0.0
    res.add("odd_max_abs", odd, 1e-12, odd <= 1e-12)
    gap = hc.truncation_gap()
    res.add("parseval_gap", gap, 1e-3, 0.0 <= gap <= 1e-3)
    mism = hc.formula_mismatch()
    first = mism["printed"][0] if mism["printed"] else -1
    res.add("printed_formula_first_mismatch_p", first, float("nan"), True)
    res.add("single_factorial_mismatches", len(mism["single_factorial"]), 0, not mism["single_factorial"])
    zmax = 0.0
    res.detail_columns = ("instance_id", "analytic", "monte_carlo", "stderr", "z")
    for i in range(n_instances):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        w, lam = relu_oracle.random_instance(rng, m)
        w_hat = w + rng.standard_normal(m)
        a = relu_oracle.analytic_relu_mse(w, w_hat, lam, p_max)
        mc, se = relu_oracle.monte_carlo_relu_mse(w, w_hat, lam, n_samples, seed=[seed, i])
        z = abs(a - mc) / se
        zmax = max(zmax, z)
        res.detail.append((i, a, mc, se, z))
    res.add("mc_max_z", zmax, 3.0, zmax <= 3.0)
    rng = np.random.default_rng(np.random.SeedSequence([seed, n_instances]))
    w, lam = relu_oracle.random_instance(rng, m)
    est, se, exact = relu_oracle.half_gaussian_check(w, w + rng.standard_normal(m), lam, n_samples, seed=[seed, n_instances])
    zh = abs(est - exact) / se
    res.add("half_gaussian_z", zh, 3.0, zh <= 3.0)
    return res


def _poly_exact(coef, x):
    a, b, c, d = coef
    return ((a * x + b) * x + c) * x + d


def cubic_oracle(a, b, c, d, iters=200):
    """Real root of a monotone cubic by bisection in exact rational arithmetic."""
    coef = [Fraction(v) for v in (a, b, c, d)]
    # Cauchy bound rounded up to a power of two keeps every midpoint dyadic
    R = 1 + max(abs(v / coef[0]) for v in coef[1:])
    R = Fraction(2) ** (math.ceil(math.log2(R)) + 1)
    lo, hi = -R, R
    for _ in range(iters):
        mid = (lo + hi) / 2
        if _poly_exact(coef, mid) < 0:
            lo = mid
        else:
            hi = mid
    return float((lo + hi) / 2)


def random_monotone_cubic(rng):
    a = rng.uniform(0.1, 10.0)
    b = rng.normal(0.0, 5.0)
    c = b * b / (3.0 * a) * rng.uniform(1.0001, 4.0) + rng.uniform(0.0, 1.0)
    d = rng.normal(0.0, 10.0)
    return a, b, c, d


def cubic_suite(n_cubics=200, n_runs=100, seed=0):
    res = SuiteResult("cubic")
    worst = 0.0
    for i in range(n_cubics):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        a, b, c, d = random_monotone_cubic(rng)
        x = compress.cubic_real_root(a, b, c, d)
        ref = cubic_oracle(a, b, c, d)
        worst = max(worst, abs(x - ref) / max(1.0, abs(ref)))
    res.add("root_max_rel_err", worst, 1e-10, worst <= 1e-10)
    max_d0 = -math.inf
    monotone = True
    for r in range(n_runs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 10_000 + r]))
        m = int(rng.integers(8, 40))
        w = rng.standard_normal(m)
        I = rng.uniform(0.01, 2.0, m)
        H = rng.uniform(0.0, 2.0, m)
        cb = compress.quartic_weighted_kmeans(w, ImportanceDiag(I, H), int(rng.integers(2, 5)), seed=[seed, r], n_init=1)
        if cb.cubic_delta0:
            max_d0 = max(max_d0, max(cb.cubic_delta0))
        h = np.array(cb.objective_history)
        if np.any(np.diff(h) > 1e-12 * max(1.0, abs(h[0]))):
            monotone = False
    res.add("max_delta0", max_d0, 0.0, max_d0 < 0)
    res.add("objective_nonincreasing", float(monotone), 1.0, monotone)
    return res


def run(name, **kw):
    if name == "linear":
        return linear_suite(**kw)
    if name == "relu-prune":
        return relu_prune_suite(**kw)
    if name == "relu-quant":
        return relu_quant_suite(**kw)
    if name == "hermite":
        return hermite_suite(**kw)
    if name == "cubic":
        return cubic_suite(**kw)
    raise ValueError(f"unknown suite {name!r}")
