import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from rdcompress import kernels, relu_oracle
from rdcompress.errors import DomainError, ShapeError
from rdcompress.relu_oracle import (
    DpTerms,
    analytic_relu_mse,
    dp_term,
    dp_term_abc,
    half_gaussian_check,
    hermite_coeffs,
    monte_carlo_relu_mse,
    relu_weighted_objective,
    verify_prune_optimality,
    verify_quant_optimality,
)


def arccos_mse(w, w_hat, lam):
    """First-order arc-cosine kernel: E[relu(u) relu(v)] = ab/(2 pi) (sin t + (pi - t) cos t)."""
    a2 = np.sum(lam * w * w)
    b2 = np.sum(lam * w_hat * w_hat)
    if b2 == 0 or a2 == 0:
        return 0.5 * (a2 + b2)
    a, b = math.sqrt(a2), math.sqrt(b2)
    t = math.acos(min(1.0, max(-1.0, np.sum(lam * w * w_hat) / (a * b))))
    return 0.5 * a2 + 0.5 * b2 - 2 * a * b / (2 * math.pi) * (math.sin(t) + (math.pi - t) * math.cos(t))


class TestHermite:
    hc = hermite_coeffs(40)

    def test_low_order(self):
        s = self.hc.sigma_hat
        assert s[0] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-13)
        assert s[1] == pytest.approx(0.5, abs=1e-13)
        assert s[2] == pytest.approx(1 / math.sqrt(4 * math.pi), abs=1e-13)

    def test_odd_vanish(self):
        assert np.max(np.abs(self.hc.sigma_hat[3::2])) < 1e-13

    def test_even_magnitudes(self):
        # |sigma_p| = (p-3)!! / sqrt(2 pi p!) for even p >= 2, alternating sign from p = 4
        for p in range(2, 41, 2):
            df = math.prod(range(p - 3, 0, -2)) if p > 3 else 1
            assert abs(self.hc.sigma_hat[p]) == pytest.approx(df / math.sqrt(2 * math.pi * math.factorial(p)), rel=1e-9)
        assert self.hc.sigma_hat[4] < 0 < self.hc.sigma_hat[6]

    def test_parseval(self):
        gap = self.hc.truncation_gap()
        assert 0 <= gap <= 1e-3
        sums = np.cumsum(self.hc.squared)
        assert np.all(np.diff(sums) >= 0) and sums[-1] < 0.5

    def test_printed_formula_breaks_at_six(self):
        mm = self.hc.formula_mismatch()
        assert mm["printed"][0] == 6
        assert mm["single_factorial"] == []
        assert self.hc.printed_formula[6] == pytest.approx(9 / math.sqrt(2 * math.pi * 720))

    def test_parseval_with_printed_formula_overshoots(self):
        s = self.hc.printed_formula
        total = 1 / (2 * math.pi) + 0.25 + np.nansum(s[2:] ** 2)
        assert total > 0.5

    def test_node_count_floor(self):
        with pytest.raises(ValueError):
            hermite_coeffs(10, nodes=50)
        with pytest.raises(ValueError):
            hermite_coeffs(0)


class TestAnalyticMSE:
    def test_identical(self, rng):
        # the truncated series leaves exactly 2 a^2 (1/2 - sum sigma_p^2) at rho = 1
        w = rng.standard_normal(4)
        a2 = np.sum(w * w)
        gap = hermite_coeffs(40).truncation_gap()
        assert analytic_relu_mse(w, w, np.ones(4)) == pytest.approx(2 * a2 * gap, rel=1e-9)
        assert analytic_relu_mse(w, w, np.ones(4), p_max=200) < 2e-4 * a2

    def test_zero_compressed(self, rng):
        w, lam = rng.standard_normal(4), rng.uniform(0.5, 2, 4)
        assert analytic_relu_mse(w, np.zeros(4), lam) == 0.5 * np.sum(lam * w * w)

    def test_against_arccos(self, rng):
        hc = hermite_coeffs(40)
        for _ in range(50):
            w, lam = relu_oracle.random_instance(rng, 5)
            w_hat = w + rng.standard_normal(5) * rng.uniform(0.01, 2)
            got = analytic_relu_mse(w, w_hat, lam)
            a = math.sqrt(np.sum(lam * w * w))
            b = math.sqrt(np.sum(lam * w_hat * w_hat))
            assert got == pytest.approx(arccos_mse(w, w_hat, lam), abs=2 * a * b * hc.truncation_gap() + 1e-12)

    def test_more_terms_closer(self, rng):
        w, lam = relu_oracle.random_instance(rng, 4)
        w_hat = -w + 0.1 * rng.standard_normal(4)
        ref = arccos_mse(w, w_hat, lam)
        errs = [abs(analytic_relu_mse(w, w_hat, lam, p) - ref) for p in (10, 20, 40, 80)]
        assert errs == sorted(errs, reverse=True)

    def test_pmax_rules(self):
        with pytest.raises(ValueError):
            analytic_relu_mse([1.0], [1.0], [1.0], p_max=11)
        with pytest.raises(ValueError):
            analytic_relu_mse([1.0], [1.0], [1.0], p_max=8)

    def test_nondiagonal_rejected(self):
        with pytest.raises(DomainError):
            analytic_relu_mse([1.0, 0.0], [0.0, 1.0], np.array([[1.0, 0.2], [0.2, 1.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            relu_weighted_objective([1.0, 2.0], [1.0], [1.0, 1.0])

    @given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 3)), min_size=1, max_size=6),
           st.randoms(use_true_random=False))
    def test_symmetric_nonnegative_permutation(self, rows, rnd):
        w, w_hat, lam = (np.array(c) for c in zip(*rows))
        v = analytic_relu_mse(w, w_hat, lam)
        assert v >= -1e-12
        assert analytic_relu_mse(w_hat, w, lam) == pytest.approx(v, rel=1e-12, abs=1e-12)
        perm = list(range(len(w)))
        rnd.shuffle(perm)
        assert analytic_relu_mse(w[perm], w_hat[perm], lam[perm]) == pytest.approx(v, rel=1e-12, abs=1e-12)

    def test_monte_carlo(self):
        for i in range(5):
            rng = np.random.default_rng([3, i])
            w, lam = relu_oracle.random_instance(rng, 4)
            w_hat = w + rng.standard_normal(4)
            mc, se = monte_carlo_relu_mse(w, w_hat, lam, 200_000, seed=i)
            assert abs(analytic_relu_mse(w, w_hat, lam) - mc) <= 4 * se

    def test_monte_carlo_deterministic(self):
        args = (np.ones(3), np.zeros(3), np.ones(3), 70_000)
        assert monte_carlo_relu_mse(*args, seed=5) == monte_carlo_relu_mse(*args, seed=5)
        assert monte_carlo_relu_mse(*args, seed=5) != monte_carlo_relu_mse(*args, seed=6)

    def test_half_gaussian(self):
        rng = np.random.default_rng(8)
        w, lam = relu_oracle.random_instance(rng, 4)
        est, se, exact = half_gaussian_check(w, w + rng.standard_normal(4), lam, 200_000, seed=1)
        assert abs(est - exact) <= 4 * se


class TestObjectiveAndDp:
    def test_objective_identity_cov(self, rng):
        w, w_hat = rng.standard_normal(4), rng.standard_normal(4)
        assert relu_weighted_objective(w, w_hat, np.ones(4)) == pytest.approx(np.sum((w - w_hat) ** 2))
        assert relu_weighted_objective(w, w, np.ones(4)) == 0.0

    def test_abc_identities(self, rng):
        w, w_hat, lam = rng.standard_normal(4), rng.standard_normal(4), rng.uniform(0.1, 2, 4)
        t = DpTerms.from_weights(w, w_hat, lam)
        assert t.cross == pytest.approx(t.A + t.B - t.C)
        assert t.b2 == pytest.approx(t.A + 2 * t.B - t.C)
        assert abs(t.rho) <= 1 + 1e-12

    def test_dp_low_orders(self, rng):
        w, w_hat, lam = rng.standard_normal(4), rng.standard_normal(4), rng.uniform(0.1, 2, 4)
        t = DpTerms.from_weights(w, w_hat, lam)
        assert dp_term(t, 0) == 0.0
        assert dp_term(t, 1) == pytest.approx(relu_weighted_objective(w, w_hat, lam), rel=1e-12)
        with pytest.raises(ValueError):
            dp_term(t, -1)

    @pytest.mark.parametrize("p", [2, 4])
    def test_monotone_in_C_when_B_zero(self, p):
        A = 2.0
        grid = np.linspace(0, A, 101)
        vals = [dp_term_abc(A, 0.0, C, p) for C in grid]
        assert np.all(np.diff(vals) > 0)
        np.testing.assert_allclose(vals, A**p - (A - grid) ** p, atol=1e-12)

    @pytest.mark.parametrize("p", [2, 4, 6])
    def test_minimum_at_B_zero(self, p):
        for A, C in [(1.0, 0.3), (2.0, 1.5), (3.0, 0.1)]:
            Bs = np.linspace(-0.5, 0.5, 201)
            vals = np.array([dp_term_abc(A, B, C, p) for B in Bs])
            assert Bs[np.argmin(vals)] == pytest.approx(0.0, abs=1e-12)

    def test_dp_expansion_matches_only_on_unit_sphere(self, rng):
        # sum sigma_p^2 D_p equals the analytic MSE when w^T S w = w_hat^T S w_hat = 1
        sq = hermite_coeffs(40).squared
        lam = np.ones(3)
        w = rng.standard_normal(3)
        w /= np.linalg.norm(w)
        w_hat = rng.standard_normal(3)
        w_hat /= np.linalg.norm(w_hat)
        t = DpTerms.from_weights(w, w_hat, lam)
        expansion = sum(sq[p] * dp_term(t, p) for p in range(41))
        # the expansion carries sum sigma_p^2 where the moments carry the exact 1/2
        gap = hermite_coeffs(40).truncation_gap()
        assert expansion == pytest.approx(analytic_relu_mse(w, w_hat, lam) - 2 * gap, abs=1e-12)
        t2 = DpTerms.from_weights(2 * w, w_hat, lam)
        expansion2 = sum(sq[p] * dp_term(t2, p) for p in range(41))
        assert abs(expansion2 - analytic_relu_mse(2 * w, w_hat, lam)) > 1e-3


class TestVerifiers:
    def test_dominant_weight(self):
        v = verify_prune_optimality(np.array([3.0, 1.0]), np.ones(2), 1)
        assert v.objective_argmin == [(0,)] and v.mse_argmin == [(0,)] and v.agree

    def test_keep_all(self, rng):
        w, lam = relu_oracle.random_instance(rng, 5)
        v = verify_prune_optimality(w, lam, 5)
        assert v.mse_argmin == [(0, 1, 2, 3, 4)] and v.objective_min == 0.0

    def test_random_prune(self):
        for i in range(20):
            w, lam = relu_oracle.random_instance(np.random.default_rng([11, i]), 8)
            assert verify_prune_optimality(w, lam, 4).agree

    def test_quant_k_equals_m(self, rng):
        w, lam = relu_oracle.random_instance(rng, 3)
        v = verify_quant_optimality(w, lam, 3)
        assert v.agree and v.objective_min == pytest.approx(0, abs=1e-24)

    def test_quant_identical_weights(self):
        v = verify_quant_optimality(np.array([0.7, 0.7]), np.array([1.0, 2.0]), 1)
        assert v.centroids_objective[0] == pytest.approx(0.7)
        assert v.agree

    def test_random_quant(self):
        for i in range(5):
            w, lam = relu_oracle.random_instance(np.random.default_rng([12, i]), 6)
            v = verify_quant_optimality(w, lam, 2)
            assert v.agree
            assert v.codebook_gap >= -1e-12

    def test_limits(self):
        with pytest.raises(DomainError):
            verify_prune_optimality(np.ones(21), np.ones(21), 3)
        with pytest.raises(DomainError):
            verify_quant_optimality(np.ones(9), np.ones(9), 2)
        with pytest.raises(DomainError):
            verify_quant_optimality(np.ones(4), np.ones(4), 4)


class TestCodebookMinimiser:
    def test_matches_scipy(self, rng):
        sq = np.ascontiguousarray(hermite_coeffs(40).squared)
        for _ in range(10):
            w, lam = relu_oracle.random_instance(rng, 6)
            A = rng.integers(0, 2, 6)
            L = np.bincount(A, weights=lam, minlength=2)
            M = np.bincount(A, weights=lam * w, minlength=2)
            a2 = float(np.sum(lam * w * w))
            c0 = np.where(L > 0, M / np.where(L > 0, L, 1), 0.0)
            c, f, _ = kernels.minimize_codebook_mse(L, M, a2, sq, c0.copy(), 1e-13, 2000)
            fun = lambda x: kernels.relu_mse_moments(a2, float(L @ (x * x)), float(M @ x), sq)
            ref = minimize(fun, c0, method="Nelder-Mead", options=dict(xatol=1e-12, fatol=1e-16, maxiter=20000))
            assert f <= ref.fun + 1e-12
            assert f <= fun(c0) + 1e-15
