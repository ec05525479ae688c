import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rdcompress import presets
from rdcompress.errors import DomainError, ShapeError
from rdcompress.rd_linear import (
    LinearSource,
    achievability_report,
    nats_to_bits,
    optimal_linear_compressor,
    rd_curve,
    sample_pairs,
    scalar_gaussian_rd,
    waterfill,
)


def level_by_segments(caps, D):
    """Closed-form mu from the piecewise-linear fill curve.

    With capacities sorted ascending, once the j smallest are full
    g(mu) = sum(c[:j]) + (m - j) mu on [c[j-1], c[j]].
    """
    c = np.sort(caps)
    m = len(c)
    for j in range(m):
        mu = (D - c[:j].sum()) / (m - j)
        lo = c[j - 1] if j else 0.0
        if lo <= mu <= c[j]:
            return mu
    return c[-1]


def rate_from_level(src, mu):
    caps = src.capacities
    active = caps > mu
    return 0.5 * float(np.sum(np.log(caps[active] / mu)))


def random_source(rng, m):
    return LinearSource(rng.uniform(0.1, 5.0, m), rng.uniform(0.1, 5.0, m))


class TestScalar:
    def test_one_bit(self):
        assert scalar_gaussian_rd(1.0, 0.25) == 1.0

    @pytest.mark.parametrize("D", [1.0, 1.5, 100.0])
    def test_zero_rate_above_variance(self, D):
        assert scalar_gaussian_rd(1.0, D) == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            scalar_gaussian_rd(1.0, 0.0)

    def test_single_coordinate_source_matches(self):
        src = LinearSource([2.0], [1.0])
        for D in (0.1, 0.5, 1.9):
            assert nats_to_bits(waterfill(src, D).rate_nats) == pytest.approx(scalar_gaussian_rd(2.0, D), abs=1e-12)


class TestFig2:
    src = presets.fig2_source()

    @pytest.mark.parametrize("D,mu,levels", [
        (0.6, 0.2, (0.2 / 3, 0.1, 0.2)),
        (3.0, 1.0, (1 / 3, 1 / 2, 1.0)),
        (9.0, 4.0, (4 / 3, 2.0, 1.0)),
        (14.0, 9.0, (3.0, 2.0, 1.0)),
    ])
    def test_levels(self, D, mu, levels):
        sol = waterfill(self.src, D)
        assert sol.mu == pytest.approx(mu, abs=1e-9)
        np.testing.assert_allclose(sol.levels, levels, atol=1e-9)

    def test_breakpoint_fullness(self):
        assert waterfill(self.src, 3.0).full.tolist() == [False, False, True]
        assert waterfill(self.src, 9.0).full.tolist() == [False, True, True]

    def test_rate_at_three(self):
        sol = waterfill(self.src, 3.0)
        assert sol.rate_nats == pytest.approx(math.log(6.0), abs=1e-9)
        assert sol.rate_bits == pytest.approx(2.584962500721156, abs=1e-9)

    def test_zero_rate_at_dmax(self):
        assert self.src.d_max == 14.0
        assert waterfill(self.src, 14.0).rate_nats == 0.0

    def test_beyond_dmax(self):
        with pytest.raises(DomainError):
            waterfill(self.src, 14.5)


class TestAgainstSegments:
    def test_random_sources(self, rng):
        for _ in range(100):
            src = random_source(rng, int(rng.integers(1, 8)))
            D = rng.uniform(1e-3, 1.0) * src.d_max
            sol = waterfill(src, D)
            mu = level_by_segments(src.capacities, D)
            assert sol.mu == pytest.approx(mu, rel=1e-12, abs=1e-15)
            assert sol.rate_nats == pytest.approx(rate_from_level(src, mu), rel=1e-10, abs=1e-12)
            assert float(np.sum(src.lambda_x * sol.levels)) == pytest.approx(D, rel=1e-12)

    def test_ties_between_capacities(self):
        src = LinearSource([1.0, 2.0, 1.0], [2.0, 1.0, 2.0])
        sol = waterfill(src, 3.0)
        assert sol.mu == pytest.approx(1.0)
        np.testing.assert_allclose(sol.levels, [0.5, 1.0, 0.5])


class TestCurve:
    def test_kkt_constant_level(self, rng):
        for _ in range(100):
            src = random_source(rng, 5)
            sol = waterfill(src, rng.uniform(0.01, 0.99) * src.d_max)
            lv = (src.lambda_x * sol.levels)[~sol.full]
            assert np.ptp(lv) <= 1e-9
            assert np.all(src.lambda_x * sol.levels <= sol.mu * (1 + 1e-12))

    def test_convex_nonincreasing(self, rng):
        for _ in range(20):
            src = random_source(rng, 4)
            grid = np.linspace(src.d_max / 50, src.d_max, 50)
            r = np.array([row[1] for row in rd_curve(src, grid)])
            assert np.all(np.diff(r) <= 1e-12)
            assert np.all(np.diff(r, 2) >= -1e-10)

    def test_grid_validation(self):
        src = presets.fig2_source()
        with pytest.raises(ValueError):
            rd_curve(src, [3.0, 1.0])
        with pytest.raises(ValueError):
            rd_curve(src, [])

    @given(st.lists(st.floats(0.05, 10.0), min_size=1, max_size=6), st.floats(0.01, 1.0))
    def test_budget_met(self, sig, frac):
        src = LinearSource(np.array(sig), np.array(sig[::-1]))
        D = frac * src.d_max
        sol = waterfill(src, D)
        assert float(np.sum(src.lambda_x * sol.levels)) == pytest.approx(D, rel=1e-11)
        assert sol.rate_nats >= 0
        assert np.all(sol.levels <= src.sigma_w * (1 + 1e-12))


class TestSourceValidation:
    def test_nondiagonal_rejected(self):
        with pytest.raises(DomainError):
            LinearSource(np.array([[1.0, 0.1], [0.1, 1.0]]), np.eye(2))

    def test_matrix_diagonal_accepted(self):
        src = LinearSource(np.diag([3.0, 2.0]), np.diag([1.0, 1.0]))
        np.testing.assert_array_equal(src.sigma_w, [3.0, 2.0])

    def test_nonpositive(self):
        with pytest.raises(DomainError):
            LinearSource([1.0, 0.0], [1.0, 1.0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            LinearSource([1.0, 2.0], [1.0])


class TestAchievability:
    src = presets.fig2_source()

    def test_report_bands(self):
        rep = achievability_report(self.src, 3.0, 100_000, seed=0)
        assert abs(rep.empirical_distortion - 3.0) / 3.0 < 0.02
        active = ~rep.full
        assert np.all(np.abs(rep.cov[active]) <= 3 * rep.cov_stderr[active])
        assert rep.full_all_zero
        assert rep.mutual_information_nats == rep.rate_nats
        np.testing.assert_allclose(rep.var_hat[active], rep.var_hat_target[active], rtol=0.03)

    def test_seed_reproducible(self):
        a = sample_pairs(self.src, 3.0, 20_000, seed=4)
        b = sample_pairs(self.src, 3.0, 20_000, seed=4)
        np.testing.assert_array_equal(a[1], b[1])

    def test_chunks_are_independent_streams(self):
        # the first chunk does not depend on the total sample count
        a = sample_pairs(self.src, 3.0, 8192, seed=1)[0]
        b = sample_pairs(self.src, 3.0, 20_000, seed=1)[0]
        np.testing.assert_array_equal(a, b[:8192])

    def test_compressor_zeroes_full_coordinates(self):
        w = np.array([[1.0, -2.0, 0.7], [0.3, 0.3, -5.0]])
        out = optimal_linear_compressor(self.src, 9.0, w, seed=0)
        np.testing.assert_array_equal(out[:, 1:], 0.0)
        assert np.all(out[:, 0] != 0.0)

    def test_compressor_shrinks_in_mean(self):
        w = np.tile([2.0, 2.0, 2.0], (50_000, 1))
        out = optimal_linear_compressor(self.src, 3.0, w, seed=3)
        # E[What | w] = (sigma^2 - D_i) / sigma^2 * w on active coordinates
        np.testing.assert_allclose(out[:, :2].mean(0), [2 * (3 - 1 / 3) / 3, 2 * (2 - 0.5) / 2], atol=0.01)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            achievability_report(self.src, 3.0, 100)
