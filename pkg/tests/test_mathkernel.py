import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from oracles import chi2_cdf_quad, normal_quantile_hp, stirling_log_gamma
from subsetsim.errors import DomainError
from subsetsim.mathkernel import (
    BetaParams,
    RngStream,
    beta_pdf,
    chi2_cdf,
    chi2_inv_cdf,
    chi2_inv_sf,
    chi2_sf,
    log_beta_fn,
    log_gamma,
    sample_std_normal,
    std_normal_cdf,
    std_normal_inv_cdf,
)


class TestNormalQuantile:
    def test_median(self):
        assert std_normal_inv_cdf(0.5) == 0.0

    def test_reliability_index(self):
        assert std_normal_inv_cdf(1 - 1e-3) == pytest.approx(3.0902323061678, abs=1e-9)

    def test_against_high_precision_inversion(self):
        for p in (0.841344746, 1e-6, 0.025, 0.3, 0.9, 1 - 1e-6):
            assert std_normal_inv_cdf(p) == pytest.approx(normal_quantile_hp(p), abs=1e-9)
        assert std_normal_inv_cdf(0.841344746) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            std_normal_inv_cdf(p)

    @given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
    def test_round_trip(self, p):
        assert std_normal_cdf(std_normal_inv_cdf(p)) == pytest.approx(p, abs=1e-8)

    @given(st.floats(1e-9, 1 - 1e-9), st.floats(1e-9, 1 - 1e-9))
    def test_monotone(self, p, q):
        if p < q:
            assert std_normal_inv_cdf(p) < std_normal_inv_cdf(q)


class TestChi2Quantile:
    def test_exponential_case(self):
        assert chi2_inv_cdf(0.5, 2) == pytest.approx(2 * math.log(2), rel=1e-12)

    def test_against_quadrature(self):
        v = chi2_inv_cdf(0.9, 1000)
        assert chi2_cdf_quad(v, 1000) == pytest.approx(0.9, abs=1e-9)

    @pytest.mark.parametrize("q", [500.0, 1000.0])
    def test_round_trip_d1000(self, q):
        assert chi2_inv_cdf(chi2_cdf(q, 1000), 1000) == pytest.approx(q, abs=1e-6)

    def test_round_trip_far_upper_tail(self):
        # F(1500) rounds to 1.0 in double precision, so go through the upper tail
        assert chi2_cdf(1500.0, 1000) == 1.0
        assert chi2_inv_sf(chi2_sf(1500.0, 1000), 1000) == pytest.approx(1500.0, abs=1e-6)

    @pytest.mark.parametrize("d", [1, 3, 1000])
    def test_upper_tail_quantile(self, d):
        for s in (1e-30, 1e-12, 1e-3, 0.5, 0.99):
            q = chi2_inv_sf(s, d)
            assert float(mpmath.gammainc(d / 2, q / 2, mpmath.inf, regularized=True)) == pytest.approx(s, rel=1e-8)

    @pytest.mark.parametrize("d", [1, 2, 7, 100, 1000])
    def test_extreme_probabilities(self, d):
        for p in (1e-6, 1e-3, 0.5, 1 - 1e-3, 1 - 1e-6):
            q = chi2_inv_cdf(p, d)
            assert float(mpmath.gammainc(d / 2, 0, q / 2, regularized=True)) == pytest.approx(p, rel=1e-8)

    def test_domain(self):
        for args in ((0.0, 3), (1.0, 3), (0.5, 0), (0.5, 2.5)):
            with pytest.raises(DomainError):
                chi2_inv_cdf(*args)

    @given(st.floats(1e-6, 1 - 1e-6), st.integers(1, 2000))
    def test_round_trip(self, p, d):
        assert chi2_cdf(chi2_inv_cdf(p, d), d) == pytest.approx(p, abs=1e-8)

    @given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6), st.integers(1, 500))
    def test_monotone(self, p, q, d):
        if p < q:
            assert chi2_inv_cdf(p, d) < chi2_inv_cdf(q, d)


class TestGammaBeta:
    def test_closed_forms(self):
        assert log_gamma(1.0) == 0.0
        assert log_gamma(0.5) == pytest.approx(math.log(math.sqrt(math.pi)), rel=1e-14)

    @pytest.mark.parametrize("x", [0.1, 0.5, 1.5, 7.25, 101.0, 901.0, 1002.0, 12345.6])
    def test_stirling_oracle(self, x):
        ref = float(stirling_log_gamma(x))
        assert log_gamma(x) == pytest.approx(ref, rel=1e-12, abs=1e-14)

    def test_log_beta_stirling(self):
        ref = stirling_log_gamma(101) + stirling_log_gamma(901) - stirling_log_gamma(1002)
        assert log_beta_fn(101, 901) == pytest.approx(float(ref), rel=1e-12)

    @pytest.mark.parametrize("x", [0.0, -1.0, -0.5])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            log_gamma(x)

    @given(st.floats(0.01, 1e4), st.floats(0.01, 1e4))
    def test_beta_identity(self, a, b):
        assert log_beta_fn(a, b) == pytest.approx(log_gamma(a) + log_gamma(b) - log_gamma(a + b), abs=1e-9)


class TestBetaDensity:
    def test_values(self):
        assert beta_pdf(0.3, BetaParams(1, 1)) == pytest.approx(1.0)
        assert beta_pdf(0.5, BetaParams(2, 2)) == pytest.approx(1.5)

    def test_mode_of_level_posterior(self):
        grid = np.linspace(0, 1, 200_001)
        dens = beta_pdf(grid, BetaParams(101, 901))
        assert grid[np.argmax(dens)] == pytest.approx(0.1, abs=5e-4)

    @pytest.mark.parametrize("a,b", [(1, 1), (2, 5), (0.5, 0.5), (101, 901), (6, 6), (1, 1001)])
    def test_normalised(self, a, b):
        p = BetaParams(a, b)
        lo, hi = stats.beta(a, b).ppf([1e-14, 1 - 1e-14])
        pts = [x for x in (p.mode,) if lo < x < hi]
        total, _ = integrate.quad(lambda x: beta_pdf(x, p), 0, 1, points=pts or None, limit=200,
                                  epsabs=1e-12)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_no_underflow_large_counts(self):
        assert beta_pdf(0.1, BetaParams(1001, 9001)) > 0

    @pytest.mark.parametrize("a,b", [(0, 1), (1, -2), (float("nan"), 1)])
    def test_invalid(self, a, b):
        with pytest.raises(DomainError):
            BetaParams(a, b)

    def test_outside_support(self):
        with pytest.raises(DomainError):
            beta_pdf(1.5, BetaParams(2, 2))


class TestRng:
    def test_deterministic(self):
        a = sample_std_normal(RngStream(42, (1, 3, "mma")), 1000)
        b = sample_std_normal(RngStream(42, (1, 3, "mma")), 1000)
        assert np.array_equal(a, b)

    def test_paths_differ(self):
        a = sample_std_normal(RngStream(42, (1, 3, "mma")), 10_000)
        b = sample_std_normal(RngStream(42, (1, 4, "mma")), 10_000)
        c = sample_std_normal(RngStream(43, (1, 3, "mma")), 10_000)
        for other in (b, c):
            assert not np.array_equal(a, other)
            # cross-correlation of independent streams is O(1/sqrt(n))
            assert abs(np.corrcoef(a, other)[0, 1]) < 4 / math.sqrt(10_000)

    def test_child_is_path_extension(self):
        assert RngStream(1).child(2, "x") == RngStream(1, (2, "x"))

    def test_moments(self):
        x = sample_std_normal(RngStream(2026), 1_000_000)
        assert abs(x.mean()) < 0.004
        assert abs(x.var() - 1) < 0.006

    def test_ks(self):
        n = 100_000
        x = sample_std_normal(RngStream(5, ("ks",)), n)
        stat = stats.kstest(x, "norm").statistic
        assert stat < 1.63 / math.sqrt(n)

    def test_invalid(self):
        with pytest.raises(DomainError):
            sample_std_normal(RngStream(1), 0)

    def test_derived_seed_is_64_bit(self):
        s = RngStream(9, ("study", 3)).derive_seed()
        assert 0 <= s < 2**64
        assert s != RngStream(9, ("study", 4)).derive_seed()
