import math
import random
from fractions import Fraction

import numpy as np
import pytest

from gridcast.combinat import f3_ratio_seq
from gridcast.halfspace import (
    halfspace_pair_covariance,
    halfspace_root_covariance,
    halfspace_vertex_variance,
    normalized_noise_series,
    pair_covariance_over_cov_sq_series,
    shifted_autocorrelation,
    single_vertex_log10_ratio_series,
    single_vertex_ratio_series,
    single_vertex_ratio_sq_exact,
    subcritical_window_ratio_bound,
    window_layer_covariance,
    window_scaled_covariance_float,
)
from gridcast.poset import ModelSpec, Window

from oracles import brute_pair_covariance_halfspace

HS1 = ModelSpec.halfspace_critical(1)
HS2 = ModelSpec.halfspace_critical(2)


class TestExactFormulas:
    def test_critical_d1_variances(self):
        assert halfspace_vertex_variance(HS1, 1) == Fraction(3, 2)
        assert halfspace_vertex_variance(HS1, 2) == Fraction(7, 4)

    def test_layer_zero_returns_root_variance(self):
        assert halfspace_vertex_variance(HS1, 0) == 1

    def test_root_covariance(self):
        m = ModelSpec.halfspace(1, Fraction(2, 5))
        assert halfspace_root_covariance(m, 3) == Fraction(4, 5) ** 3

    def test_pair_covariance_example(self):
        assert halfspace_pair_covariance(HS1, 2, (1, -1)) == Fraction(9, 8)

    def test_pair_with_zero_shift_is_variance(self):
        assert halfspace_pair_covariance(HS1, 3, (0, 0)) == halfspace_vertex_variance(
            HS1, 3
        )

    def test_far_shift_leaves_only_root_term(self):
        m = ModelSpec.halfspace(1, Fraction(1, 3))
        t = 3
        assert halfspace_pair_covariance(m, t, (5, -5)) == m.branching ** (2 * t)

    def test_wrong_shift_rejected(self):
        with pytest.raises(ValueError):
            halfspace_pair_covariance(HS1, 2, (1, 0))
        with pytest.raises(ValueError):
            halfspace_pair_covariance(HS1, 2, (1,))

    def test_pairs_unsupported_above_d2(self):
        m = ModelSpec.halfspace_critical(3)
        with pytest.raises(NotImplementedError):
            halfspace_pair_covariance(m, 2, (1, -1, 0, 0))
        # variances still fine at any d
        assert halfspace_vertex_variance(ModelSpec.halfspace_critical(5), 3) > 0

    def test_matches_symbolic_oracle(self):
        rng = random.Random(5)
        for d in (1, 2):
            for _ in range(3):
                m = ModelSpec.halfspace(
                    d,
                    Fraction(rng.randint(1, 8), 8 * (d + 1)),
                    epsilon=Fraction(rng.randint(1, 4), 2),
                    sigma0_sq=Fraction(rng.randint(1, 3)),
                )
                t = rng.randint(1, 3)
                v = (t,) + (0,) * d
                shift = [1, -1] + [0] * (d - 1)
                w = tuple(a - b for a, b in zip(v, shift))
                assert halfspace_pair_covariance(
                    m, t, tuple(shift)
                ) == brute_pair_covariance_halfspace(m, v, w)
                assert halfspace_vertex_variance(
                    m, t
                ) == brute_pair_covariance_halfspace(m, v, v)

    def test_critical_variance_alternative_form(self):
        # 1 + 1/(d+1) + 1/(d+1) * sum_{k>=1} (d+1)^-2k F(k, d+1)
        from gridcast.combinat import abelian_square_counts

        for m in (HS1, HS2):
            d = m.d
            for t in (1, 2, 5, 9):
                counts = abelian_square_counts(t - 1, d + 1)
                alt = (
                    1
                    + Fraction(1, d + 1)
                    + Fraction(1, d + 1)
                    * sum(
                        (
                            Fraction(counts[k], (d + 1) ** (2 * k))
                            for k in range(1, t)
                        ),
                        Fraction(0),
                    )
                )
                assert halfspace_vertex_variance(m, t) == alt

    def test_autocorrelation_symmetry(self):
        assert shifted_autocorrelation(4, (2, -2)) == shifted_autocorrelation(
            4, (-2, 2)
        )
        assert shifted_autocorrelation(3, (1, 1, -2)) == shifted_autocorrelation(
            3, (-1, -1, 2)
        )


class TestFloatSeries:
    def test_series_matches_exact_at_overlap(self):
        for m in (
            HS1,
            HS2,
            ModelSpec.halfspace(1, Fraction(3, 5)),
            ModelSpec.halfspace(2, Fraction(1, 5)),
            ModelSpec.halfspace(0, 2),
        ):
            s = single_vertex_ratio_series(m, 40)
            for t in (1, 7, 25, 40):
                exact = math.sqrt(float(single_vertex_ratio_sq_exact(m, t)))
                assert abs(s[t] - exact) <= 1e-11 * exact

    def test_log_series_consistent_where_representable(self):
        m = ModelSpec.halfspace(1, Fraction(2, 5))
        s = single_vertex_ratio_series(m, 120)
        ls = single_vertex_log10_ratio_series(m, 120)
        for t in (1, 30, 120):
            assert abs(10 ** ls[t] - s[t]) <= 1e-9 * s[t]

    def test_log_series_finite_deep_subcritical(self):
        m = ModelSpec.halfspace(1, Fraction(2, 5))
        ls = single_vertex_log10_ratio_series(m, 20_000)
        assert np.isfinite(ls).all()
        assert ls[-1] < -1000

    def test_pair_series_matches_exact_critical(self):
        series = pair_covariance_over_cov_sq_series(HS1, 30, 1)
        for t in (2, 11, 30):
            exact = float(halfspace_pair_covariance(HS1, t, (1, -1)))
            assert abs(series[t] - exact) <= 1e-10 * exact

    def test_noise_series_overflow_is_graceful(self):
        m = ModelSpec.halfspace(1, Fraction(1, 5))
        s = single_vertex_ratio_series(m, 5000)
        assert s[-1] == 0.0  # underflow maps to zero ratio


class TestEnvelopes:
    """Same-layer covariance envelopes in the reachable range t in [1e3, 1e4]."""

    def test_d1_variance_envelope(self):
        s = normalized_noise_series(HS1, 10_000)
        for t in (1000, 3162, 10_000):
            var = 1.0 + 2 * 0.25 * s[t]
            assert 0.5 * math.sqrt(t) <= var <= math.sqrt(t)

    def test_d1_nearby_covariance_floor(self):
        for shift in (1, 8, 64):
            series = pair_covariance_over_cov_sq_series(HS1, 10_000, shift)
            for t in (1000, 3162, 10_000):
                assert series[t] >= math.sqrt(t) / 50

    def test_d2_variance_envelope(self):
        g = f3_ratio_seq(10_000)
        partial = np.cumsum(g)
        for t in (1000, 3162, 10_000):
            var = 1.0 + (partial[t - 1]) / 3.0
            assert math.log(t) / 400 <= var <= math.log(t)


class TestWindows:
    def test_window_of_width_one_is_single_vertex(self):
        lc = window_layer_covariance(HS1, 4, Window((2, 2), 1))
        assert lc.n == 1
        assert lc.sigma[0][0] == halfspace_vertex_variance(HS1, 4)

    def test_window_matrix_entries_follow_shifts(self):
        lc = window_layer_covariance(HS1, 3, Window((0, 0), 4))
        for i, u in enumerate(lc.vertices):
            for j, v in enumerate(lc.vertices):
                delta = tuple(a - b for a, b in zip(u, v))
                assert lc.sigma[i][j] == halfspace_pair_covariance(HS1, 3, delta)

    def test_scaled_float_window_matches_exact_ratio(self):
        from gridcast.estimators import optimal_linear

        for t in (4, 9):
            w = Window((0, t - 3), 4)
            exact = optimal_linear(window_layer_covariance(HS1, t, w))
            verts, sigma, f = window_scaled_covariance_float(HS1, t, w)
            c = np.linalg.solve(sigma, f)
            assert verts == exact.vertices
            assert abs(float(exact.ratio_sq) - c @ f) < 1e-10

    def test_d3_wide_window_unsupported(self):
        m = ModelSpec.halfspace_critical(3)
        with pytest.raises(NotImplementedError):
            window_layer_covariance(m, 2, Window((0, 0, 0, -1), 2))
        lc = window_layer_covariance(m, 2, Window((2, 0, 0, 0), 1))
        assert lc.n == 1

    def test_d2_window_ratio_respects_sqrt_log_bound(self):
        from gridcast.estimators import window_optimal

        t = 30
        res = window_optimal(HS2, t, Window((0, 0, t - 2), 2))
        assert res.ratio <= 2**24 * 2**2 / math.sqrt(math.log(t))

    def test_d0_halfspace_agrees_with_finite_chain(self):
        # the d=0 half-space poset is the nonnegative chain of the finite model
        from gridcast.covariance import finite_layer_covariance

        alpha = Fraction(7, 10)
        hs = ModelSpec.halfspace(0, alpha, epsilon=Fraction(3, 2), sigma0_sq=2)
        fin = ModelSpec.finite(0, (alpha,), epsilon=Fraction(3, 2), sigma0_sq=2)
        for t in (0, 1, 5, 12):
            lc = finite_layer_covariance(fin, t)
            assert halfspace_vertex_variance(hs, t) == lc.sigma[0][0]
            assert halfspace_root_covariance(hs, t) == lc.f[0]

    def test_subcritical_bound_requires_subcriticality(self):
        with pytest.raises(ValueError):
            subcritical_window_ratio_bound(HS1, 10, 3)
        val = subcritical_window_ratio_bound(
            ModelSpec.halfspace(1, Fraction(2, 5)), 10, 3
        )
        assert 0 < val < 1
