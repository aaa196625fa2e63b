import numpy as np
import pytest
from fractions import Fraction

from gridcast.covariance import ResourceCapError
from gridcast.poset import ModelSpec, Window
from gridcast.simulate import (
    CHUNK,
    exact_reference_cov,
    export_csv,
    export_npz,
    moment_summary,
    sample_finite,
    sample_halfspace_window,
    sample_moments,
)

FIN1 = ModelSpec.finite_critical(1)
HS1 = ModelSpec.halfspace_critical(1)


class TestReproducibility:
    def test_identical_seeds_identical_bytes(self):
        a = sample_finite(FIN1, 3, 5000, seed=123)
        b = sample_finite(FIN1, 3, 5000, seed=123)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.x0, b.x0)
        c = sample_finite(FIN1, 3, 5000, seed=124)
        assert not np.array_equal(a.x, c.x)

    def test_streaming_equals_batch_across_chunk_boundary(self):
        n = CHUNK + 173
        batch = sample_finite(FIN1, 2, n, seed=9, max_cells=10**9)
        summary = moment_summary(batch)
        streamed = sample_moments(FIN1, 2, n, seed=9, max_cells=10**9)
        # identical draws; summation order differs, so equality up to rounding
        assert np.allclose(summary.mean, streamed.mean, rtol=1e-12, atol=1e-12)
        assert np.allclose(summary.second, streamed.second, rtol=1e-12)

    def test_halfspace_reproducible(self):
        w = Window((1, 0), 2)
        a = sample_halfspace_window(HS1, w, 2, 2000, seed=5)
        b = sample_halfspace_window(HS1, w, 2, 2000, seed=5)
        assert a.vertices == ((1, 1), (2, 0))
        assert np.array_equal(a.x, b.x)


class TestMomentsAgainstExact:
    def test_finite_model_moments(self):
        m = ModelSpec.finite(1, (Fraction(3, 4), Fraction(2, 5)), sigma0_sq=2)
        summary = sample_moments(m, 4, 200_000, seed=20240801, max_cells=10**8)
        exact = exact_reference_cov(m, 4)
        z = np.abs(summary.sample_cov() - exact) / summary.standard_error(exact)
        assert float(np.max(z)) < 4.5

    def test_halfspace_window_moments(self):
        w = Window((0, -1), 3)
        summary = sample_moments(
            HS1, 2, 200_000, seed=20240802, window=w, max_cells=10**8
        )
        exact = exact_reference_cov(HS1, 2, w)
        z = np.abs(summary.sample_cov() - exact) / summary.standard_error(exact)
        assert float(np.max(z)) < 4.5

    def test_width_one_window_matches_vertex_variance(self):
        from gridcast.halfspace import halfspace_vertex_variance

        w = Window((0, 2), 1)
        summary = sample_moments(HS1, 2, 150_000, seed=20240803, max_cells=10**8,
                                 window=w)
        var = float(halfspace_vertex_variance(HS1, 2))
        emp = summary.sample_cov()[1, 1]
        se = summary.standard_error(exact_reference_cov(HS1, 2, w))[1, 1]
        assert abs(emp - var) < 4.5 * se

    def test_binomial_estimator_correlation_matches_closed_form(self):
        import math
        from gridcast.estimators import closed_form_critical_d1

        t, n = 6, 200_000
        batch = sample_finite(FIN1, t, n, seed=20240805, max_cells=10**8)
        weights = np.array([math.comb(t, i) for i in range(t + 1)], dtype=float)
        zeta = batch.x @ weights
        corr = np.corrcoef(zeta, batch.x0)[0, 1]
        expected = math.sqrt(float(closed_form_critical_d1(t)[0]))
        se = (1 - expected**2) / math.sqrt(n)
        assert abs(corr - expected) < 4 * se

    def test_d2_critical_deep_vertex_variance(self):
        from gridcast.halfspace import halfspace_vertex_variance

        m2 = ModelSpec.halfspace_critical(2)
        t, n = 14, 80_000
        w = Window((t, 0, 0), 1)
        summary = sample_moments(m2, t, n, seed=20240806, window=w,
                                 max_cells=10**9)
        exact = float(halfspace_vertex_variance(m2, t))
        emp = summary.sample_cov()[1, 1]
        se = (2 * exact**2 / (n - 1)) ** 0.5
        assert abs(emp - exact) < 4 * se

    def test_zero_noise_override_collapses_to_root(self):
        batch = sample_finite(FIN1, 3, 500, seed=1, epsilon_override=0.0)
        assert np.allclose(batch.x, batch.x0[:, None], rtol=0, atol=1e-12)
        m2 = ModelSpec.finite_critical(2)
        batch2 = sample_finite(m2, 2, 500, seed=2, epsilon_override=0.0)
        assert np.allclose(batch2.x, batch2.x0[:, None], rtol=1e-12, atol=1e-12)

    def test_root_law_honors_mu0_sigma0(self):
        m = ModelSpec.finite(1, (1, Fraction(1, 2)), mu0=3, sigma0_sq=Fraction(1, 4))
        batch = sample_finite(m, 1, 100_000, seed=77)
        assert abs(batch.x0.mean() - 3.0) < 0.01
        assert abs(batch.x0.var() - 0.25) < 0.01


class TestGuards:
    def test_cell_cap(self):
        with pytest.raises(ResourceCapError):
            sample_finite(FIN1, 5, 10_000, seed=0, max_cells=100)

    def test_halfspace_needs_window_for_moments(self):
        with pytest.raises(ValueError):
            sample_moments(HS1, 2, 100, seed=0)

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            sample_halfspace_window(HS1, Window((0, 0), 1), 5, 10, seed=0)

    def test_negative_override_rejected(self):
        with pytest.raises(ValueError):
            sample_finite(FIN1, 1, 10, seed=0, epsilon_override=-1.0)


class TestExport:
    def test_csv_layout(self, tmp_path):
        batch = sample_finite(FIN1, 2, 7, seed=3)
        path = tmp_path / "batch.csv"
        export_csv(batch, path)
        lines = path.read_text().splitlines()
        assert lines[0].split(",")[0] == "x0"
        assert len(lines) == 8
        first = [float(x.strip('"')) for x in lines[1].split(",")]
        assert abs(first[0] - batch.x0[0]) < 1e-15

    def test_npz_roundtrip(self, tmp_path):
        batch = sample_finite(FIN1, 2, 11, seed=4)
        path = tmp_path / "batch.npz"
        export_npz(batch, path)
        data = np.load(path)
        assert np.array_equal(data["x"], batch.x)
        assert np.array_equal(data["x0"], batch.x0)
        assert data["vertices"].shape == (3, 2)
