import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crhd import (
    CrhdError,
    DenseCurve,
    Grid,
    inner_product,
    interp_bilinear,
    interp_linear,
    std_normal_cdf,
    substream,
    trapezoid_weights,
)
from crhd.numerics import derive_seed, interp_rows

from oracles import normal_cdf_quadrature


class TestTrapezoidWeights:
    def test_uniform_three_points(self):
        np.testing.assert_allclose(trapezoid_weights([0, 0.5, 1]), [0.25, 0.5, 0.25])

    def test_two_points(self):
        np.testing.assert_allclose(trapezoid_weights([0, 1]), [0.5, 0.5])

    def test_non_uniform(self):
        np.testing.assert_allclose(trapezoid_weights([0, 0.25, 1]), [0.125, 0.5, 0.375])

    def test_non_increasing_rejected(self):
        with pytest.raises(CrhdError):
            trapezoid_weights([0, 0.5, 0.5, 1])

    @given(
        st.lists(st.floats(0.001, 0.999), min_size=1, max_size=30, unique=True)
    )
    @settings(max_examples=200, deadline=None)
    def test_positive_and_sum_to_domain_length(self, interior):
        pts = np.concatenate([[0.0], np.sort(interior), [1.0]])
        w = trapezoid_weights(pts)
        assert np.all(w > 0)
        assert np.isclose(w.sum(), 1.0, atol=1e-12)


class TestInnerProduct:
    def test_constant_one(self):
        g = Grid.uniform(17)
        f = DenseCurve(g, np.ones(17))
        assert inner_product(f, f) == pytest.approx(1.0, abs=1e-12)

    def test_sine_norm(self):
        g = Grid.uniform(101)
        f = DenseCurve(g, np.sqrt(2) * np.sin(2 * np.pi * g.points))
        assert inner_product(f, f) == pytest.approx(1.0, abs=1e-3)

    def test_fourier_orthogonality(self):
        g = Grid.uniform(101)
        f = DenseCurve(g, np.sqrt(2) * np.sin(2 * np.pi * g.points))
        h = DenseCurve(g, np.sqrt(2) * np.cos(2 * np.pi * g.points))
        assert inner_product(f, h) == pytest.approx(0.0, abs=1e-3)

    def test_symmetry_and_bilinearity(self):
        g = Grid.uniform(31)
        rng = np.random.default_rng(0)
        a, b, c = (DenseCurve(g, rng.normal(size=31)) for _ in range(3))
        assert inner_product(a, b) == pytest.approx(inner_product(b, a), abs=1e-14)
        combo = DenseCurve(g, 2.0 * a.values + 3.0 * b.values)
        assert inner_product(combo, c) == pytest.approx(
            2 * inner_product(a, c) + 3 * inner_product(b, c), rel=1e-12
        )
        assert inner_product(a, a) >= 0

    def test_grid_mismatch_rejected(self):
        f = DenseCurve(Grid.uniform(11), np.ones(11))
        g = DenseCurve(Grid.uniform(12), np.ones(12))
        with pytest.raises(CrhdError):
            inner_product(f, g)


class TestInterpolation:
    def test_midpoint(self):
        g = Grid.from_points([0.0, 1.0])
        assert interp_linear(g, np.array([0.0, 2.0]), 0.5) == pytest.approx(1.0)

    def test_exact_at_knots(self):
        g = Grid.uniform(7)
        vals = np.sin(g.points * 3.0)
        for p, v in zip(g.points, vals):
            assert interp_linear(g, vals, p) == v

    def test_piecewise(self):
        g = Grid.from_points([0.0, 0.5, 1.0])
        assert interp_linear(g, np.array([0.0, 1.0, 0.0]), 0.75) == pytest.approx(0.5)

    def test_out_of_domain_rejected(self):
        g = Grid.uniform(5)
        with pytest.raises(CrhdError):
            interp_linear(g, np.zeros(5), 1.5)

    def test_interp_rows_matches_scalar_path(self):
        g = Grid.uniform(13)
        rng = np.random.default_rng(3)
        rows = rng.normal(size=(4, 13))
        t = rng.random(9)
        out = interp_rows(g, rows, t)
        for r in range(4):
            np.testing.assert_allclose(out[r], interp_linear(g, rows[r], t), atol=0)

    def test_bilinear_of_separable_surface(self):
        g = Grid.uniform(21)
        rng = np.random.default_rng(5)
        rows = rng.normal(size=(3, 21))
        coef = np.array([2.0, 0.7, 0.1])
        surface = rows.T @ (coef[:, None] * rows)
        s = rng.random(40)
        t = rng.random(40)
        direct = np.einsum(
            "k,ks,ks->s", coef, interp_rows(g, rows, s), interp_rows(g, rows, t)
        )
        np.testing.assert_allclose(interp_bilinear(g, surface, s, t), direct, atol=1e-12)


class TestStdNormalCdf:
    def test_center(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_far_tail(self):
        assert abs(std_normal_cdf(40.0) - 1.0) <= 1e-12

    def test_quantile_against_quadrature_oracle(self):
        oracle = normal_cdf_quadrature(1.959964)
        assert oracle == pytest.approx(0.975, abs=1e-6)
        assert std_normal_cdf(1.959964) == pytest.approx(oracle, abs=1e-12)

    @given(st.floats(-37, 37))
    @settings(max_examples=300, deadline=None)
    def test_reflection_and_monotone(self, z):
        assert abs(std_normal_cdf(z) + std_normal_cdf(-z) - 1.0) <= 1e-12
        assert std_normal_cdf(z + 0.1) >= std_normal_cdf(z)


class TestSubstreams:
    def test_reproducible(self):
        a = substream(7, 1, 2).standard_normal(5)
        b = substream(7, 1, 2).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_independent_of_sibling_consumption(self):
        first = substream(7, 3).standard_normal(4)
        _ = substream(7, 1).standard_normal(1000)
        _ = substream(7, 2).standard_normal(1)
        np.testing.assert_array_equal(first, substream(7, 3).standard_normal(4))

    def test_distinct_paths_differ(self):
        a = substream(7, 1).standard_normal(4)
        b = substream(7, 2).standard_normal(4)
        assert not np.array_equal(a, b)

    def test_derive_seed_stable_and_nonnegative(self):
        s = derive_seed(3, 1, 4)
        assert s == derive_seed(3, 1, 4)
        assert s >= 0
        assert derive_seed(3, 1, 5) != s

    def test_negative_seed_rejected(self):
        with pytest.raises(CrhdError):
            substream(-1)


class TestGrid:
    def test_endpoints_enforced(self):
        with pytest.raises(CrhdError):
            Grid.from_points([0.1, 0.5, 1.0])

    def test_values_length_checked(self):
        with pytest.raises(CrhdError):
            DenseCurve(Grid.uniform(5), np.zeros(4))

    def test_immutability(self):
        g = Grid.uniform(5)
        with pytest.raises(ValueError):
            g.points[0] = 3.0
