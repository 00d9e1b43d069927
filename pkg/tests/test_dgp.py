import mpmath
import numpy as np
import pytest

from crhd import (
    CrhdError,
    Grid,
    SparseCurve,
    SparseSample,
    TrueModel,
    eigenvalues_from_decay,
    fourier_basis,
    gen_true_curves,
    sample_error,
    sample_scores,
    sparsify,
    substream,
)

from oracles import zeta_direct


class TestEigenvalues:
    def test_a2_leading_value_is_pi_squared_over_three(self):
        ev = eigenvalues_from_decay(2.0, 15)
        assert ev[0] == pytest.approx(np.pi**2 / 3, abs=1e-6)

    def test_a2_gap_recursion(self):
        ev = eigenvalues_from_decay(2.0, 15)
        assert ev[1] == pytest.approx(ev[0] - 2.0, abs=1e-6)
        gaps = ev[:-1] - ev[1:]
        js = np.arange(1, 15)
        np.testing.assert_allclose(gaps, 2.0 * js**-2.0, atol=1e-10)

    def test_a5_against_direct_summation_oracle(self):
        ev = eigenvalues_from_decay(5.0, 4)
        for k in range(1, 5):
            assert ev[k - 1] == pytest.approx(2.0 * zeta_direct(5.0, k), abs=1e-9)
        assert ev[0] == pytest.approx(2.0738555, abs=1e-6)

    def test_matches_arbitrary_precision_zeta(self):
        for a in (1.5, 2.0, 3.5, 5.0):
            ev = eigenvalues_from_decay(a, 3)
            for k in range(1, 4):
                truth = 2.0 * float(mpmath.zeta(a, k))
                assert ev[k - 1] == pytest.approx(truth, rel=1e-12)

    def test_divergent_rate_rejected(self):
        with pytest.raises(CrhdError):
            eigenvalues_from_decay(1.0, 5)

    def test_strictly_decreasing_positive(self):
        ev = eigenvalues_from_decay(3.5, 15)
        assert np.all(ev > 0)
        assert np.all(np.diff(ev) < 0)


class TestFourierBasis:
    def test_first_is_constant(self):
        g = Grid.uniform()
        basis = fourier_basis(g.points, 15)
        np.testing.assert_array_equal(basis[0], np.ones(len(g)))

    def test_quadrature_orthonormal_on_default_grid(self):
        g = Grid.uniform()
        basis = fourier_basis(g.points, 15)
        gram = (basis * g.weights) @ basis.T
        assert np.max(np.abs(gram - np.eye(15))) < 1e-6


class TestScores:
    def test_gaussian_unit_variance(self):
        draws = sample_scores("gaussian", 3, substream(0, 1), size=100_000)
        assert draws[:, 0].var() == pytest.approx(1.0, abs=0.02)

    def test_uu_bounded(self):
        draws = sample_scores("uu", 5, substream(0, 2), size=20_000)
        assert np.max(np.abs(draws)) <= 3.0

    def test_nn_dependence_through_shared_latent(self):
        draws = sample_scores("nn", 2, substream(0, 3), size=100_000)
        fourth = np.mean(draws[:, 0] ** 2 * draws[:, 1] ** 2)
        assert fourth == pytest.approx(3.0, abs=0.15)

    def test_single_draw_shape(self):
        assert sample_scores("nn", 7, substream(0, 4)).shape == (7,)

    def test_unknown_family_rejected(self):
        with pytest.raises(CrhdError):
            sample_scores("cauchy", 3, substream(0, 5))


class TestErrors:
    def test_normal_variance(self):
        draws = sample_error("normal", 0.1, substream(1, 1), size=100_000)
        assert draws.var() == pytest.approx(0.1, abs=0.005)

    def test_chi2_moments_against_gamma_oracle(self):
        import scipy.stats

        draws = sample_error("chi2", 1.0, substream(1, 2), size=100_000)
        assert draws.mean() == pytest.approx(0.0, abs=0.02)
        assert draws.var() == pytest.approx(1.0, abs=0.1)
        # distributional check against an independent gamma parameterization
        nu = 0.5
        ks = scipy.stats.kstest(draws + nu, scipy.stats.gamma(a=nu / 2, scale=2).cdf)
        assert ks.pvalue > 1e-4

    def test_chi2_support_bounded_below(self):
        for var in (0.01, 0.1, 1.0):
            draws = sample_error("chi2", var, substream(1, 3), size=50_000)
            assert np.min(draws) >= -var / 2

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(CrhdError):
            sample_error("normal", 0.0, substream(1, 4))


class TestCurveGeneration:
    def test_zero_scores_give_the_mean(self, monkeypatch):
        import crhd.dgp as dgp_mod

        tm = TrueModel.make(decay_a=5.0, mean_slope=2.0)
        monkeypatch.setattr(
            dgp_mod, "sample_scores", lambda dist, k, rng, size=None: np.zeros((size, k))
        )
        values, scores = dgp_mod.gen_true_curves(5, tm, substream(2, 1))
        np.testing.assert_allclose(values, np.tile(tm.mean, (5, 1)), atol=0)

    def test_reconstruction_identity(self):
        tm = TrueModel.make(decay_a=3.5, mean_slope=1.0)
        values, scores = gen_true_curves(50, tm, substream(2, 2))
        rebuilt = tm.mean + (scores * np.sqrt(tm.eigenvalues)) @ tm.eigenfunctions
        assert np.max(np.abs(values - rebuilt)) <= 1e-12

    def test_pointwise_mean_clt_bound(self):
        tm = TrueModel.make(decay_a=5.0)
        values, _ = gen_true_curves(10_000, tm, substream(2, 3))
        var_fun = np.sum(tm.eigenvalues[:, None] * tm.eigenfunctions**2, axis=0)
        bound = 4.0 * np.sqrt(var_fun / 10_000)
        assert np.all(np.abs(values.mean(axis=0)) <= bound)

    def test_pointwise_variance_matches_spectrum(self):
        tm = TrueModel.make(decay_a=5.0, score_dist="gaussian")
        values, _ = gen_true_curves(10_000, tm, substream(2, 4))
        var_fun = np.sum(tm.eigenvalues[:, None] * tm.eigenfunctions**2, axis=0)
        emp = values.var(axis=0)
        assert np.all(np.abs(emp - var_fun) <= 0.10 * var_fun)


class TestSparsify:
    def test_noiseless_constant_curve(self):
        g = Grid.uniform(11)
        values = np.full((4, 11), 3.0)
        sample = sparsify(values, g, "chi2", 0.0, substream(3, 1))
        for c in sample:
            np.testing.assert_array_equal(c.values, np.full(len(c), 3.0))

    def test_observation_count_mean(self):
        g = Grid.uniform(11)
        values = np.zeros((10_000, 11))
        sample = sparsify(values, g, "normal", 0.0, substream(3, 2))
        counts = np.array([len(c) for c in sample])
        assert counts.mean() == pytest.approx(5.5, abs=0.1)
        assert set(np.unique(counts)) <= set(range(2, 10))

    def test_bit_identical_reruns(self):
        g = Grid.uniform()
        values, _ = gen_true_curves(20, TrueModel.make(grid=g), substream(3, 3))
        s1 = sparsify(values, g, "chi2", 0.1, substream(3, 4))
        s2 = sparsify(values, g, "chi2", 0.1, substream(3, 4))
        for a, b in zip(s1, s2):
            np.testing.assert_array_equal(a.times, b.times)
            np.testing.assert_array_equal(a.values, b.values)


class TestContainers:
    def test_unsorted_times_rejected(self):
        with pytest.raises(CrhdError):
            SparseCurve(times=np.array([0.5, 0.2]), values=np.zeros(2), subject_id=0)

    def test_duplicate_subject_ids_rejected(self):
        c = SparseCurve(times=np.array([0.5]), values=np.zeros(1), subject_id=0)
        with pytest.raises(CrhdError):
            SparseSample(curves=(c, c))

    def test_true_model_requires_orthonormal_eigenfunctions(self):
        g = Grid.uniform()
        with pytest.raises(CrhdError):
            TrueModel(
                grid=g,
                mean_slope=0.0,
                decay_a=2.0,
                eigenvalues=np.array([2.0, 1.0]),
                eigenfunctions=np.ones((2, len(g))),
                score_dist="nn",
                error_dist="chi2",
                noise_var=0.1,
            )
