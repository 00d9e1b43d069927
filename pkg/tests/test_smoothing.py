import numpy as np
import pytest

from crhd import (
    CrhdError,
    DegenerateDesignError,
    Grid,
    InsufficientPairsError,
    SparseCurve,
    SparseSample,
    TrueModel,
    eigendecompose,
    estimate_noise_variance,
    fit_covariance,
    fit_mean,
    fit_model,
    gen_true_curves,
    model_from_dense,
    select_K_fve,
    sparsify,
    substream,
)
from crhd.dgp import fourier_basis
from crhd.smoothing import (
    Bandwidths,
    FittedModel,
    local_linear_1d,
    local_linear_2d,
    noise_from_diagonal,
)

from oracles import local_linear_wls

GRID = Grid.uniform()


def _line_sample(n=12, slope=2.0, pts=7, seed=0):
    rng = np.random.default_rng(seed)
    curves = []
    for i in range(n):
        t = np.sort(rng.random(pts))
        curves.append(SparseCurve(times=t, values=slope * t, subject_id=i))
    return SparseSample(curves=tuple(curves))


class TestLocalLinear1d:
    @pytest.mark.parametrize("h", [0.05, 0.2])
    def test_reproduces_linear_exactly(self, h):
        rng = np.random.default_rng(1)
        x = np.sort(rng.random(200))
        fit = local_linear_1d(x, 2.0 * x, h, GRID.points)
        interior = (GRID.points > 0.05) & (GRID.points < 0.95)
        np.testing.assert_allclose(fit[interior], 2.0 * GRID.points[interior], atol=1e-10)

    def test_reproduces_constant(self):
        rng = np.random.default_rng(2)
        x = np.sort(rng.random(60))
        fit = local_linear_1d(x, np.full(60, 5.0), 0.1, GRID.points)
        np.testing.assert_allclose(fit, 5.0, atol=1e-10)

    def test_quadratic_against_wls_oracle(self):
        x = np.linspace(0, 1, 200)
        y = x**2
        fit = local_linear_1d(x, y, 0.1, GRID.points)
        interior = (GRID.points >= 0.1) & (GRID.points <= 0.9)
        for m in np.flatnonzero(interior):
            assert fit[m] == pytest.approx(local_linear_wls(x, y, 0.1, GRID.points[m]), abs=1e-10)
        assert np.max(np.abs(fit[interior] - GRID.points[interior] ** 2)) <= 0.01

    def test_all_identical_times_rejected(self):
        with pytest.raises(DegenerateDesignError):
            local_linear_1d(np.full(5, 0.5), np.ones(5), 0.1, GRID.points)

    def test_sparse_support_falls_back_to_nw(self):
        # observations far from 0 leave the local design empty there
        x = np.array([0.8, 0.85, 0.9])
        fit = local_linear_1d(x, np.array([1.0, 2.0, 3.0]), 0.05, np.array([0.0]))
        assert np.isfinite(fit[0])


class TestFitMean:
    def test_linear_exactness(self):
        mu = fit_mean(_line_sample(), 0.15, GRID)
        np.testing.assert_allclose(mu, 2.0 * GRID.points, atol=1e-10)

    def test_single_curve_line(self):
        t = np.linspace(0.05, 0.95, 9)
        sample = SparseSample(curves=(SparseCurve(times=t, values=1.0 + 3.0 * t, subject_id="a"),))
        mu = fit_mean(sample, 0.2, GRID)
        np.testing.assert_allclose(mu, 1.0 + 3.0 * GRID.points, atol=1e-10)

    def test_sup_error_monte_carlo(self):
        # 100 replicates, n=400, zero mean, a=5, Gaussian scores, noise 0.1
        tm = TrueModel.make(decay_a=5.0, score_dist="gaussian", error_dist="normal")
        sups = []
        for rep in range(100):
            values, _ = gen_true_curves(400, tm, substream(10, rep, 0))
            sample = sparsify(values, GRID, "normal", 0.1, substream(10, rep, 1))
            model = fit_model(sample, GRID, k_max=5, seed=0)
            interior = (GRID.points >= 0.1) & (GRID.points <= 0.9)
            sups.append(np.max(np.abs(model.mu[interior])))
        assert np.quantile(sups, 0.95) <= 0.25


class TestFitCovariance:
    def test_constant_surface_recovery(self):
        # rank-1 truth gamma(s,t) = 2 with flat eigenfunction, no noise;
        # between-curve score variance forces averaging over replicates
        tm = TrueModel(
            grid=GRID,
            mean_slope=0.0,
            decay_a=2.0,
            eigenvalues=np.array([2.0]),
            eigenfunctions=np.ones((1, len(GRID))),
            score_dist="gaussian",
            error_dist="normal",
            noise_var=0.0,
        )
        interior = (GRID.points >= 0.1) & (GRID.points <= 0.9)
        acc = np.zeros((len(GRID), len(GRID)))
        reps = 30
        for rep in range(reps):
            values, _ = gen_true_curves(400, tm, substream(11, rep, 0))
            sample = sparsify(values, GRID, "normal", 0.0, substream(11, rep, 1))
            mu = fit_mean(sample, 0.2, GRID)
            surface = fit_covariance(sample, mu, 0.15, GRID)
            assert np.max(np.abs(surface[np.ix_(interior, interior)] - 2.0)) <= 0.75
            acc += surface
        avg = acc / reps
        assert np.max(np.abs(avg[np.ix_(interior, interior)] - 2.0)) <= 0.1

    def test_degenerate_sample_gives_zero_surface(self, monkeypatch):
        import crhd.dgp as dgp_mod

        tm = TrueModel.make(decay_a=5.0)
        monkeypatch.setattr(
            dgp_mod, "sample_scores", lambda dist, k, rng, size=None: np.zeros((size, k))
        )
        values, _ = dgp_mod.gen_true_curves(50, tm, substream(11, 2))
        sample = sparsify(values, GRID, "normal", 0.0, substream(11, 3))
        mu = fit_mean(sample, 0.2, GRID)
        surface = fit_covariance(sample, mu, 0.15, GRID)
        assert np.max(np.abs(surface)) <= 1e-8

    def test_symmetry(self):
        tm = TrueModel.make(decay_a=3.5)
        values, _ = gen_true_curves(40, tm, substream(11, 4))
        sample = sparsify(values, GRID, "chi2", 0.1, substream(11, 5))
        mu = fit_mean(sample, 0.2, GRID)
        surface = fit_covariance(sample, mu, 0.1, GRID)
        assert np.max(np.abs(surface - surface.T)) <= 1e-10

    def test_no_pairs_rejected(self):
        curves = tuple(
            SparseCurve(times=np.array([0.1 * (i + 1)]), values=np.zeros(1), subject_id=i)
            for i in range(5)
        )
        sample = SparseSample(curves=curves)
        mu = np.zeros(len(GRID))
        with pytest.raises(InsufficientPairsError):
            fit_covariance(sample, mu, 0.1, GRID)


class TestNoiseVariance:
    def test_constant_offset_recovery(self):
        gamma_diag = 1.0 + np.sin(2 * np.pi * GRID.points) ** 2
        v_diag = gamma_diag + 0.3
        assert noise_from_diagonal(v_diag, gamma_diag, GRID) == pytest.approx(0.3, abs=1e-10)

    def test_noiseless_hits_floor(self):
        gamma_diag = np.full(len(GRID), 2.0)
        v_diag = gamma_diag.copy()
        est = noise_from_diagonal(v_diag, gamma_diag, GRID)
        assert est == pytest.approx(1e-4 * 2.0, abs=1e-12)

    def test_monte_carlo_coverage(self):
        tm = TrueModel.make(decay_a=5.0, score_dist="gaussian", error_dist="normal")
        hits = 0
        for rep in range(100):
            values, _ = gen_true_curves(400, tm, substream(12, rep, 0))
            sample = sparsify(values, GRID, "normal", 0.1, substream(12, rep, 1))
            model = fit_model(sample, GRID, k_max=5, seed=0)
            hits += 0.05 <= model.sigma2 <= 0.2
        assert hits >= 90


class TestEigendecompose:
    def test_constant_kernel(self):
        vals, funs = eigendecompose(np.full((len(GRID), len(GRID)), 2.0), GRID, 5)
        assert vals.shape == (1,)
        assert vals[0] == pytest.approx(2.0, abs=1e-10)
        np.testing.assert_allclose(funs[0], 1.0, atol=1e-10)

    def test_two_component_fourier_surface(self):
        grid = Grid.uniform(101)
        basis = fourier_basis(grid.points, 3)[1:]  # sin and cos, frequency one
        truth_vals = np.array([2.0, 1.0])
        surface = basis.T @ (truth_vals[:, None] * basis)
        vals, funs = eigendecompose(surface, grid, 10)
        np.testing.assert_allclose(vals[:2], truth_vals, atol=1e-6)
        for k in range(2):
            err = min(
                np.max(np.abs(funs[k] - basis[k])), np.max(np.abs(funs[k] + basis[k]))
            )
            assert err <= 1e-4

    def test_orthonormality(self):
        tm = TrueModel.make(decay_a=3.5)
        values, _ = gen_true_curves(60, tm, substream(13, 0))
        sample = sparsify(values, GRID, "chi2", 0.1, substream(13, 1))
        model = fit_model(sample, GRID, seed=0)
        gram = (model.eigenfunctions * GRID.weights) @ model.eigenfunctions.T
        assert np.max(np.abs(gram - np.eye(model.n_components))) <= 1e-8

    def test_asymmetric_surface_rejected(self):
        surface = np.eye(len(GRID))
        surface[0, 1] = 0.5
        with pytest.raises(CrhdError):
            eigendecompose(surface, GRID, 3)

    def test_retained_spectrum_reconstruction(self):
        tm = TrueModel.make(decay_a=3.5)
        values, _ = gen_true_curves(60, tm, substream(13, 2))
        sample = sparsify(values, GRID, "chi2", 0.1, substream(13, 3))
        model = fit_model(sample, GRID, seed=0)
        sw = np.sqrt(GRID.weights)
        b = sw[:, None] * model.gamma * sw[None, :]
        b = (b + b.T) / 2
        vals, vecs = np.linalg.eigh(b)
        keep = vals > 1e-10 * vals.max()
        psd_part = (vecs[:, keep] * vals[keep]) @ vecs[:, keep].T
        psd_part = psd_part / sw[:, None] / sw[None, :]
        k = model.n_components
        rebuilt = model.eigenfunctions.T @ (model.eigenvalues[:, None] * model.eigenfunctions)
        if k == keep.sum():
            assert np.max(np.abs(psd_part - rebuilt)) <= 1e-8


class TestSelectK:
    def test_examples(self):
        assert select_K_fve(np.array([9.0, 1.0]), 0.85) == 1
        assert select_K_fve(np.array([1.0, 1.0, 1.0, 1.0]), 0.85) == 4
        assert select_K_fve(np.array([5.0, 3.0, 1.0, 1.0]), 0.80) == 2

    def test_threshold_validated(self):
        with pytest.raises(CrhdError):
            select_K_fve(np.array([1.0]), 1.5)

    def test_fve_sequence_monotone_ends_at_one(self):
        tm = TrueModel.make(decay_a=3.5)
        values, _ = gen_true_curves(50, tm, substream(14, 0))
        sample = sparsify(values, GRID, "chi2", 0.1, substream(14, 1))
        model = fit_model(sample, GRID, seed=0)
        assert np.all(np.diff(model.fve) >= 0)
        assert model.fve[-1] == pytest.approx(1.0, abs=1e-12)


class TestFitModelPipeline:
    def test_ordering_invariance_bit_exact(self):
        tm = TrueModel.make(decay_a=3.5)
        values, _ = gen_true_curves(30, tm, substream(15, 0))
        sample = sparsify(values, GRID, "chi2", 0.1, substream(15, 1))
        shuffled = SparseSample(curves=tuple(reversed(sample.curves)))
        m1 = fit_model(sample, GRID, seed=0)
        m2 = fit_model(shuffled, GRID, seed=0)
        np.testing.assert_array_equal(m1.mu, m2.mu)
        np.testing.assert_array_equal(m1.gamma, m2.gamma)
        assert m1.sigma2 == m2.sigma2
        np.testing.assert_array_equal(m1.eigenvalues, m2.eigenvalues)

    def test_eigenvalues_sorted_positive(self):
        tm = TrueModel.make(decay_a=3.5)
        values, _ = gen_true_curves(30, tm, substream(15, 2))
        sample = sparsify(values, GRID, "chi2", 0.1, substream(15, 3))
        model = fit_model(sample, GRID, seed=0)
        assert np.all(model.eigenvalues > 0)
        assert np.all(np.diff(model.eigenvalues) <= 0)
        assert model.sigma2 > 0

    def test_k_max_cap(self):
        tm = TrueModel.make(decay_a=3.5)
        values, _ = gen_true_curves(10, tm, substream(15, 4))
        sample = sparsify(values, GRID, "chi2", 0.1, substream(15, 5))
        model = fit_model(sample, GRID, seed=0)
        assert model.n_components <= min(10, 49, len(GRID) - 1)

    def test_model_from_dense_matches_pointwise_moments(self):
        tm = TrueModel.make(decay_a=5.0)
        values, _ = gen_true_curves(200, tm, substream(15, 6))
        dm = model_from_dense(values, GRID)
        np.testing.assert_allclose(dm.mu, values.mean(axis=0), atol=1e-12)
        rebuilt_total = np.trace((values - dm.mu).T @ (values - dm.mu) / 200)
        assert np.trace(dm.gamma) == pytest.approx(rebuilt_total, rel=1e-10)


class TestFromComponents:
    def test_surface_assembly(self):
        ev = np.array([2.0, 0.5])
        ef = fourier_basis(GRID.points, 2)
        model = FittedModel.from_components(GRID, np.zeros(len(GRID)), ev, ef, 0.1)
        rebuilt = ef.T @ (ev[:, None] * ef)
        np.testing.assert_allclose(model.gamma, rebuilt, atol=0)
        np.testing.assert_allclose(model.mu_scores, 0.0, atol=1e-12)
