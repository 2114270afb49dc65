import math

import numpy as np
import pytest

from conftest import gp_draw
from decal import gp
from decal.exceptions import DegenerateCandidateError
from decal.mathcore import cholesky


def dense_oracle(kernel, noise_var, X, y, Xq):
    """Posterior moments via an independent dense solve (no Cholesky reuse)."""
    ky = kernel.gram(X) + noise_var * np.eye(len(y))
    ks = kernel.gram(X, Xq)
    mu = ks.T @ np.linalg.solve(ky, y)
    var = kernel.signal_variance - np.einsum("ij,ji->i", ks.T, np.linalg.solve(ky, ks))
    return mu, var


class TestKernel:
    def test_zero_distance_gives_signal_variance(self, rng):
        kern = gp.ArdSeKernel(1.7, np.array([0.5, 2.0]))
        x = rng.standard_normal(2)
        assert kern.value(x, x) == pytest.approx(1.7, abs=0.0)

    def test_formula(self):
        kern = gp.ArdSeKernel(1.0, np.array([1.0, 1.0]))
        assert kern.value([0.0, 0.0], [1.0, 1.0]) == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_flat_limit(self):
        kern = gp.ArdSeKernel(2.5, np.array([1e9, 1e9]))
        assert kern.value([10.0, -3.0], [-7.0, 40.0]) == pytest.approx(2.5, rel=1e-12)

    def test_dimension_mismatch(self):
        kern = gp.ArdSeKernel(1.0, np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            kern.value([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            kern.gram(np.zeros((3, 5)))

    def test_gram_symmetric_psd(self, rng):
        kern = gp.ArdSeKernel(1.3, np.array([0.7, 1.1, 2.0]))
        X = rng.standard_normal((40, 3))
        gram = kern.gram(X)
        np.testing.assert_array_equal(gram, gram.T)
        np.testing.assert_allclose(np.diag(gram), 1.3)
        cholesky(gram)  # PSD up to jitter

    def test_invalid_hyperparameters(self):
        with pytest.raises(ValueError):
            gp.ArdSeKernel(-1.0, np.array([1.0]))
        with pytest.raises(ValueError):
            gp.ArdSeKernel(1.0, np.array([1.0, 0.0]))


class TestFitAndPosterior:
    def test_empty_model_is_prior(self):
        kern = gp.ArdSeKernel(1.0, np.array([1.0, 1.0]))
        model = gp.fit(np.empty((0, 2)), np.empty(0), kern, 0.5)
        post = model.posterior_at([0.3, -0.4])
        assert post.mean == 0.0
        assert post.variance == pytest.approx(1.0, abs=0.0)
        assert model.predictive_at([0.3, -0.4]) == pytest.approx((0.0, 1.5))

    def test_single_point_posterior_mean(self):
        kern = gp.ArdSeKernel(1.0, np.array([1.0]))
        model = gp.fit(np.array([[0.2]]), np.array([2.0]), kern, 0.1)
        post = model.posterior_at([0.2])
        assert post.mean == pytest.approx(2.0 / 1.1, rel=1e-12)

    def test_noiseless_interpolation_limit(self, rng):
        kern = gp.ArdSeKernel(1.0, np.array([1.0, 1.0]))
        X = rng.standard_normal((8, 2))
        y = rng.standard_normal(8)
        model = gp.fit(X, y, kern, 1e-10)
        for i in range(8):
            assert model.posterior_at(X[i]).mean == pytest.approx(y[i], abs=1e-5)

    @pytest.mark.parametrize("n", [5, 30, 120])
    def test_matches_dense_oracle(self, n, rng):
        kern = gp.ArdSeKernel(1.4, np.exp(rng.uniform(-0.5, 0.5, 3)))
        X = rng.standard_normal((n, 3))
        _, y = gp_draw(rng, kern, X, 0.2)
        model = gp.fit(X, y, kern, 0.2)
        Xq = rng.standard_normal((5, 3))
        mu, var = model.posterior_batch(Xq)
        mu_o, var_o = dense_oracle(kern, 0.2, X, y, Xq)
        np.testing.assert_allclose(mu, mu_o, atol=1e-8)
        np.testing.assert_allclose(var, var_o, atol=1e-8)
        for i in range(5):
            mean_p, var_p = model.predictive_at(Xq[i])
            assert mean_p == pytest.approx(mu_o[i], abs=1e-8)
            assert var_p == pytest.approx(var_o[i] + 0.2, abs=1e-8)

    def test_posterior_variance_below_prior(self, rng):
        kern = gp.ArdSeKernel(2.0, np.array([1.0, 1.0]))
        X = rng.standard_normal((50, 2))
        _, y = gp_draw(rng, kern, X, 0.1)
        model = gp.fit(X, y, kern, 0.1)
        _, var = model.posterior_batch(rng.standard_normal((100, 2)))
        assert np.all(var <= 2.0 + 1e-8)
        assert np.all(var >= 0.0)

    def test_shape_mismatch_rejected(self):
        kern = gp.ArdSeKernel(1.0, np.array([1.0]))
        with pytest.raises(ValueError):
            gp.fit(np.zeros((3, 1)), np.zeros(4), kern, 0.1)


class TestLogMarginalLikelihood:
    def test_single_zero_observation(self):
        # gram + noise = c: lml = -0.5 log(2 pi c)
        kern = gp.ArdSeKernel(1.0, np.array([1.0]))
        model = gp.fit(np.array([[0.0]]), np.array([0.0]), kern, 0.1)
        assert model.log_marginal_likelihood() == pytest.approx(
            -0.5 * math.log(2 * math.pi * 1.1), rel=1e-12)

    def test_single_observation_logpdf(self):
        # oracle: scipy.stats.norm.logpdf(2, 0, sqrt(1.1)) = -2.784775441288653
        kern = gp.ArdSeKernel(1.0, np.array([1.0]))
        model = gp.fit(np.array([[0.0]]), np.array([2.0]), kern, 0.1)
        assert model.log_marginal_likelihood() == pytest.approx(
            -2.784775441288653, abs=1e-10)

    def test_matches_dense_gaussian_logdensity(self, rng):
        kern = gp.ArdSeKernel(0.8, np.exp(rng.uniform(-0.3, 0.3, 2)))
        X = rng.standard_normal((20, 2))
        _, y = gp_draw(rng, kern, X, 0.15)
        model = gp.fit(X, y, kern, 0.15)
        ky = kern.gram(X) + 0.15 * np.eye(20)
        sign, logdet = np.linalg.slogdet(ky)
        oracle = -0.5 * (y @ np.linalg.solve(ky, y) + logdet + 20 * math.log(2 * math.pi))
        assert model.log_marginal_likelihood() == pytest.approx(oracle, abs=1e-8)

    def test_permutation_invariance(self, rng):
        kern = gp.ArdSeKernel(1.0, np.array([1.0, 1.0]))
        X = rng.standard_normal((15, 2))
        _, y = gp_draw(rng, kern, X, 0.1)
        base = gp.fit(X, y, kern, 0.1).log_marginal_likelihood()
        perm = rng.permutation(15)
        shuffled = gp.fit(X[perm], y[perm], kern, 0.1).log_marginal_likelihood()
        assert shuffled == pytest.approx(base, abs=1e-9)

    def test_empty_model_rejected(self):
        kern = gp.ArdSeKernel(1.0, np.array([1.0]))
        model = gp.fit(np.empty((0, 1)), np.empty(0), kern, 0.1)
        with pytest.raises(ValueError):
            model.log_marginal_likelihood()


class TestOptimizeHyperparameters:
    def test_recovers_generating_hyperparameters(self):
        rng = np.random.default_rng(7)
        kern = gp.ArdSeKernel(1.0, np.array([1.0, 1.0]))
        X = rng.standard_normal((150, 2))
        _, y = gp_draw(rng, kern, X, 0.01)
        model = gp.optimize_hyperparameters(X, y, restarts=5, seed=1)
        assert abs(math.log(model.kernel.signal_variance)) < 0.7
        assert np.all(np.abs(np.log(model.kernel.lengthscales)) < 0.7)
        assert abs(math.log(model.noise_variance) - math.log(0.01)) < 0.7

    def test_objective_dominates_truth(self):
        rng = np.random.default_rng(11)
        kern = gp.ArdSeKernel(1.0, np.array([1.0, 1.0]))
        X = rng.standard_normal((60, 2))
        _, y = gp_draw(rng, kern, X, 0.05)
        fitted = gp.optimize_hyperparameters(X, y, restarts=5, seed=2)
        truth = gp.fit(X, y, kern, 0.05)
        assert gp.hyper_objective(fitted) >= gp.hyper_objective(truth) - 1e-6

    def test_unpenalized_lml_dominates_truth(self):
        rng = np.random.default_rng(12)
        kern = gp.ArdSeKernel(1.0, np.array([1.0, 1.0]))
        X = rng.standard_normal((60, 2))
        _, y = gp_draw(rng, kern, X, 0.05)
        fitted = gp.optimize_hyperparameters(X, y, restarts=5, seed=2, prior_width=None)
        truth = gp.fit(X, y, kern, 0.05)
        assert (fitted.log_marginal_likelihood()
                >= truth.log_marginal_likelihood() - 1e-6)

    def test_more_restarts_never_hurt(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((25, 2))
        y = rng.standard_normal(25)
        one = gp.optimize_hyperparameters(X, y, restarts=1, seed=9)
        five = gp.optimize_hyperparameters(X, y, restarts=5, seed=9)
        assert gp.hyper_objective(five) >= gp.hyper_objective(one) - 1e-9

    def test_deterministic_given_seed(self, rng):
        X = rng.standard_normal((20, 2))
        y = rng.standard_normal(20)
        a = gp.optimize_hyperparameters(X, y, restarts=3, seed=5)
        b = gp.optimize_hyperparameters(X, y, restarts=3, seed=5)
        assert a.kernel.signal_variance == b.kernel.signal_variance
        np.testing.assert_array_equal(a.kernel.lengthscales, b.kernel.lengthscales)
        assert a.noise_variance == b.noise_variance

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            gp.optimize_hyperparameters(np.zeros((1, 2)), np.zeros(1))


class TestFantasyUpdates:
    @pytest.fixture
    def setup(self, rng):
        kern = gp.ArdSeKernel(1.2, np.exp(rng.uniform(-0.4, 0.4, 2)))
        X = rng.standard_normal((30, 2))
        _, y = gp_draw(rng, kern, X, 0.1)
        model = gp.fit(X, y, kern, 0.1)
        x_target = rng.standard_normal(2)
        X_cand = rng.standard_normal((10, 2))
        return model, x_target, X_cand

    def test_matches_full_refit(self, setup, rng):
        model, x_target, X_cand = setup
        view = gp.target_view(model, x_target, X_cand)
        for j in range(10):
            for y_fake in rng.normal(size=5):
                fast = gp.fantasy_posterior_at(view, j, y_fake)
                slow = gp.with_observation(model, X_cand[j], y_fake).posterior_at(x_target)
                assert fast.mean == pytest.approx(slow.mean, abs=1e-8)
                assert fast.variance == pytest.approx(slow.variance, abs=1e-8)

    def test_zero_cross_covariance_is_noop(self, setup):
        model, x_target, _ = setup
        far = x_target + 1e4  # kernel underflows to exactly zero
        view = gp.target_view(model, x_target, far[None, :])
        assert view.cross_cov[0] == 0.0
        updated = gp.fantasy_posterior_at(view, 0, 123.0)
        assert updated.mean == view.mean
        assert updated.variance == view.variance

    def test_observation_at_target_matches_conjugate_update(self, setup):
        model, x_target, _ = setup
        view = gp.target_view(model, x_target, x_target[None, :])
        var_t = view.variance
        noise = model.noise_variance
        updated = gp.fantasy_posterior_at(view, 0, 0.7)
        assert updated.variance == pytest.approx(
            var_t - var_t ** 2 / (var_t + noise), rel=1e-10)

    def test_variance_never_increases(self, setup, rng):
        model, x_target, X_cand = setup
        view = gp.target_view(model, x_target, X_cand)
        for j in range(10):
            updated = gp.fantasy_posterior_at(view, j, float(rng.normal()))
            assert updated.variance <= view.variance + 1e-10

    def test_mean_linear_variance_constant_in_y(self, setup):
        model, x_target, X_cand = setup
        view = gp.target_view(model, x_target, X_cand)
        j = 3
        p0 = gp.fantasy_posterior_at(view, j, 0.0)
        p1 = gp.fantasy_posterior_at(view, j, 1.0)
        p2 = gp.fantasy_posterior_at(view, j, 2.0)
        slope = view.cross_cov[j] / view.cand_pred_var[j]
        assert p1.mean - p0.mean == pytest.approx(slope, rel=1e-10)
        assert p2.mean - p1.mean == pytest.approx(slope, rel=1e-10)
        assert p0.variance == p1.variance == p2.variance

    def test_degenerate_candidate_rejected(self, setup):
        model, x_target, X_cand = setup
        view = gp.target_view(model, x_target, X_cand)
        broken = gp.TargetView(view.mean, view.variance, view.cross_cov,
                               view.cand_mean, np.zeros_like(view.cand_pred_var))
        with pytest.raises(DegenerateCandidateError):
            gp.fantasy_posterior_at(broken, 0, 0.0)

    def test_empty_model_view(self):
        kern = gp.ArdSeKernel(1.0, np.array([1.0]))
        model = gp.fit(np.empty((0, 1)), np.empty(0), kern, 0.2)
        view = gp.target_view(model, [0.0], np.array([[0.5]]))
        assert view.variance == pytest.approx(1.0)
        assert view.cand_pred_var[0] == pytest.approx(1.2)
        assert view.cross_cov[0] == pytest.approx(kern.value([0.0], [0.5]))
