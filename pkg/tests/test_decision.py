import math

import numpy as np
import pytest
from scipy.stats import norm

from decal.decision import (DecisionPosterior, PiConfig, TargetPosterior,
                            bayes_decision, compute_pi_quadrature,
                            decision_entropy, estimate_pi_mc,
                            pi_two_decisions_closed_form)
from decal.exceptions import ConfigError
from decal.mathcore import discrete_entropy, gauss_hermite


def random_target(rng, k):
    return TargetPosterior(rng.uniform(-2, 2, k), rng.uniform(0.05, 3.0, k))


class TestTargetPosterior:
    def test_requires_two_decisions(self):
        with pytest.raises(ValueError):
            TargetPosterior(np.array([1.0]), np.array([1.0]))

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            TargetPosterior(np.array([0.0, 1.0]), np.array([1.0, -0.1]))


class TestBayesDecision:
    def test_argmax_of_means(self):
        assert bayes_decision(TargetPosterior([0.0, 1.0, -1.0], [1.0, 1.0, 1.0])) == 1

    def test_tie_breaks_to_lowest_index(self):
        assert bayes_decision(TargetPosterior([0.5, 0.5], [2.0, 0.1])) == 0

    def test_consistent_with_dominant_pi(self, rng):
        # when one pi dominates and variances are shared, the recommended
        # decision is the pi mode
        for _ in range(50):
            k = int(rng.integers(2, 5))
            t = TargetPosterior(rng.uniform(-2, 2, k), np.full(k, 0.3))
            post = compute_pi_quadrature(t)
            if post.pi.max() >= 0.5:
                assert bayes_decision(t) == int(np.argmax(post.pi))


class TestEstimatePiMc:
    def test_symmetric_pair(self):
        t = TargetPosterior([0.3, 0.3], [0.7, 0.7])
        post = estimate_pi_mc(t, 40_000, seed=5)
        assert abs(post.pi[0] - 0.5) < 3 / math.sqrt(40_000)

    def test_separated_point_masses(self):
        t = TargetPosterior([10.0, 0.0], [1e-6, 1e-6])
        post = estimate_pi_mc(t, 100, seed=0)
        np.testing.assert_array_equal(post.pi, [1.0, 0.0])
        assert post.entropy == 0.0

    def test_matches_closed_form_within_mc_error(self):
        t = TargetPosterior([0.0, 1.0], [1.0, 1.0])
        n = 200_000
        post = estimate_pi_mc(t, n, seed=3)
        want = norm.cdf(1 / math.sqrt(2))
        se = math.sqrt(want * (1 - want) / n)
        assert abs(post.pi[1] - want) < 3 * se

    def test_deterministic_given_seed(self):
        t = TargetPosterior([0.0, 0.5, 1.0], [1.0, 2.0, 0.5])
        a = estimate_pi_mc(t, 1000, seed=42)
        b = estimate_pi_mc(t, 1000, seed=42)
        np.testing.assert_array_equal(a.pi, b.pi)

    def test_zero_variance_ties_break_low(self):
        t = TargetPosterior([1.0, 1.0], [0.0, 0.0])
        post = estimate_pi_mc(t, 50, seed=1)
        np.testing.assert_array_equal(post.pi, [1.0, 0.0])

    def test_metadata(self):
        post = estimate_pi_mc(TargetPosterior([0.0, 1.0], [1.0, 1.0]), 500, seed=0)
        assert post.method == "mc"
        assert post.n_samples == 500


class TestComputePiQuadrature:
    def test_symmetric_pair_exact(self):
        post = compute_pi_quadrature(TargetPosterior([0.3, 0.3], [0.7, 0.7]))
        np.testing.assert_allclose(post.pi, [0.5, 0.5], atol=1e-10)

    def test_two_decision_closed_form(self):
        t = TargetPosterior([0.0, 1.0], [1.0, 1.0])
        post = compute_pi_quadrature(t, gauss_hermite(20))
        want = norm.cdf(-1 / math.sqrt(2))
        assert post.pi[0] == pytest.approx(want, abs=1e-6)
        assert post.pi[1] == pytest.approx(1 - want, abs=1e-6)
        assert pi_two_decisions_closed_form(t) == pytest.approx(want, abs=1e-15)

    def test_closed_form_on_random_pairs(self, rng):
        for _ in range(100):
            t = random_target(rng, 2)
            post = compute_pi_quadrature(t)
            assert post.pi[0] == pytest.approx(
                pi_two_decisions_closed_form(t), abs=1e-6)

    def test_agrees_with_mc_oracle(self, rng):
        for _ in range(25):
            k = int(rng.integers(2, 6))
            t = random_target(rng, k)
            quad = compute_pi_quadrature(t)
            mc = estimate_pi_mc(t, 1_000_000, seed=int(rng.integers(2 ** 31)))
            np.testing.assert_allclose(quad.pi, mc.pi, atol=0.005)

    def test_sums_to_one(self, rng):
        for _ in range(50):
            t = random_target(rng, int(rng.integers(2, 6)))
            assert compute_pi_quadrature(t).pi.sum() == pytest.approx(1.0, abs=1e-12)

    def test_shift_invariance(self, rng):
        for _ in range(20):
            t = random_target(rng, 4)
            shifted = TargetPosterior(t.means + 17.3, t.variances)
            np.testing.assert_allclose(compute_pi_quadrature(t).pi,
                                       compute_pi_quadrature(shifted).pi, atol=1e-10)

    def test_near_point_masses(self):
        post = compute_pi_quadrature(TargetPosterior([3.0, 0.0, 0.0], [0.0, 0.0, 0.0]))
        np.testing.assert_allclose(post.pi, [1.0, 0.0, 0.0], atol=1e-12)

    def test_entropy_field_consistent(self, rng):
        t = random_target(rng, 3)
        post = compute_pi_quadrature(t)
        assert post.entropy == pytest.approx(discrete_entropy(post.pi), abs=1e-12)


class TestDecisionEntropy:
    def test_identical_gaussians_maximal(self):
        t = TargetPosterior(np.zeros(4), np.ones(4))
        assert decision_entropy(t) == pytest.approx(math.log(4), abs=1e-9)

    def test_separated_tiny_variances_zero(self):
        t = TargetPosterior([0.0, 5.0, 10.0], [1e-10, 1e-10, 1e-10])
        assert decision_entropy(t) == pytest.approx(0.0, abs=1e-9)

    def test_closed_form_pair_entropy(self):
        # oracle: -sum(pi log pi) at pi = (Phi(1/sqrt 2), 1 - Phi(1/sqrt 2))
        t = TargetPosterior([1.0, 0.0], [1.0, 1.0])
        assert decision_entropy(t) == pytest.approx(0.5507916573469609, abs=1e-6)

    def test_mc_method_dispatch(self):
        t = TargetPosterior([0.0, 1.0], [1.0, 1.0])
        h = decision_entropy(t, PiConfig(method="mc", n_samples=200_000, seed=1))
        assert h == pytest.approx(decision_entropy(t), abs=0.01)

    def test_shrinking_variances_concentrates(self, rng):
        for _ in range(30):
            k = int(rng.integers(2, 5))
            means = rng.uniform(-2, 2, k)
            while np.unique(means).size < k:
                means = rng.uniform(-2, 2, k)
            var = rng.uniform(0.1, 2.0, k)
            t_wide = TargetPosterior(means, var)
            t_narrow = TargetPosterior(means, 0.25 * var)
            assert decision_entropy(t_narrow) <= decision_entropy(t_wide) + 1e-9

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigError):
            PiConfig(method="bogus")
        with pytest.raises(ConfigError):
            PiConfig(n_samples=0)
