"""Backend equivalence and robustness of the hot kernels.

The numpy path is the reference; when numba is available the compiled path
must agree to tight tolerances. Accuracy is pinned against adaptive
scipy.integrate.quad oracles, including variance-imbalanced configurations
that defeat a plain Gauss-Hermite rule.
"""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtr
from scipy.stats import norm

from decal import _kernels
from decal.mathcore import gauss_hermite

RULE = gauss_hermite(48)


def oracle_pi(mu, sig):
    k_total = len(mu)
    out = np.empty(k_total)
    for k in range(k_total):
        def f(t):
            other = [ndtr((t - mu[j]) / sig[j]) for j in range(k_total) if j != k]
            return norm.pdf(t, mu[k], sig[k]) * np.prod(other)
        lo, hi = mu[k] - 12 * sig[k], mu[k] + 12 * sig[k]
        pts = sorted(p for p in np.concatenate([mu - 3 * sig, mu, mu + 3 * sig])
                     if lo < p < hi)
        out[k], _ = quad(f, lo, hi, points=pts, limit=300,
                         epsabs=1e-14, epsrel=1e-13)
    return out / out.sum()


ADVERSARIAL = [
    (np.array([0.0, 0.2]), np.array([44 * 0.067, 0.067])),
    (np.array([0.0, 0.1, -0.3]), np.array([3.0, 2.9, 0.05])),
    (np.array([0.5, -0.5, 0.0, 0.2, -0.1]), np.array([3.0, 0.05, 1.0, 2.0, 0.07])),
    (np.array([0.0, 0.12, 0.1, -0.3]), np.array([3.0, 2.9, 2.8, 0.05])),
]


class TestPiAccuracy:
    @pytest.mark.parametrize("case", range(len(ADVERSARIAL)))
    def test_adversarial_variance_ratios(self, case):
        mu, var = ADVERSARIAL[case]
        got = _kernels.pi_from_moments(mu, var, RULE.nodes, RULE.weights)
        want = oracle_pi(mu, np.sqrt(var))
        np.testing.assert_allclose(got, want, atol=2e-3)

    def test_fuzz_against_quad_oracle(self, rng):
        for _ in range(40):
            k = int(rng.integers(2, 6))
            mu = rng.uniform(-2, 2, k)
            var = rng.uniform(0.05, 3.0, k)
            got = _kernels.pi_from_moments(mu, var, RULE.nodes, RULE.weights)
            want = oracle_pi(mu, np.sqrt(var))
            np.testing.assert_allclose(got, want, atol=5e-4)

    def test_high_order_remains_stable(self, rng):
        rule = gauss_hermite(100)
        for _ in range(30):
            k = int(rng.integers(2, 6))
            mu = rng.uniform(-2, 2, k)
            var = rng.uniform(0.05, 3.0, k)
            got = _kernels.pi_from_moments(mu, var, rule.nodes, rule.weights)
            want = oracle_pi(mu, np.sqrt(var))
            assert np.all(np.isfinite(got))
            np.testing.assert_allclose(got, want, atol=1e-4)

    def test_k2_matches_closed_form_tightly(self, rng):
        for _ in range(100):
            mu = rng.uniform(-2, 2, 2)
            var = rng.uniform(0.05, 3.0, 2)
            got = _kernels.pi_from_moments(mu, var, RULE.nodes, RULE.weights)
            want = ndtr((mu[0] - mu[1]) / np.sqrt(var.sum()))
            assert got[0] == pytest.approx(want, abs=1e-9)

    def test_variance_floor_handles_point_masses(self):
        pi = _kernels.pi_from_moments(np.array([1.0, 0.0, 2.0]),
                                      np.zeros(3), RULE.nodes, RULE.weights)
        np.testing.assert_allclose(pi, [0.0, 0.0, 1.0], atol=1e-12)


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba unavailable")
class TestBackendAgreement:
    def test_pi_batch(self, rng):
        mu = rng.uniform(-2, 2, (50, 4))
        var = rng.uniform(0.05, 3.0, (50, 4))
        sig = np.sqrt(var)
        a = _kernels.pi_batch_numpy(mu, sig, RULE.nodes, RULE.weights)
        b = _kernels.pi_batch_numba(mu, sig, RULE.nodes, RULE.weights)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_pi_entropy_batch(self, rng):
        mu = rng.uniform(-2, 2, (50, 3))
        sig = np.sqrt(rng.uniform(0.05, 3.0, (50, 3)))
        a = _kernels.pi_entropy_batch_numpy(mu, sig, RULE.nodes, RULE.weights)
        b = _kernels.pi_entropy_batch_numba(mu, sig, RULE.nodes, RULE.weights)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_deig_scores(self, rng):
        k, n_cand, n_fant = 4, 30, 10
        mu0 = rng.uniform(-1, 1, k)
        var0 = rng.uniform(0.1, 2.0, k)
        sig0 = np.sqrt(var0)
        cand_d = rng.integers(0, k, n_cand)
        pred_var = rng.uniform(0.2, 2.0, n_cand)
        cross = rng.uniform(-0.3, 0.3, n_cand) * np.sqrt(pred_var * var0[cand_d])
        pred_mean = rng.uniform(-1, 1, n_cand)
        gain = cross / pred_var
        sig_new = np.sqrt(np.maximum(var0[cand_d] - cross * gain, _kernels.VAR_FLOOR))
        fant = pred_mean[:, None] + np.sqrt(pred_var)[:, None] * rng.standard_normal((n_cand, n_fant))
        w = np.full(n_fant, 1.0 / n_fant)
        a = _kernels.deig_scores_numpy(mu0, sig0, cand_d, gain, pred_mean,
                                       sig_new, fant, w, RULE.nodes, RULE.weights)
        b = _kernels.deig_scores_numba(mu0, sig0, cand_d, gain, pred_mean,
                                       sig_new, fant, w, RULE.nodes, RULE.weights)
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestDispatch:
    def test_backend_reported(self):
        assert _kernels.BACKEND in ("numba", "numpy")
        assert _kernels.USING_NUMBA == (_kernels.BACKEND == "numba")

    def test_env_flag_forces_numpy(self):
        import subprocess
        import sys
        code = ("import decal._kernels as k; "
                "assert k.BACKEND == 'numpy', k.BACKEND; print('ok')")
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"PATH": "/usr/bin:/bin", "DECAL_DISABLE_NUMBA": "1",
                 "HOME": "/root"},
            capture_output=True, text=True)
        assert out.returncode == 0, out.stderr
        assert "ok" in out.stdout
