"""Hot numerical kernels with a numba fast path and a pure-numpy fallback.

The probability that each decision is optimal requires, per decision k, the
integral of a Gaussian density against a product of Gaussian CDFs. Plain
Gauss-Hermite placed on component k's own scale cannot resolve CDF factors
much sharper than that scale, so each integral is evaluated with the rule
recentered at the mode of the (log-concave) integrand with Laplace-matched
width, and the sharpest component (whose integrand is the worst conditioned)
is recovered through the complement of the others. These integrals run
candidates x fantasies x nodes times per acquisition step and dominate
runtime.

Set DECAL_DISABLE_NUMBA=1 to force the numpy path (also used automatically
when numba is unavailable). `benchmarks/bench_kernels.py` compares the two.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.special import log_ndtr, xlogy

DISABLE_ENV = "DECAL_DISABLE_NUMBA"

VAR_FLOOR = 1e-12

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


def _numba_disabled() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA and not _numba_disabled()
BACKEND = "numba" if USING_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementation
# ---------------------------------------------------------------------------

def _entropy_rows_np(pi: np.ndarray) -> np.ndarray:
    return np.maximum(-xlogy(pi, pi).sum(axis=1), 0.0)


def _mills_np(z: np.ndarray) -> np.ndarray:
    """phi(z)/Phi(z), stable over the whole real line."""
    return np.exp(-0.5 * z * z - log_ndtr(z)) / _SQRT_2PI


def _grad_curv_np(t, mu, sig):
    """Gradient and curvature of log integrand for every (config, component).

    t, mu, sig: (B, K). The integrand for component k is
    N(t; mu_k, sig_k^2) * prod_{j != k} Phi((t - mu_j)/sig_j).
    """
    z = (t[:, :, None] - mu[:, None, :]) / sig[:, None, :]  # (B, K, K)
    r = _mills_np(z)
    rs = r / sig[:, None, :]
    drs = -r * (z + r) / sig[:, None, :] ** 2
    k_idx = np.arange(mu.shape[1])
    own_rs = rs[:, k_idx, k_idx]
    own_drs = drs[:, k_idx, k_idx]
    grad = -(t - mu) / sig ** 2 + rs.sum(axis=2) - own_rs
    curv = -1.0 / sig ** 2 + drs.sum(axis=2) - own_drs
    return grad, curv


def _modes_np(mu, sig, max_iter=60):
    """Mode and Laplace width of each component's integrand (bracketed Newton).

    The gradient is positive for t <= mu_k, so the mode lies in [mu_k, inf);
    the bracket is expanded by doubling, then refined by Newton steps that
    fall back to bisection whenever they leave the bracket.
    """
    lo = mu.copy()
    width = sig.copy()
    hi = lo + width
    for _ in range(200):
        grad, _ = _grad_curv_np(hi, mu, sig)
        open_mask = grad > 0.0
        if not open_mask.any():
            break
        width = np.where(open_mask, width * 2.0, width)
        hi = lo + width

    t = 0.5 * (lo + hi)
    for _ in range(max_iter):
        grad, curv = _grad_curv_np(t, mu, sig)
        lo = np.where(grad > 0.0, t, lo)
        hi = np.where(grad > 0.0, hi, t)
        t_new = t - grad / curv
        outside = (t_new <= lo) | (t_new >= hi)
        t_new = np.where(outside, 0.5 * (lo + hi), t_new)
        if np.all(np.abs(t_new - t) <= 1e-13 * (sig + np.abs(t))):
            t = t_new
            break
        t = t_new
    _, curv = _grad_curv_np(t, mu, sig)
    # Width floor sig/sqrt(2): keeps the integrand-to-proposal ratio inside
    # the Gauss-Hermite convergence class (it may grow at most like
    # exp(x^2/2)), so the rule converges at every order.
    return t, np.maximum(1.0 / np.sqrt(-curv), sig * 0.7071067811865476)


def pi_batch_numpy(mu: np.ndarray, sig: np.ndarray, nodes: np.ndarray,
                   weights: np.ndarray) -> np.ndarray:
    """Optimality probabilities for B independent K-decision configurations."""
    b, k = mu.shape
    t0, s = _modes_np(mu, sig)
    points = t0[:, :, None] + _SQRT2 * s[:, :, None] * nodes  # (B, K, Q)
    zk = (points - mu[:, :, None]) / sig[:, :, None]
    expo = nodes ** 2 - 0.5 * zk * zk
    zall = (points[:, :, :, None] - mu[:, None, None, :]) / sig[:, None, None, :]
    logcdf = log_ndtr(zall)  # (B, K, Q, K')
    k_idx = np.arange(k)
    logcdf[:, k_idx, :, k_idx] = 0.0
    expo = expo + logcdf.sum(axis=3)
    raw = (np.exp(expo) @ weights) * (_INV_SQRT_PI * s / sig)

    # The sharpest component's own integral is the worst conditioned; recover
    # it exactly from the complement of the others.
    other_min = np.empty_like(sig)
    for j in range(k):
        other_min[:, j] = np.delete(sig, j, axis=1).min(axis=1)
    kstar = np.argmax(sig / other_min, axis=1)
    rows = np.arange(b)
    raw[rows, kstar] = 0.0
    raw[rows, kstar] = np.maximum(1.0 - raw.sum(axis=1), 0.0)
    return raw / raw.sum(axis=1, keepdims=True)


def pi_entropy_batch_numpy(mu, sig, nodes, weights) -> np.ndarray:
    return _entropy_rows_np(pi_batch_numpy(mu, sig, nodes, weights))


def deig_scores_numpy(mu0, sig0, cand_d, gain, pred_mean, sig_new,
                      fantasies, fweights, nodes, weights) -> np.ndarray:
    """Expected decision-posterior entropy per candidate (numpy path)."""
    n_cand, n_fant = fantasies.shape
    k = mu0.size
    rows = np.arange(n_cand)
    mu = np.broadcast_to(mu0, (n_cand, n_fant, k)).copy()
    mu[rows, :, cand_d] = mu0[cand_d, None] + gain[:, None] * (fantasies - pred_mean[:, None])
    sig = np.broadcast_to(sig0, (n_cand, k)).copy()
    sig[rows, cand_d] = sig_new
    sig_full = np.broadcast_to(sig[:, None, :], (n_cand, n_fant, k)).reshape(-1, k)
    pi = pi_batch_numpy(mu.reshape(-1, k), sig_full, nodes, weights)
    h = _entropy_rows_np(pi).reshape(n_cand, n_fant)
    return h @ fweights


# ---------------------------------------------------------------------------
# numba fast path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _log_ndtr_nb(z):
        if z > -30.0:
            return math.log(0.5 * math.erfc(-z * 0.7071067811865476))
        zz = z * z
        return (-0.5 * zz - math.log(-z * 2.5066282746310002)
                + math.log1p(-1.0 / zz + 3.0 / (zz * zz)))

    @njit(cache=True)
    def _mills_nb(z):
        if z < -20.0:
            zz = z * z
            return -z / (1.0 - 1.0 / zz + 3.0 / (zz * zz))
        return math.exp(-0.5 * z * z - _log_ndtr_nb(z)) / 2.5066282746310002

    @njit(cache=True)
    def _grad_curv_nb(t, mu, sig, k):
        g = -(t - mu[k]) / (sig[k] * sig[k])
        c = -1.0 / (sig[k] * sig[k])
        for j in range(mu.shape[0]):
            if j == k:
                continue
            z = (t - mu[j]) / sig[j]
            r = _mills_nb(z)
            g += r / sig[j]
            c -= r * (z + r) / (sig[j] * sig[j])
        return g, c

    @njit(cache=True)
    def _component_integral_nb(mu, sig, k, nodes, weights):
        lo = mu[k]
        width = sig[k]
        hi = lo + width
        g, c = _grad_curv_nb(hi, mu, sig, k)
        n_double = 0
        while g > 0.0 and n_double < 200:
            width *= 2.0
            hi = lo + width
            g, c = _grad_curv_nb(hi, mu, sig, k)
            n_double += 1
        t = 0.5 * (lo + hi)
        for _ in range(60):
            g, c = _grad_curv_nb(t, mu, sig, k)
            if g > 0.0:
                lo = t
            else:
                hi = t
            t_new = t - g / c
            if t_new <= lo or t_new >= hi:
                t_new = 0.5 * (lo + hi)
            if abs(t_new - t) <= 1e-13 * (sig[k] + abs(t)):
                t = t_new
                break
            t = t_new
        g, c = _grad_curv_nb(t, mu, sig, k)
        # Width floor sig/sqrt(2): keeps the integrand-to-proposal ratio
        # inside the Gauss-Hermite convergence class.
        s = max(1.0 / math.sqrt(-c), sig[k] * 0.7071067811865476)

        acc = 0.0
        for i in range(nodes.shape[0]):
            p = t + 1.4142135623730951 * s * nodes[i]
            zk = (p - mu[k]) / sig[k]
            expo = nodes[i] * nodes[i] - 0.5 * zk * zk
            for j in range(mu.shape[0]):
                if j != k:
                    expo += _log_ndtr_nb((p - mu[j]) / sig[j])
            acc += weights[i] * math.exp(expo)
        return acc * s / sig[k] * 0.5641895835477563

    @njit(cache=True)
    def _pi_into(mu, sig, nodes, weights, out):
        K = mu.shape[0]
        kstar = 0
        worst = -1.0
        for k in range(K):
            other_min = np.inf
            for j in range(K):
                if j != k and sig[j] < other_min:
                    other_min = sig[j]
            sharp = sig[k] / other_min
            if sharp > worst:
                worst = sharp
                kstar = k
        total = 0.0
        for k in range(K):
            if k == kstar:
                continue
            out[k] = _component_integral_nb(mu, sig, k, nodes, weights)
            total += out[k]
        rest = 1.0 - total
        out[kstar] = rest if rest > 0.0 else 0.0
        total += out[kstar]
        for k in range(K):
            out[k] /= total

    @njit(cache=True)
    def _entropy(p):
        h = 0.0
        for k in range(p.shape[0]):
            if p[k] > 0.0:
                h -= p[k] * math.log(p[k])
        return max(h, 0.0)

    @njit(cache=True)
    def _pi_batch_nb(mu, sig, nodes, weights):
        B, K = mu.shape
        out = np.empty((B, K))
        for b in range(B):
            _pi_into(mu[b], sig[b], nodes, weights, out[b])
        return out

    @njit(cache=True)
    def _pi_entropy_batch_nb(mu, sig, nodes, weights):
        B, K = mu.shape
        h = np.empty(B)
        work = np.empty(K)
        for b in range(B):
            _pi_into(mu[b], sig[b], nodes, weights, work)
            h[b] = _entropy(work)
        return h

    @njit(cache=True)
    def _deig_scores_nb(mu0, sig0, cand_d, gain, pred_mean, sig_new,
                        fantasies, fweights, nodes, weights):
        n_cand, n_fant = fantasies.shape
        K = mu0.shape[0]
        scores = np.empty(n_cand)
        mu_w = np.empty(K)
        sig_w = np.empty(K)
        pi_w = np.empty(K)
        for j in range(n_cand):
            d = cand_d[j]
            for k in range(K):
                mu_w[k] = mu0[k]
                sig_w[k] = sig0[k]
            sig_w[d] = sig_new[j]
            acc = 0.0
            for l in range(n_fant):
                mu_w[d] = mu0[d] + gain[j] * (fantasies[j, l] - pred_mean[j])
                _pi_into(mu_w, sig_w, nodes, weights, pi_w)
                acc += fweights[l] * _entropy(pi_w)
            scores[j] = acc
        return scores

    def pi_batch_numba(mu, sig, nodes, weights):
        return _pi_batch_nb(mu, sig, nodes, weights)

    def pi_entropy_batch_numba(mu, sig, nodes, weights):
        return _pi_entropy_batch_nb(mu, sig, nodes, weights)

    def deig_scores_numba(mu0, sig0, cand_d, gain, pred_mean, sig_new,
                          fantasies, fweights, nodes, weights):
        return _deig_scores_nb(mu0, sig0, cand_d, gain, pred_mean, sig_new,
                               fantasies, fweights, nodes, weights)


# ---------------------------------------------------------------------------
# public wrappers (variance flooring, dtype normalization, dispatch)
# ---------------------------------------------------------------------------

_pi_batch = pi_batch_numba if USING_NUMBA else pi_batch_numpy
_pi_entropy_batch = pi_entropy_batch_numba if USING_NUMBA else pi_entropy_batch_numpy
_deig_scores = deig_scores_numba if USING_NUMBA else deig_scores_numpy


def _as_f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _floored_sig(var) -> np.ndarray:
    return np.sqrt(np.maximum(_as_f64(var), VAR_FLOOR))


def pi_from_moments(mu, var, nodes, weights) -> np.ndarray:
    """Optimality probabilities for one configuration of K posteriors."""
    mu2 = _as_f64(mu)[None, :]
    sig2 = _floored_sig(var)[None, :]
    return _pi_batch(mu2, sig2, _as_f64(nodes), _as_f64(weights))[0]


def pi_entropy_batch(mu, var, nodes, weights) -> np.ndarray:
    """Decision-posterior entropy for a batch of configurations."""
    return _pi_entropy_batch(_as_f64(mu), _floored_sig(var),
                             _as_f64(nodes), _as_f64(weights))


def deig_scores(mu0, var0, cand_d, cross_cov, pred_mean, pred_var,
                fantasies, fweights, nodes, weights) -> np.ndarray:
    """Expected decision-posterior entropy after one fantasized observation.

    For candidate j with decision d: the target posterior of decision d is
    conditioned on each fantasy outcome (mean shift gain*(y - m_j), variance
    drop c^2/v_j), the decision-posterior entropy is recomputed, and the
    weighted average over fantasies is returned. All candidates must have
    pred_var above VAR_FLOOR.
    """
    mu0 = _as_f64(mu0)
    var0 = _as_f64(var0)
    cand_d = np.ascontiguousarray(cand_d, dtype=np.int64)
    cross_cov = _as_f64(cross_cov)
    pred_var = _as_f64(pred_var)
    gain = cross_cov / pred_var
    var_new = np.maximum(var0[cand_d] - cross_cov * gain, VAR_FLOOR)
    return _deig_scores(mu0, _floored_sig(var0), cand_d, gain,
                        _as_f64(pred_mean), np.sqrt(var_new),
                        _as_f64(fantasies), _as_f64(fweights),
                        _as_f64(nodes), _as_f64(weights))


def warmup() -> None:
    """Trigger JIT compilation of the hot kernels on a tiny problem."""
    nodes = np.array([-1.0, 0.0, 1.0])
    weights = np.array([0.2954089751509193, 1.1816359006036774, 0.2954089751509193])
    mu = np.array([0.0, 1.0])
    var = np.array([1.0, 1.0])
    pi_from_moments(mu, var, nodes, weights)
    pi_entropy_batch(mu[None, :], var[None, :], nodes, weights)
    deig_scores(mu, var, np.array([0]), np.array([0.1]), np.array([0.0]),
                np.array([1.1]), np.array([[0.5, -0.5]]), np.array([0.5, 0.5]),
                nodes, weights)
