"""Deterministic numerical primitives.

Entropies (in nats), the Gaussian CDF, Gauss-Hermite quadrature rules, and
Cholesky factorization with an escalating jitter ladder. Everything here is a
pure function of its inputs and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import ndtr, xlogy

from .exceptions import ConfigError, InvalidDistributionError, SingularMatrixError

__all__ = [
    "QuadratureRule",
    "CholeskyFactor",
    "discrete_entropy",
    "gaussian_entropy",
    "gaussian_cdf",
    "gauss_hermite",
    "expect_gaussian",
    "cholesky",
]

SQRT_PI = math.sqrt(math.pi)

# Jitter ladder for near-singular Gram matrices: start at 1e-10 * mean
# diagonal, escalate x10 per retry, give up past 1e-4 * mean diagonal.
JITTER_START_SCALE = 1e-10
JITTER_CAP_SCALE = 1e-4

MAX_QUADRATURE_ORDER = 100


def discrete_entropy(p) -> float:
    """Entropy -sum(p log p) in nats, with the 0 log 0 = 0 convention.

    Raises InvalidDistributionError for negative entries or when the vector
    does not sum to one within 1e-9.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidDistributionError("expected a nonempty 1-D probability vector")
    if np.any(p < 0):
        raise InvalidDistributionError(f"negative probability entry: min={p.min()}")
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise InvalidDistributionError(f"probabilities sum to {total!r}, not 1")
    return max(0.0, float(-xlogy(p, p).sum()))


def gaussian_entropy(variance: float) -> float:
    """Differential entropy 0.5 log(2 pi e sigma^2) of a Gaussian, in nats."""
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    return 0.5 * math.log(2.0 * math.pi * math.e * variance)


def gaussian_cdf(x):
    """Standard normal CDF (vectorized)."""
    return ndtr(x)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes and weights for weight function exp(-x^2).

    Nodes are symmetric about zero and the weights sum to sqrt(pi).
    """

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.nodes.size


def gauss_hermite(order: int) -> QuadratureRule:
    """Gauss-Hermite rule via Golub-Welsch.

    Eigen-decomposes the symmetric tridiagonal Jacobi matrix of the Hermite
    recurrence; weights come from the first eigenvector components. Exact for
    polynomials up to degree 2*order - 1 under a Gaussian weight.
    """
    if not 1 <= order <= MAX_QUADRATURE_ORDER:
        raise ConfigError(f"quadrature order must be in [1, {MAX_QUADRATURE_ORDER}], got {order}")
    off_diag = np.sqrt(np.arange(1, order) / 2.0)
    jacobi = np.diag(off_diag, 1) + np.diag(off_diag, -1)
    eigvals, eigvecs = np.linalg.eigh(jacobi)
    nodes = eigvals
    weights = SQRT_PI * eigvecs[0, :] ** 2
    # Enforce exact +/- symmetry (kills the asymmetric part of eigh roundoff).
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(nodes=nodes, weights=weights)


def expect_gaussian(f, mu: float, var: float, rule: QuadratureRule) -> float:
    """E[f(Y)] for Y ~ N(mu, var), approximated with a Gauss-Hermite rule.

    Computes (1/sqrt(pi)) * sum_i w_i f(sqrt(2 var) x_i + mu). `f` may be
    vectorized or scalar.
    """
    if var <= 0:
        raise ValueError(f"var must be positive, got {var}")
    points = math.sqrt(2.0 * var) * rule.nodes + mu
    try:
        values = np.asarray(f(points), dtype=float)
        if values.shape != points.shape:
            raise TypeError
    except (TypeError, ValueError):
        values = np.array([float(f(p)) for p in points])
    return float(rule.weights @ values) / SQRT_PI


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L @ L.T = A + jitter * I."""

    lower: np.ndarray
    jitter: float

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def forward(self, b: np.ndarray) -> np.ndarray:
        """Solve L v = b."""
        return solve_triangular(self.lower, b, lower=True)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve (L L^T) v = b."""
        return cho_solve((self.lower, True), b)

    @property
    def log_det(self) -> float:
        """log det(L L^T) = 2 sum log L_ii."""
        return 2.0 * float(np.log(np.diag(self.lower)).sum())


def cholesky(a, jitter: float = 0.0) -> CholeskyFactor:
    """Cholesky factorization of a + jitter * I with escalating-jitter retries.

    If the initial factorization fails, retries with jitter starting at
    1e-10 * mean(diag) and escalating x10 up to 1e-4 * mean(diag), then raises
    SingularMatrixError.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if jitter < 0:
        raise ValueError(f"jitter must be nonnegative, got {jitter}")
    if a.size and not np.allclose(a, a.T, rtol=1e-8, atol=1e-12):
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    if n == 0:
        return CholeskyFactor(lower=np.empty((0, 0)), jitter=jitter)

    mean_diag = float(np.trace(a)) / n
    cap = JITTER_CAP_SCALE * mean_diag
    ladder = [jitter]
    step = JITTER_START_SCALE * mean_diag
    while 0.0 < step <= cap * (1.0 + 1e-12):
        if step > jitter:
            ladder.append(step)
        step *= 10.0

    eye = np.eye(n)
    for amount in ladder:
        try:
            lower = np.linalg.cholesky(a + amount * eye if amount else a)
        except np.linalg.LinAlgError:
            continue
        return CholeskyFactor(lower=lower, jitter=amount)
    raise SingularMatrixError(
        f"matrix is not positive definite, even with jitter up to {cap:.3e}"
    )
