"""Posterior over the optimal decision at a target point.

Given K independent Gaussian latent posteriors at the target, computes the
probability vector pi that each decision attains the maximum, its entropy,
and the maximum-expected-outcome recommendation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import ConfigError
from .mathcore import QuadratureRule, discrete_entropy, gaussian_cdf, gauss_hermite

__all__ = [
    "TargetPosterior",
    "DecisionPosterior",
    "PiConfig",
    "bayes_decision",
    "estimate_pi_mc",
    "compute_pi_quadrature",
    "decision_entropy",
]

DEFAULT_QUADRATURE_ORDER = 48
DEFAULT_MC_SAMPLES = 100_000


@dataclass(frozen=True)
class TargetPosterior:
    """The K latent posteriors (mean, variance) at one point, one per decision."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        means = np.atleast_1d(np.asarray(self.means, dtype=float))
        variances = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if means.shape != variances.shape or means.ndim != 1:
            raise ValueError("means and variances must be 1-D vectors of equal length")
        if means.size < 2:
            raise ValueError(f"need at least 2 decisions, got {means.size}")
        if np.any(variances < 0):
            raise ValueError("variances must be nonnegative")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_decisions(self) -> int:
        return self.means.size


@dataclass(frozen=True)
class DecisionPosterior:
    """Probability vector over which decision is optimal, plus its entropy."""

    pi: np.ndarray
    entropy: float
    method: str
    n_samples: int | None = None


@dataclass(frozen=True)
class PiConfig:
    """How to estimate pi: 1-D quadrature (default) or Monte Carlo."""

    method: str = "quadrature"
    order: int = DEFAULT_QUADRATURE_ORDER
    n_samples: int = DEFAULT_MC_SAMPLES
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("quadrature", "mc"):
            raise ConfigError(f"unknown pi method {self.method!r}")
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be positive, got {self.n_samples}")


def bayes_decision(target: TargetPosterior) -> int:
    """Index of the decision with the highest posterior expected outcome.

    With identity utility and zero-mean noise this is the argmax of the
    posterior means; ties break to the lowest index.
    """
    return int(np.argmax(target.means))


def estimate_pi_mc(target: TargetPosterior, n_samples: int, seed: int = 0) -> DecisionPosterior:
    """Estimate pi by joint sampling of the K independent posteriors.

    Each sample draws all K latent values; the winning decision is the argmax
    (ties to the lowest index). Deterministic given the seed.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    rng = np.random.default_rng(seed)
    k = target.n_decisions
    draws = target.means + np.sqrt(target.variances) * rng.standard_normal((n_samples, k))
    winners = np.argmax(draws, axis=1)
    pi = np.bincount(winners, minlength=k) / n_samples
    return DecisionPosterior(pi, discrete_entropy(pi), "mc", n_samples)


def compute_pi_quadrature(target: TargetPosterior,
                          rule: QuadratureRule | None = None) -> DecisionPosterior:
    """Compute pi by one Gauss-Hermite integral per decision.

    pi_k = E_{f ~ N(mu_k, var_k)} [ prod_{k' != k} Phi((f - mu_k') / sig_k') ],
    which is exact under model independence up to quadrature error. Each
    integral runs with the rule recentered at its integrand's mode (sharp CDF
    factors are otherwise unresolvable at practical orders), the sharpest
    component is recovered from the complement of the others, variances are
    floored at 1e-12, and the result is normalized to unit sum.
    """
    if rule is None:
        rule = gauss_hermite(DEFAULT_QUADRATURE_ORDER)
    pi = _kernels.pi_from_moments(target.means, target.variances,
                                  rule.nodes, rule.weights)
    return DecisionPosterior(pi, discrete_entropy(pi), "quadrature")


def pi_two_decisions_closed_form(target: TargetPosterior) -> float:
    """Closed-form P(decision 0 wins) for K = 2; used as a cross-check."""
    if target.n_decisions != 2:
        raise ValueError("closed form only exists for K = 2")
    gap = target.means[0] - target.means[1]
    spread = np.sqrt(target.variances.sum())
    return float(gaussian_cdf(gap / spread)) if spread > 0 else float(gap >= 0)


def decision_entropy(target: TargetPosterior, config: PiConfig = PiConfig()) -> float:
    """Entropy (nats) of the optimal-decision posterior, by the configured method."""
    if config.method == "quadrature":
        return compute_pi_quadrature(target, gauss_hermite(config.order)).entropy
    return estimate_pi_mc(target, config.n_samples, config.seed).entropy
