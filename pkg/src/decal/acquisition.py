"""Acquisition strategies over a pool of unlabeled (point, decision) pairs.

The decision-aware criterion scores each candidate by the expected entropy of
the optimal-decision posterior at the target after fantasizing the candidate's
outcome; baselines cover random sampling, predictive-variance (expected
information gain on the queried model), decision-entropy at the candidate's
own location, and information gain targeted at the prediction at the target.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .decision import (DecisionPosterior, PiConfig, TargetPosterior,
                       estimate_pi_mc)
from .exceptions import ConfigError, NoValidCandidateError
from .gp import PRED_VAR_FLOOR, GpModel, TargetView, target_view
from .mathcore import SQRT_PI, discrete_entropy, gauss_hermite
from .seeding import derive_seed, rng_from

__all__ = [
    "STRATEGIES",
    "Candidate",
    "Pool",
    "AcquisitionScores",
    "DEigConfig",
    "score_deig",
    "score_eig_us",
    "select_random",
    "score_dus",
    "score_teig",
    "select",
]

log = logging.getLogger(__name__)

STRATEGIES = ("d-eig", "eig", "random", "d-us", "t-eig")


@dataclass(frozen=True)
class Candidate:
    """One unlabeled query: covariates plus the decision whose outcome it reveals."""

    index: int
    x: np.ndarray
    decision: int
    row: int


@dataclass(frozen=True)
class Pool:
    """Unlabeled candidates; `rows` are stable ids used for per-candidate seeding."""

    X: np.ndarray
    decisions: np.ndarray
    rows: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        decisions = np.asarray(self.decisions, dtype=np.int64)
        rows = np.asarray(self.rows, dtype=np.int64)
        if not (X.shape[0] == decisions.size == rows.size):
            raise ValueError("pool arrays disagree on the number of candidates")
        if decisions.size and decisions.min() < 0:
            raise ValueError("decisions must be nonnegative indices")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "decisions", decisions)
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return self.decisions.size

    def candidate(self, j: int) -> Candidate:
        return Candidate(j, self.X[j], int(self.decisions[j]), int(self.rows[j]))

    def without(self, j: int) -> "Pool":
        keep = np.arange(len(self)) != j
        return Pool(self.X[keep], self.decisions[keep], self.rows[keep])


@dataclass(frozen=True)
class AcquisitionScores:
    """Per-candidate scores plus whether lower or higher is better."""

    values: np.ndarray
    sense: str

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")


@dataclass(frozen=True)
class DEigConfig:
    """Fantasy count and schemes for the decision-aware criterion."""

    n_fantasy: int = 20
    scheme: str = "gauss-hermite"
    pi: PiConfig = field(default_factory=PiConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n_fantasy < 1:
            raise ConfigError(f"n_fantasy must be positive, got {self.n_fantasy}")
        if self.scheme not in ("gauss-hermite", "mc"):
            raise ConfigError(f"unknown fantasy scheme {self.scheme!r}")


def _target_views(models: list[GpModel], pool: Pool, x_target) -> tuple[
        np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Cross terms per candidate under its own model, plus target moments per model."""
    n_models = len(models)
    if pool.decisions.size and pool.decisions.max() >= n_models:
        raise ValueError("pool references a decision with no model")
    size = len(pool)
    mu0 = np.empty(n_models)
    var0 = np.empty(n_models)
    cross = np.empty(size)
    cand_mean = np.empty(size)
    cand_pred_var = np.empty(size)
    for k, model in enumerate(models):
        idx = np.flatnonzero(pool.decisions == k)
        view = target_view(model, x_target, pool.X[idx] if idx.size else
                           np.empty((0, model.kernel.dim)))
        mu0[k] = view.mean
        var0[k] = view.variance
        cross[idx] = view.cross_cov
        cand_mean[idx] = view.cand_mean
        cand_pred_var[idx] = view.cand_pred_var
    return mu0, var0, cross, cand_mean, cand_pred_var


def _fantasy_values(pool: Pool, cand_mean, cand_pred_var, cfg: DEigConfig,
                    step: int) -> tuple[np.ndarray, np.ndarray]:
    """Fantasy outcome matrix (J, N_s) and weights summing to one."""
    size = len(pool)
    if cfg.scheme == "gauss-hermite":
        rule = gauss_hermite(cfg.n_fantasy)
        spread = np.sqrt(2.0 * np.maximum(cand_pred_var, 0.0))
        values = cand_mean[:, None] + spread[:, None] * rule.nodes
        weights = rule.weights / SQRT_PI
    else:
        sd = np.sqrt(np.maximum(cand_pred_var, 0.0))
        values = np.empty((size, cfg.n_fantasy))
        for j in range(size):
            rng = rng_from(cfg.seed, step, int(pool.rows[j]))
            values[j] = cand_mean[j] + sd[j] * rng.standard_normal(cfg.n_fantasy)
        weights = np.full(cfg.n_fantasy, 1.0 / cfg.n_fantasy)
    return values, weights


def _pi_entropy_mc(mu, var, n_samples, seed) -> float:
    post = estimate_pi_mc(TargetPosterior(mu, var), n_samples, seed)
    return post.entropy


def score_deig(models: list[GpModel], pool: Pool, x_target,
               cfg: DEigConfig = DEigConfig(), step: int = 0) -> AcquisitionScores:
    """Expected optimal-decision entropy after one fantasized acquisition (minimize).

    For each candidate, N_s fantasy outcomes are drawn from its predictive
    distribution (Gauss-Hermite nodes or Monte Carlo); each fantasy updates
    only the queried decision's target posterior through the rank-one
    conditioning identity, and the entropies are averaged. Candidates whose
    predictive variance sits at the numerical floor are skipped with +inf.
    """
    if len(pool) == 0:
        raise ValueError("pool is empty")
    mu0, var0, cross, cand_mean, cand_pred_var = _target_views(models, pool, x_target)
    valid = cand_pred_var > PRED_VAR_FLOOR
    n_bad = int((~valid).sum())
    if n_bad:
        log.warning("skipping %d degenerate candidate(s) with predictive "
                    "variance at the floor", n_bad)

    fantasies, fweights = _fantasy_values(pool, cand_mean, cand_pred_var, cfg, step)
    scores = np.full(len(pool), np.inf)
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        return AcquisitionScores(scores, "min")

    if cfg.pi.method == "quadrature":
        rule = gauss_hermite(cfg.pi.order)
        scores[idx] = _kernels.deig_scores(
            mu0, var0, pool.decisions[idx], cross[idx], cand_mean[idx],
            cand_pred_var[idx], fantasies[idx], fweights, rule.nodes, rule.weights)
    else:
        for j in idx:
            d = int(pool.decisions[j])
            gain = cross[j] / cand_pred_var[j]
            var_new = max(var0[d] - cross[j] * gain, 0.0)
            mu_new = mu0.copy()
            var_all = var0.copy()
            var_all[d] = var_new
            total = 0.0
            for l in range(fantasies.shape[1]):
                mu_new[d] = mu0[d] + gain * (fantasies[j, l] - cand_mean[j])
                pi_seed = derive_seed(cfg.seed, step, int(pool.rows[j]), l, "pi")
                total += fweights[l] * _pi_entropy_mc(mu_new, var_all,
                                                      cfg.pi.n_samples, pi_seed)
            scores[j] = total
    return AcquisitionScores(scores, "min")


def information_gain_value(latent_var: float, noise_var: float) -> float:
    """EIG of one observation on its own model: 0.5 (log(s_x^2 + s^2) - log s^2)."""
    return 0.5 * (math.log(latent_var + noise_var) - math.log(noise_var))


def score_eig_us(models: list[GpModel], pool: Pool) -> AcquisitionScores:
    """Expected information gain of each candidate on its own model (maximize).

    Within a model this ranks candidates exactly like the posterior predictive
    variance (uncertainty sampling).
    """
    if len(pool) == 0:
        raise ValueError("pool is empty")
    scores = np.empty(len(pool))
    for k, model in enumerate(models):
        idx = np.flatnonzero(pool.decisions == k)
        if idx.size == 0:
            continue
        _, lat_var = model.posterior_batch(pool.X[idx])
        scores[idx] = 0.5 * (np.log(lat_var + model.noise_variance)
                             - math.log(model.noise_variance))
    return AcquisitionScores(scores, "max")


def select_random(pool: Pool, seed: int) -> int:
    """Uniform candidate draw, deterministic given the seed."""
    if len(pool) == 0:
        raise ValueError("pool is empty")
    return int(np.random.default_rng(seed).integers(len(pool)))


def score_dus(models: list[GpModel], pool: Pool,
              pi: PiConfig = PiConfig(), step: int = 0) -> AcquisitionScores:
    """Entropy of the optimal-decision posterior at each candidate's own location
    (maximize). Candidates sharing a location share a score."""
    if len(pool) == 0:
        raise ValueError("pool is empty")
    size = len(pool)
    mu = np.empty((size, len(models)))
    var = np.empty((size, len(models)))
    for k, model in enumerate(models):
        mu[:, k], var[:, k] = model.posterior_batch(pool.X)
    if pi.method == "quadrature":
        rule = gauss_hermite(pi.order)
        values = _kernels.pi_entropy_batch(mu, var, rule.nodes, rule.weights)
    else:
        values = np.array([
            _pi_entropy_mc(mu[j], var[j], pi.n_samples,
                           derive_seed(pi.seed, step, int(pool.rows[j]), "dus"))
            for j in range(size)
        ])
    return AcquisitionScores(values, "max")


def score_teig(models: list[GpModel], pool: Pool, x_target) -> AcquisitionScores:
    """Expected information gain on the predictive distribution at the target
    under the candidate's model (maximize). Closed form because the variance
    update does not depend on the fantasized outcome."""
    if len(pool) == 0:
        raise ValueError("pool is empty")
    scores = np.zeros(len(pool))
    for k, model in enumerate(models):
        idx = np.flatnonzero(pool.decisions == k)
        if idx.size == 0:
            continue
        view = target_view(model, x_target, pool.X[idx])
        ok = view.cand_pred_var > PRED_VAR_FLOOR
        drop = np.zeros(idx.size)
        drop[ok] = view.cross_cov[ok] ** 2 / view.cand_pred_var[ok]
        before = model.noise_variance + view.variance
        after = model.noise_variance + np.maximum(view.variance - drop, 0.0)
        gains = 0.5 * (np.log(before) - np.log(after))
        gains[~ok] = 0.0
        scores[idx] = gains
    return AcquisitionScores(scores, "max")


def select(scores: AcquisitionScores) -> int:
    """Index of the best finite score (ties break to the lowest index)."""
    values = scores.values
    finite = np.isfinite(values)
    if not finite.any():
        raise NoValidCandidateError("no candidate has a finite score")
    if scores.sense == "min":
        return int(np.argmin(np.where(finite, values, np.inf)))
    return int(np.argmax(np.where(finite, values, -np.inf)))
