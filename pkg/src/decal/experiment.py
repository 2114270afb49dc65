"""Replication harness: synthetic data, splits, acquisition loop, aggregation.

A study draws one dataset, splits it M times into train / pool / single
target, runs every strategy from identical starting conditions per split, and
aggregates the decision-accuracy and decision-entropy metrics across splits.
All randomness derives from labeled seeds, so studies are reproducible and
independent of worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import acquisition, gp
from .acquisition import AcquisitionScores, DEigConfig, Pool
from .decision import PiConfig, TargetPosterior, decision_entropy, bayes_decision
from .exceptions import DecalError
from .mathcore import cholesky
from .seeding import derive_seed, rng_from

__all__ = [
    "SyntheticConfig",
    "PotentialOutcomesDataset",
    "SplitSpec",
    "Split",
    "GpConfig",
    "MetricTrace",
    "AggregateRow",
    "StudyResult",
    "generate_synthetic",
    "split_dataset",
    "run_replication",
    "run_study",
    "aggregate_traces",
]


@dataclass(frozen=True)
class SyntheticConfig:
    """Geometry and generative settings for the fully synthetic benchmark."""

    n_points: int = 400
    dim: int = 5
    n_decisions: int = 4
    signal_variances: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    lengthscale_range: tuple[float, float] = (0.5, 2.0)
    noise_to_signal: float = 0.1
    assignment_weights: tuple[float, ...] = (0.4, 0.3, 0.2, 0.1)

    def __post_init__(self):
        k = self.n_decisions
        if k < 2:
            raise ValueError(f"need at least 2 decisions, got {k}")
        if self.n_points < k:
            raise ValueError("n_points must be at least n_decisions")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if len(self.signal_variances) != k or any(v <= 0 for v in self.signal_variances):
            raise ValueError("signal_variances must hold one positive value per decision")
        w = np.asarray(self.assignment_weights, dtype=float)
        if w.size != k or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("assignment weights must be positive and sum to 1")
        if np.allclose(w, w[0]):
            raise ValueError("assignment weights must be non-uniform")
        if self.noise_to_signal <= 0:
            raise ValueError("noise_to_signal must be positive")

    @classmethod
    def with_geometry(cls, n_points: int, dim: int, n_decisions: int) -> "SyntheticConfig":
        """Default generative settings stretched to an arbitrary decision count."""
        k = n_decisions
        sv = tuple(np.linspace(0.5, 2.0, k)) if k != 4 else (0.5, 1.0, 1.5, 2.0)
        raw = np.arange(k, 0, -1, dtype=float)
        weights = tuple(raw / raw.sum())
        return cls(n_points=n_points, dim=dim, n_decisions=k,
                   signal_variances=sv, assignment_weights=weights)

    def noise_variances(self) -> np.ndarray:
        return self.noise_to_signal * np.asarray(self.signal_variances)


@dataclass(frozen=True)
class PotentialOutcomesDataset:
    """Covariates with true and noisy outcomes for every decision.

    Only `y_obs[i, assigned[i]]` is ever revealed to a strategy; the full
    tables exist for evaluation (ground-truth best decision) and for revealing
    pool queries.
    """

    X: np.ndarray
    y_true: np.ndarray
    y_obs: np.ndarray
    assigned: np.ndarray
    provenance: str = "synthetic"

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y_true = np.asarray(self.y_true, dtype=float)
        y_obs = np.asarray(self.y_obs, dtype=float)
        assigned = np.asarray(self.assigned, dtype=np.int64)
        n, _ = X.shape
        if y_true.shape != y_obs.shape or y_true.ndim != 2 or y_true.shape[0] != n:
            raise ValueError("outcome tables must both be (n_points, n_decisions)")
        k = y_true.shape[1]
        if k < 2:
            raise ValueError(f"need at least 2 decisions, got {k}")
        if n < k:
            raise ValueError("need at least as many points as decisions")
        if assigned.shape != (n,) or assigned.min() < 0 or assigned.max() >= k:
            raise ValueError("assigned decisions out of range")
        for name, arr in (("X", X), ("y_true", y_true), ("y_obs", y_obs)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "assigned", assigned)

    @property
    def n_points(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_decisions(self) -> int:
        return self.y_true.shape[1]

    @property
    def y_observed(self) -> np.ndarray:
        return self.y_obs[np.arange(self.n_points), self.assigned]


def generate_synthetic(cfg: SyntheticConfig, seed: int = 0) -> PotentialOutcomesDataset:
    """Draw covariates, one GP realization per decision, noise, and assignments."""
    rng = np.random.default_rng(seed)
    n, p, k = cfg.n_points, cfg.dim, cfg.n_decisions
    X = rng.standard_normal((n, p))
    y_true = np.empty((n, k))
    y_obs = np.empty((n, k))
    noise = cfg.noise_variances()
    lo, hi = np.log(cfg.lengthscale_range[0]), np.log(cfg.lengthscale_range[1])
    for d in range(k):
        lengthscales = np.exp(rng.uniform(lo, hi, size=p))
        kernel = gp.ArdSeKernel(cfg.signal_variances[d], lengthscales)
        factor = cholesky(kernel.gram(X))
        y_true[:, d] = factor.lower @ rng.standard_normal(n)
        y_obs[:, d] = y_true[:, d] + np.sqrt(noise[d]) * rng.standard_normal(n)
    assigned = rng.choice(k, size=n, p=np.asarray(cfg.assignment_weights))
    return PotentialOutcomesDataset(X, y_true, y_obs, assigned, "synthetic")


@dataclass(frozen=True)
class SplitSpec:
    """Training size and the replication seed driving the split (and everything
    downstream in that replication)."""

    n_train: int
    seed: int

    def __post_init__(self):
        if self.n_train < 1:
            raise ValueError(f"n_train must be positive, got {self.n_train}")


@dataclass(frozen=True)
class Split:
    """Disjoint exhaustive partition: train rows, pool rows, one target row."""

    train: np.ndarray
    pool: np.ndarray
    target: int
    d_star: int


def split_dataset(ds: PotentialOutcomesDataset, spec: SplitSpec) -> Split:
    """Random train / pool / single-target split; the ground-truth best decision
    is the argmax of the target's true-outcome row (ties to the lowest index)."""
    if spec.n_train >= ds.n_points - 1:
        raise ValueError(
            f"n_train={spec.n_train} leaves no pool for {ds.n_points} points")
    perm = rng_from(spec.seed, "split").permutation(ds.n_points)
    target = int(perm[spec.n_train])
    return Split(
        train=perm[:spec.n_train],
        pool=perm[spec.n_train + 1:],
        target=target,
        d_star=int(np.argmax(ds.y_true[target])),
    )


@dataclass(frozen=True)
class GpConfig:
    """Model-fitting policy for the acquisition loop."""

    restarts: int = 5
    refit_each_step: bool = True
    prior_width: float | None = gp.DEFAULT_PRIOR_WIDTH


@dataclass
class MetricTrace:
    """Per-step records of one replication: step 0 precedes any acquisition."""

    accuracy: np.ndarray
    entropy: np.ndarray
    selected_rows: list[int]
    selected_decisions: list[int]
    seconds: np.ndarray
    truncated: bool = False

    @property
    def n_steps(self) -> int:
        return self.accuracy.size - 1


def _standardizer(ds: PotentialOutcomesDataset, train_rows: np.ndarray):
    """Per-column affine map from train statistics (external data only)."""
    if ds.provenance != "external":
        return lambda x: x
    mean = ds.X[train_rows].mean(axis=0)
    std = ds.X[train_rows].std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return lambda x: (x - mean) / std


def _fit_decision_model(X, y, gp_cfg: GpConfig, seed: int, dim: int) -> gp.GpModel:
    """Optimize hyperparameters when possible; tiny datasets use defaults."""
    if y.size >= 2:
        return gp.optimize_hyperparameters(X, y, restarts=gp_cfg.restarts,
                                           seed=seed, prior_width=gp_cfg.prior_width)
    return gp.fit(X.reshape(-1, dim), y, gp.default_kernel(dim),
                  gp.DEFAULT_NOISE_VARIANCE)


def fit_initial_models(ds: PotentialOutcomesDataset, split: Split,
                       gp_cfg: GpConfig, seed: int) -> list[gp.GpModel]:
    """Fit the K decision models on the training triplets."""
    scale = _standardizer(ds, split.train)
    X_train = scale(ds.X[split.train])
    d_train = ds.assigned[split.train]
    y_train = ds.y_observed[split.train]
    models = []
    for k in range(ds.n_decisions):
        mask = d_train == k
        models.append(_fit_decision_model(
            X_train[mask], y_train[mask], gp_cfg,
            derive_seed(seed, "fit0", k), ds.dim))
    return models


def _target_posterior(models: list[gp.GpModel], x_target) -> TargetPosterior:
    posts = [m.posterior_at(x_target) for m in models]
    return TargetPosterior(np.array([p.mean for p in posts]),
                           np.array([p.variance for p in posts]))


def _choose(strategy: str, models, pool, x_target, step: int, seed: int,
            deig_cfg: DEigConfig, pi_cfg: PiConfig) -> int:
    if strategy == "random":
        return acquisition.select_random(pool, derive_seed(seed, step, "rs"))
    if strategy == "d-eig":
        scores = acquisition.score_deig(models, pool, x_target,
                                        replace(deig_cfg, seed=seed), step)
    elif strategy == "eig":
        scores = acquisition.score_eig_us(models, pool)
    elif strategy == "d-us":
        scores = acquisition.score_dus(models, pool, replace(pi_cfg, seed=seed), step)
    elif strategy == "t-eig":
        scores = acquisition.score_teig(models, pool, x_target)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return acquisition.select(scores)


def run_replication(ds: PotentialOutcomesDataset, spec: SplitSpec, strategy: str,
                    n_acq: int, gp_cfg: GpConfig = GpConfig(),
                    deig_cfg: DEigConfig = DEigConfig(),
                    pi_cfg: PiConfig = PiConfig(),
                    initial_models: list[gp.GpModel] | None = None,
                    split: Split | None = None) -> MetricTrace:
    """One replication: fit, record step-0 metrics, acquire n_acq points.

    Each acquisition reveals the selected candidate's observed outcome for its
    own decision, appends it to that decision's training data, refits that
    model, and re-records the metrics. Strategies never see the counterfactual
    outcome columns.
    """
    if strategy not in acquisition.STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if split is None:
        split = split_dataset(ds, spec)
    scale = _standardizer(ds, split.train)
    x_target = scale(ds.X[split.target])
    pool = Pool(scale(ds.X[split.pool]), ds.assigned[split.pool], split.pool)
    if len(pool) < n_acq:
        raise ValueError(f"pool of {len(pool)} cannot supply {n_acq} acquisitions")
    models = list(initial_models) if initial_models is not None else \
        fit_initial_models(ds, split, gp_cfg, spec.seed)

    accuracy = np.zeros(n_acq + 1, dtype=np.int64)
    entropy = np.zeros(n_acq + 1)
    seconds = np.zeros(n_acq + 1)
    selected_rows: list[int] = []
    selected_decisions: list[int] = []

    def record(step: int, started: float) -> None:
        target = _target_posterior(models, x_target)
        accuracy[step] = int(bayes_decision(target) == split.d_star)
        entropy[step] = decision_entropy(target, _step_pi(pi_cfg, spec.seed, strategy, step))
        seconds[step] = time.perf_counter() - started

    started = time.perf_counter()
    record(0, started)
    truncated = False
    for step in range(1, n_acq + 1):
        started = time.perf_counter()
        if len(pool) == 0:
            truncated = True
            break
        acq_seed = derive_seed(spec.seed, strategy, "acq")
        j = _choose(strategy, models, pool, x_target, step, acq_seed,
                    deig_cfg, pi_cfg)
        cand = pool.candidate(j)
        y_new = float(ds.y_obs[cand.row, cand.decision])
        model = models[cand.decision]
        if gp_cfg.refit_each_step and model.n + 1 >= 2:
            X_new = np.vstack([model.X, cand.x[None, :]]) if model.n else cand.x[None, :]
            models[cand.decision] = gp.optimize_hyperparameters(
                X_new, np.append(model.y, y_new), restarts=gp_cfg.restarts,
                seed=derive_seed(spec.seed, strategy, "refit", step, cand.decision),
                prior_width=gp_cfg.prior_width)
        else:
            models[cand.decision] = gp.with_observation(model, cand.x, y_new)
        pool = pool.without(j)
        selected_rows.append(cand.row)
        selected_decisions.append(cand.decision)
        record(step, started)

    if truncated:
        done = len(selected_rows) + 1
        accuracy, entropy, seconds = accuracy[:done], entropy[:done], seconds[:done]
    return MetricTrace(accuracy, entropy, selected_rows, selected_decisions,
                       seconds, truncated)


def _step_pi(pi_cfg: PiConfig, rep_seed: int, strategy: str, step: int) -> PiConfig:
    if pi_cfg.method == "quadrature":
        return pi_cfg
    return replace(pi_cfg, seed=derive_seed(rep_seed, strategy, "metrics", step))


# ---------------------------------------------------------------------------
# Studies: many replications, several strategies, shared splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AggregateRow:
    strategy: str
    step: int
    mean_accuracy: float
    sem_accuracy: float
    mean_entropy: float
    sem_entropy: float
    n_ok: int
    n_failed: int


@dataclass
class StudyResult:
    rows: list[AggregateRow]
    traces: dict[str, list[MetricTrace | None]]
    strategies: tuple[str, ...]
    n_acq: int
    replications: int


def _sem(values: np.ndarray) -> float:
    if values.size <= 1:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(values.size))


def aggregate_traces(traces: dict[str, list[MetricTrace | None]],
                     n_acq: int) -> list[AggregateRow]:
    """Per-strategy, per-step mean and SEM of the accuracy and entropy metrics.

    Missing (failed) replications are excluded and counted; truncated traces
    contribute only the steps they reached.
    """
    rows = []
    for strategy, trace_list in traces.items():
        total = len(trace_list)
        for step in range(n_acq + 1):
            acc = np.array([t.accuracy[step] for t in trace_list
                            if t is not None and t.accuracy.size > step], dtype=float)
            ent = np.array([t.entropy[step] for t in trace_list
                            if t is not None and t.entropy.size > step])
            n_ok = acc.size
            rows.append(AggregateRow(
                strategy=strategy, step=step,
                mean_accuracy=float(acc.mean()) if n_ok else float("nan"),
                sem_accuracy=_sem(acc),
                mean_entropy=float(ent.mean()) if n_ok else float("nan"),
                sem_entropy=_sem(ent),
                n_ok=n_ok, n_failed=total - n_ok))
    return rows


def _replication_task(args) -> tuple[int, dict[str, MetricTrace | None], list[str]]:
    (ds, m, strategies, n_acq, n_train, base_seed, gp_cfg, deig_cfg, pi_cfg) = args
    spec = SplitSpec(n_train, derive_seed(base_seed, "replication", m))
    errors: list[str] = []
    out: dict[str, MetricTrace | None] = {s: None for s in strategies}
    try:
        split = split_dataset(ds, spec)
        models = fit_initial_models(ds, split, gp_cfg, spec.seed)
    except DecalError as exc:
        errors.append(f"replication {m}: initial fit failed: {exc}")
        return m, out, errors
    for strategy in strategies:
        try:
            out[strategy] = run_replication(
                ds, spec, strategy, n_acq, gp_cfg, deig_cfg, pi_cfg,
                initial_models=[*models], split=split)
        except DecalError as exc:
            errors.append(f"replication {m}, strategy {strategy}: {exc}")
    return m, out, errors


def run_study(ds: PotentialOutcomesDataset, strategies: tuple[str, ...],
              replications: int, n_acq: int, n_train: int, base_seed: int = 0,
              gp_cfg: GpConfig = GpConfig(), deig_cfg: DEigConfig = DEigConfig(),
              pi_cfg: PiConfig = PiConfig(), workers: int = 1,
              progress=None) -> StudyResult:
    """Run every strategy over `replications` shared splits and aggregate.

    Replication m derives its seed from (base_seed, m) and is shared across
    strategies, so all strategies see identical splits and initial models.
    Results are independent of `workers`.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    unknown = [s for s in strategies if s not in acquisition.STRATEGIES]
    if unknown:
        raise ValueError(f"unknown strategies: {unknown}")
    tasks = [(ds, m, tuple(strategies), n_acq, n_train, base_seed,
              gp_cfg, deig_cfg, pi_cfg) for m in range(replications)]
    traces: dict[str, list[MetricTrace | None]] = {
        s: [None] * replications for s in strategies}
    failures: list[str] = []

    def consume(result):
        m, per_strategy, errors = result
        failures.extend(errors)
        for s in strategies:
            traces[s][m] = per_strategy[s]
        if progress is not None:
            progress(m, errors)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, replications // (workers * 4))
            for result in pool.map(_replication_task, tasks, chunksize=chunk):
                consume(result)
    else:
        for task in tasks:
            consume(_replication_task(task))

    return StudyResult(rows=aggregate_traces(traces, n_acq), traces=traces,
                       strategies=tuple(strategies), n_acq=n_acq,
                       replications=replications)
