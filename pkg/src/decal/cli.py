"""Command-line front end: config handling, study execution, results export."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .acquisition import STRATEGIES, DEigConfig
from .decision import PiConfig
from .dataio import load_dataset_csv, write_results_csv, write_trace_csv
from .exceptions import ConfigError, DecalError
from .experiment import GpConfig, SyntheticConfig, generate_synthetic, run_study
from .mathcore import MAX_QUADRATURE_ORDER
from .seeding import derive_seed

__all__ = ["StudyConfig", "parse_config", "run", "main"]


@dataclass(frozen=True)
class StudyConfig:
    """Effective study settings; defaults reproduce the synthetic benchmark."""

    dataset: str = "synthetic"
    strategies: tuple[str, ...] = STRATEGIES
    replications: int = 200
    n_acq: int = 5
    n_train: int | None = None  # resolved to 100 (synthetic) / 50 (external)
    seed: int = 0
    workers: int = 1
    out: str = "results.csv"
    gp_restarts: int = 5
    refit_each_step: bool = True
    n_fantasy: int = 20
    fantasy_scheme: str = "gauss-hermite"
    pi_method: str = "quadrature"
    pi_samples: int = 2000
    quadrature_order: int = 48
    synthetic_points: int = 400
    synthetic_dim: int = 5
    synthetic_decisions: int = 4


_FIELD_NAMES = tuple(f.name for f in fields(StudyConfig))

# Execution details excluded from the config echo: the results CSV must be
# byte-identical across worker counts and output locations.
_NO_ECHO = ("workers", "out")


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{key}: {message}")


def _validate(cfg: StudyConfig) -> StudyConfig:
    _require(bool(cfg.strategies), "strategies", "must not be empty")
    for s in cfg.strategies:
        _require(s in STRATEGIES, "strategies",
                 f"unknown strategy {s!r}; valid: {', '.join(STRATEGIES)}")
    _require(len(set(cfg.strategies)) == len(cfg.strategies), "strategies",
             "duplicate strategy names")
    _require(cfg.replications >= 1, "replications", f"must be >= 1, got {cfg.replications}")
    _require(cfg.n_acq >= 0, "n_acq", f"must be >= 0, got {cfg.n_acq}")
    _require(cfg.workers >= 1, "workers", f"must be >= 1, got {cfg.workers}")
    _require(cfg.gp_restarts >= 1, "gp_restarts", f"must be >= 1, got {cfg.gp_restarts}")
    _require(cfg.n_fantasy >= 1, "n_fantasy", f"must be >= 1, got {cfg.n_fantasy}")
    _require(cfg.fantasy_scheme in ("gauss-hermite", "mc"), "fantasy_scheme",
             f"must be 'gauss-hermite' or 'mc', got {cfg.fantasy_scheme!r}")
    _require(cfg.pi_method in ("quadrature", "mc"), "pi_method",
             f"must be 'quadrature' or 'mc', got {cfg.pi_method!r}")
    _require(cfg.pi_samples >= 1, "pi_samples", f"must be >= 1, got {cfg.pi_samples}")
    _require(1 <= cfg.quadrature_order <= MAX_QUADRATURE_ORDER, "quadrature_order",
             f"must be in [1, {MAX_QUADRATURE_ORDER}], got {cfg.quadrature_order}")
    _require(cfg.synthetic_points >= 4, "synthetic_points",
             f"must be >= 4, got {cfg.synthetic_points}")
    _require(cfg.synthetic_dim >= 1, "synthetic_dim",
             f"must be >= 1, got {cfg.synthetic_dim}")
    _require(cfg.synthetic_decisions >= 2, "synthetic_decisions",
             f"must be >= 2, got {cfg.synthetic_decisions}")
    if cfg.n_train is None:
        cfg = replace(cfg, n_train=100 if cfg.dataset == "synthetic" else 50)
    _require(cfg.n_train >= 1, "n_train", f"must be >= 1, got {cfg.n_train}")
    return cfg


def _coerce(key: str, value):
    if key == "strategies":
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"strategies: expected a list or comma string, got {value!r}")
        return tuple(value)
    if key in ("dataset", "out", "fantasy_scheme", "pi_method"):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if key == "refit_each_step":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return value


def parse_config(path: str | None = None, overrides: dict | None = None) -> StudyConfig:
    """Build the effective config: defaults, then file values, then flag overrides.

    Unknown keys and out-of-range values raise ConfigError naming the key.
    """
    settings: dict = {}
    if path is not None:
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from exc
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config: {path} must hold a JSON object")
        for key, value in data.items():
            if key not in _FIELD_NAMES:
                raise ConfigError(f"unknown config key {key!r}")
            settings[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            settings[key] = _coerce(key, value)
    return _validate(StudyConfig(**settings))


def config_echo(cfg: StudyConfig) -> dict[str, object]:
    echo = {}
    for name in _FIELD_NAMES:
        if name in _NO_ECHO:
            continue
        value = getattr(cfg, name)
        echo[name] = ",".join(value) if name == "strategies" else value
    return echo


def _load_dataset(cfg: StudyConfig):
    if cfg.dataset == "synthetic":
        synth = SyntheticConfig.with_geometry(
            cfg.synthetic_points, cfg.synthetic_dim, cfg.synthetic_decisions)
        return generate_synthetic(synth, derive_seed(cfg.seed, "dataset"))
    return load_dataset_csv(cfg.dataset)


def _print_summary(result, out) -> None:
    print(f"{'strategy':>10} {'step':>4} {'mean_A':>8} {'sem_A':>8} "
          f"{'mean_H':>8} {'sem_H':>8} {'ok':>4} {'fail':>4}", file=out)
    for row in result.rows:
        print(f"{row.strategy:>10} {row.step:>4} {row.mean_accuracy:8.4f} "
              f"{row.sem_accuracy:8.4f} {row.mean_entropy:8.4f} "
              f"{row.sem_entropy:8.4f} {row.n_ok:>4} {row.n_failed:>4}", file=out)


def run(cfg: StudyConfig, log=sys.stderr) -> int:
    """Execute the configured study; write results and trace CSVs."""
    ds = _load_dataset(cfg)
    if cfg.n_train >= ds.n_points - 1:
        raise ConfigError(
            f"n_train: {cfg.n_train} leaves no pool for {ds.n_points} points")

    def progress(m, errors):
        status = "failed: " + "; ".join(errors) if errors else "ok"
        print(f"replication {m + 1}/{cfg.replications}: {status}", file=log)

    result = run_study(
        ds, cfg.strategies, cfg.replications, cfg.n_acq, cfg.n_train,
        base_seed=cfg.seed,
        gp_cfg=GpConfig(restarts=cfg.gp_restarts, refit_each_step=cfg.refit_each_step),
        deig_cfg=DEigConfig(n_fantasy=cfg.n_fantasy, scheme=cfg.fantasy_scheme,
                            pi=PiConfig(method=cfg.pi_method,
                                        order=cfg.quadrature_order,
                                        n_samples=cfg.pi_samples)),
        pi_cfg=PiConfig(method=cfg.pi_method, order=cfg.quadrature_order,
                        n_samples=cfg.pi_samples),
        workers=cfg.workers, progress=progress)

    out_path = Path(cfg.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_results_csv(out_path, result.rows, config_echo(cfg))
    trace_path = out_path.with_name(out_path.stem + "_trace" + out_path.suffix)
    write_trace_csv(trace_path, result.traces)
    print(f"wrote {out_path} and {trace_path}", file=log)
    _print_summary(result, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decal",
        description="Decision-aware active learning benchmark runner")
    parser.add_argument("--config", metavar="FILE", help="JSON config file")
    parser.add_argument("--dataset", help="'synthetic' or a dataset CSV path")
    parser.add_argument("--strategies", help="comma-separated strategy names")
    parser.add_argument("--replications", type=int, help="number of replications")
    parser.add_argument("--n-acq", type=int, dest="n_acq",
                        help="acquisitions per replication")
    parser.add_argument("--n-train", type=int, dest="n_train",
                        help="training-set size per replication")
    parser.add_argument("--seed", type=int, help="base seed")
    parser.add_argument("--workers", type=int, help="parallel replication workers")
    parser.add_argument("--out", help="results CSV path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {key: getattr(args, key) for key in
                 ("dataset", "strategies", "replications", "n_acq",
                  "n_train", "seed", "workers", "out")}
    try:
        cfg = parse_config(args.config, overrides)
        return run(cfg)
    except DecalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
