"""Experiment configuration: a flat TOML table plus CLI flag overrides.

Recognised keys (all top-level, no nesting)::

    dataset      = "path/to/dataset_dir"          (required)
    embeddings   = "path/to/vectors.emb"          (required)
    out          = "path/to/run_dir"              (required)
    backend      = "synthetic" | "http"           (default "synthetic")
    scorer_url   = "http://host:port"             (http backend; env
                                                   AMBIG_SCORER_URL overrides)
    timeout_s    = 30.0
    retries      = 2
    synthetic_dim          = 64
    synthetic_alpha        = 1.0
    synthetic_sigma        = 0.05
    synthetic_seed         = 0
    synthetic_weights_seed = 0
    synthetic_confusable   = [0, 1]               (optional label pair)
    synthetic_eps          = 0.05
    strategies   = ["zero", "retr", "ambig_gold_mis_pred"]   (required)
    shots        = [4, 8]
    seeds        = [0, 1, 2]
    budget       = 250
    retrieval_depth = 0                           (0 = full training pool)
    order        = "shuffled" | "entropy"
    fallback     = true
    cache        = "path/to/score_cache.jsonl"    (default: <out>/score_cache.jsonl)
    workers      = 1
    fail_fast    = false
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from iclselect.errors import ConfigError
from iclselect.selection import ALL_STRATEGIES

ORDER_POLICIES = ("shuffled", "entropy")
BACKEND_KINDS = ("synthetic", "http")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_dir: Path
    embeddings_path: Path
    out_dir: Path
    strategies: tuple[str, ...]
    backend_kind: str = "synthetic"
    scorer_url: str | None = None
    timeout_s: float = 30.0
    retries: int = 2
    synthetic_dim: int = 64
    synthetic_alpha: float = 1.0
    synthetic_sigma: float = 0.05
    synthetic_seed: int = 0
    synthetic_weights_seed: int = 0
    synthetic_confusable: tuple[int, int] | None = None
    synthetic_eps: float = 0.05
    n_shots: tuple[int, ...] = (4,)
    seeds: tuple[int, ...] = (0, 1, 2)
    candidate_budget: int = 250
    retrieval_depth: int | None = None
    order_policy: str = "shuffled"
    fallback_enabled: bool = True
    cache_path: Path | None = None
    workers: int = 1
    fail_fast: bool = False

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        for strategy in self.strategies:
            if strategy not in ALL_STRATEGIES:
                raise ConfigError(f"unknown strategy {strategy!r}; expected one of {ALL_STRATEGIES}")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError(f"duplicate strategies: {self.strategies}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(seed < 0 for seed in self.seeds):
            raise ConfigError("seeds must be non-negative")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds: {self.seeds}")
        if not self.n_shots or any(n < 1 for n in self.n_shots):
            raise ConfigError(f"shot counts must be positive, got {self.n_shots}")
        if self.candidate_budget < max(self.n_shots):
            raise ConfigError(
                f"budget {self.candidate_budget} must be >= the largest shot count {max(self.n_shots)}"
            )
        if self.order_policy not in ORDER_POLICIES:
            raise ConfigError(f"order policy must be one of {ORDER_POLICIES}, got {self.order_policy!r}")
        if self.backend_kind not in BACKEND_KINDS:
            raise ConfigError(f"backend must be one of {BACKEND_KINDS}, got {self.backend_kind!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def resolved_cache_path(self) -> Path:
        return self.cache_path if self.cache_path is not None else self.out_dir / "score_cache.jsonl"

    def validate_paths(self) -> None:
        if not self.dataset_dir.is_dir():
            raise ConfigError(f"dataset directory {self.dataset_dir} does not exist")
        if not self.embeddings_path.is_file():
            raise ConfigError(f"embedding store {self.embeddings_path} does not exist")

    def snapshot(self) -> dict:
        """JSON-safe dump sufficient to re-execute the run."""
        return {
            "dataset": str(self.dataset_dir),
            "embeddings": str(self.embeddings_path),
            "out": str(self.out_dir),
            "backend": self.backend_kind,
            "scorer_url": self.scorer_url,
            "timeout_s": self.timeout_s,
            "retries": self.retries,
            "synthetic_dim": self.synthetic_dim,
            "synthetic_alpha": self.synthetic_alpha,
            "synthetic_sigma": self.synthetic_sigma,
            "synthetic_seed": self.synthetic_seed,
            "synthetic_weights_seed": self.synthetic_weights_seed,
            "synthetic_confusable": list(self.synthetic_confusable) if self.synthetic_confusable else None,
            "synthetic_eps": self.synthetic_eps,
            "strategies": list(self.strategies),
            "shots": list(self.n_shots),
            "seeds": list(self.seeds),
            "budget": self.candidate_budget,
            "retrieval_depth": self.retrieval_depth,
            "order": self.order_policy,
            "fallback": self.fallback_enabled,
            "cache": str(self.resolved_cache_path()),
            "workers": self.workers,
            "fail_fast": self.fail_fast,
        }


_KNOWN_KEYS = {
    "dataset",
    "embeddings",
    "out",
    "backend",
    "scorer_url",
    "timeout_s",
    "retries",
    "synthetic_dim",
    "synthetic_alpha",
    "synthetic_sigma",
    "synthetic_seed",
    "synthetic_weights_seed",
    "synthetic_confusable",
    "synthetic_eps",
    "strategies",
    "shots",
    "seeds",
    "budget",
    "retrieval_depth",
    "order",
    "fallback",
    "cache",
    "workers",
    "fail_fast",
}


def _int_list(raw, key: str) -> tuple[int, ...]:
    if not isinstance(raw, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in raw):
        raise ConfigError(f"config key {key!r} must be a list of integers, got {raw!r}")
    return tuple(raw)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a TOML experiment configuration."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for required in ("dataset", "embeddings", "out", "strategies"):
        if required not in raw:
            raise ConfigError(f"{path}: missing required key {required!r}")
    base = path.parent
    confusable = raw.get("synthetic_confusable")
    if confusable is not None:
        pair = _int_list(confusable, "synthetic_confusable")
        if len(pair) != 2:
            raise ConfigError("synthetic_confusable must be a pair of label ids")
        confusable = (pair[0], pair[1])
    depth = raw.get("retrieval_depth", 0)
    try:
        return ExperimentConfig(
            dataset_dir=(base / raw["dataset"]).resolve(),
            embeddings_path=(base / raw["embeddings"]).resolve(),
            out_dir=(base / raw["out"]).resolve(),
            backend_kind=raw.get("backend", "synthetic"),
            scorer_url=raw.get("scorer_url"),
            timeout_s=float(raw.get("timeout_s", 30.0)),
            retries=int(raw.get("retries", 2)),
            synthetic_dim=int(raw.get("synthetic_dim", 64)),
            synthetic_alpha=float(raw.get("synthetic_alpha", 1.0)),
            synthetic_sigma=float(raw.get("synthetic_sigma", 0.05)),
            synthetic_seed=int(raw.get("synthetic_seed", 0)),
            synthetic_weights_seed=int(raw.get("synthetic_weights_seed", 0)),
            synthetic_confusable=confusable,
            synthetic_eps=float(raw.get("synthetic_eps", 0.05)),
            strategies=tuple(raw["strategies"]),
            n_shots=_int_list(raw.get("shots", [4]), "shots"),
            seeds=_int_list(raw.get("seeds", [0, 1, 2]), "seeds"),
            candidate_budget=int(raw.get("budget", 250)),
            retrieval_depth=int(depth) or None,
            order_policy=raw.get("order", "shuffled"),
            fallback_enabled=bool(raw.get("fallback", True)),
            cache_path=(base / raw["cache"]).resolve() if "cache" in raw else None,
            workers=int(raw.get("workers", 1)),
            fail_fast=bool(raw.get("fail_fast", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def apply_overrides(
    config: ExperimentConfig,
    strategies: Sequence[str] | None = None,
    shots: Sequence[int] | None = None,
    seeds: Sequence[int] | None = None,
    budget: int | None = None,
    order: str | None = None,
    out: str | Path | None = None,
    fail_fast: bool | None = None,
) -> ExperimentConfig:
    """Apply CLI flag overrides on top of a parsed config."""
    updates: dict = {}
    if strategies:
        updates["strategies"] = tuple(strategies)
    if shots:
        updates["n_shots"] = tuple(shots)
    if seeds:
        updates["seeds"] = tuple(seeds)
    if budget is not None:
        updates["candidate_budget"] = budget
    if order is not None:
        updates["order_policy"] = {"entropy": "entropy", "shuffled": "shuffled"}.get(order, order)
    if out is not None:
        updates["out_dir"] = Path(out).resolve()
    if fail_fast is not None:
        updates["fail_fast"] = fail_fast
    return replace(config, **updates) if updates else config
