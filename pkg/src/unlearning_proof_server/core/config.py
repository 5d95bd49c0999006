"""Pipeline configuration and environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal

from .filter.cuckoo import FilterConfig
from .ml.network import Hyperparams, ModelDims

EpochSchedule = Literal["replay", "budget"]

WORKSPACE_ENV = "POUL_WORKSPACE"
RESULTS_DIR_ENV = "POUL_RESULTS_DIR"
MAX_WORKERS_ENV = "POUL_MAX_WORKERS"
LOG_LEVEL_ENV = "POUL_LOG_LEVEL"


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    """Everything a session needs to shard, train and commit a dataset."""

    n_shards: int = 1
    n_slices: int = 6
    dims: ModelDims = ModelDims()
    hyperparams: Hyperparams = Hyperparams()
    filter: FilterConfig = FilterConfig()
    seed: int = 0
    epoch_schedule: EpochSchedule = "replay"
    max_workers: int = 1

    def __post_init__(self) -> None:
        if self.n_shards < 1:
            raise ValueError(f"n_shards must be >= 1 (got {self.n_shards})")
        if self.n_slices < 1:
            raise ValueError(f"n_slices must be >= 1 (got {self.n_slices})")
        if self.epoch_schedule not in ("replay", "budget"):
            raise ValueError(
                f"epoch_schedule must be 'replay' or 'budget' (got {self.epoch_schedule!r})"
            )
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_shards": self.n_shards,
            "n_slices": self.n_slices,
            "dims": [self.dims.input_dim, self.dims.hidden_dim, self.dims.class_count],
            "batch_size": self.hyperparams.batch_size,
            "epochs": self.hyperparams.epochs,
            "learning_rate": self.hyperparams.learning_rate,
            "rng_seed": self.hyperparams.rng_seed,
            "bucket_count": self.filter.bucket_count,
            "entries_per_bucket": self.filter.entries_per_bucket,
            "fingerprint_bits": self.filter.fingerprint_bits,
            "displacement_limit": self.filter.displacement_limit,
            "seed": self.seed,
            "epoch_schedule": self.epoch_schedule,
            "max_workers": self.max_workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> PipelineConfig:
        input_dim, hidden_dim, class_count = d["dims"]
        return cls(
            n_shards=d["n_shards"],
            n_slices=d["n_slices"],
            dims=ModelDims(input_dim, hidden_dim, class_count),
            hyperparams=Hyperparams(
                batch_size=d["batch_size"],
                epochs=d["epochs"],
                learning_rate=d["learning_rate"],
                rng_seed=d["rng_seed"],
            ),
            filter=FilterConfig(
                bucket_count=d["bucket_count"],
                entries_per_bucket=d["entries_per_bucket"],
                fingerprint_bits=d["fingerprint_bits"],
                displacement_limit=d["displacement_limit"],
            ),
            seed=d["seed"],
            epoch_schedule=d["epoch_schedule"],
            max_workers=d.get("max_workers", 1),
        )


def _int_env(name: str) -> int | None:
    env = os.getenv(name)
    if env is None or env == "":
        return None
    try:
        value = int(env)
    except ValueError as exc:
        raise ValueError(f"{name} must be an integer") from exc
    if value < 1:
        raise ValueError(f"{name} must be >= 1")
    return value


def resolve_max_workers(max_workers: int | None) -> int:
    """Explicit value, else POUL_MAX_WORKERS, else 1 (stable timings)."""
    if max_workers is not None:
        if max_workers < 1:
            raise ValueError("max_workers must be >= 1")
        return max_workers
    return _int_env(MAX_WORKERS_ENV) or 1


def resolve_workspace(path: str | Path | None = None) -> Path:
    raw = path or os.getenv(WORKSPACE_ENV) or ".poul"
    return Path(raw).expanduser().resolve()


def resolve_results_dir(path: str | Path | None = None) -> Path:
    raw = path or os.getenv(RESULTS_DIR_ENV) or "results"
    return Path(raw).expanduser().resolve()


def build_pipeline_config(
    base: PipelineConfig | None = None,
    *,
    shards: int | None = None,
    slices: int | None = None,
    batch: int | None = None,
    epochs: int | None = None,
    lr: float | None = None,
    seed: int | None = None,
    fp_bits: int | None = None,
    buckets: int | None = None,
    entries_per_bucket: int | None = None,
    dims: tuple[int, int, int] | None = None,
    schedule: EpochSchedule | None = None,
    max_workers: int | None = None,
) -> PipelineConfig:
    """Explicit option values over ``base``; unset options keep the base value.

    POUL_MAX_WORKERS applies when ``max_workers`` is not given.
    """
    cfg = base or PipelineConfig()
    hp = replace(
        cfg.hyperparams,
        **{
            k: v
            for k, v in (("batch_size", batch), ("epochs", epochs), ("learning_rate", lr))
            if v is not None
        },
    )
    flt = replace(
        cfg.filter,
        **{
            k: v
            for k, v in (
                ("fingerprint_bits", fp_bits),
                ("bucket_count", buckets),
                ("entries_per_bucket", entries_per_bucket),
            )
            if v is not None
        },
    )
    return replace(
        cfg,
        n_shards=shards if shards is not None else cfg.n_shards,
        n_slices=slices if slices is not None else cfg.n_slices,
        dims=ModelDims(*dims) if dims is not None else cfg.dims,
        hyperparams=hp,
        filter=flt,
        seed=seed if seed is not None else cfg.seed,
        epoch_schedule=schedule or cfg.epoch_schedule,
        max_workers=resolve_max_workers(max_workers),
    )
