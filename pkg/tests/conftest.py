from __future__ import annotations

from collections.abc import Callable

import pytest

from unlearning_proof_server.bench.datasets import gen_dataset
from unlearning_proof_server.core.config import PipelineConfig, build_pipeline_config
from unlearning_proof_server.core.dataset import Dataset
from unlearning_proof_server.core.filter import FilterConfig
from unlearning_proof_server.core.protocol import (
    DataOwner,
    PhaseResult,
    UnlearningServer,
    pin_owner,
    setup_phase,
)

TINY_DIM = 32


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    for name in ("POUL_WORKSPACE", "POUL_RESULTS_DIR", "POUL_MAX_WORKERS", "POUL_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def make_config() -> Callable[..., PipelineConfig]:
    """Tiny network and filter; keyword options as in build_pipeline_config."""

    def _make(**opts) -> PipelineConfig:
        defaults = {
            "shards": 1,
            "slices": 3,
            "batch": 16,
            "epochs": 2,
            "lr": 0.1,
            "seed": 7,
            "buckets": 256,
            "dims": (TINY_DIM, 8, 2),
        }
        defaults.update(opts)
        return build_pipeline_config(**defaults)

    return _make


@pytest.fixture
def tiny_config(make_config) -> PipelineConfig:
    return make_config()


@pytest.fixture
def make_dataset() -> Callable[..., Dataset]:
    def _make(n: int = 60, *, seed: int = 1, dim: int = TINY_DIM) -> Dataset:
        train, _ = gen_dataset(n, 0, dim=dim, seed=seed, flip=0.1)
        return train

    return _make


@pytest.fixture
def toy_dataset(make_dataset) -> Dataset:
    return make_dataset()


@pytest.fixture
def small_filter() -> FilterConfig:
    return FilterConfig(bucket_count=64, entries_per_bucket=4, fingerprint_bits=12)


@pytest.fixture
def honest_session(
    tiny_config: PipelineConfig, toy_dataset: Dataset
) -> tuple[UnlearningServer, DataOwner, PhaseResult]:
    """A server after an accepted setup phase, with its pinned owner."""
    server = UnlearningServer(tiny_config)
    owner = pin_owner(server)
    result = setup_phase(server, toy_dataset, [owner])
    assert result.accepted, result.failures()
    return server, owner, result
