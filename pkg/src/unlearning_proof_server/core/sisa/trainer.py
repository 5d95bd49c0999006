"""Incremental slice training, aggregation and an in-memory SISA pipeline.

``incremental_train`` is shared by the enclave's training program and by
:class:`SisaPipeline`; the two differ only in their data source and
checkpointer. The in-memory pipeline is the retrain-from-scratch oracle.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Protocol, TypeVar

import numpy as np

from ..config import PipelineConfig
from ..dataset import Dataset
from ..errors import AlreadyDeleted, DuplicateKid
from ..ml.network import (
    Hyperparams,
    ModelDims,
    ModelParams,
    Prediction,
    derive_seed,
    init_model,
    scores,
    train_sgd,
)
from .plan import ShardPlan

logger = logging.getLogger(__name__)

Phase = Literal["learn", "unlearn"]
T = TypeVar("T")


class DataSource(Protocol):
    def rows(self, kids: Sequence[int]) -> tuple[np.ndarray, np.ndarray]: ...


class Checkpointer(Protocol):
    def restore(self, shard: int, slice_index: int) -> ModelParams: ...

    def store(self, shard: int, slice_index: int, model: ModelParams) -> None: ...


@dataclass(frozen=True, slots=True)
class StepTiming:
    shard: int
    slice_index: int
    phase: Phase
    train_s: float
    checkpoint_s: float
    restore_s: float
    samples: int


@dataclass(frozen=True, slots=True)
class SubmodelChain:
    """Submodels m_start..m_s of one shard; ``models[-1]`` is the constituent model."""

    shard: int
    start: int
    models: tuple[ModelParams, ...]
    timings: tuple[StepTiming, ...] = ()

    @property
    def final(self) -> ModelParams:
        return self.models[-1]


def epochs_for_slice(epochs: int, s: int, schedule: str = "replay") -> int:
    """Epochs to run when slice i is added.

    ``replay`` trains ``epochs`` over the cumulative data at every increment.
    ``budget`` keeps total epochs-over-data near ``epochs`` for any slice
    count: increment i sees i/s of the shard, so sum_i (i/s) * e = e * (s+1)/2
    and e = ceil(2 * epochs / (s + 1)).
    """
    if schedule == "replay":
        return epochs
    if schedule == "budget":
        return math.ceil(2 * epochs / (s + 1))
    raise ValueError(f"unknown epoch schedule {schedule!r}")


def initial_model(dims: ModelDims, seed: int, shard: int) -> ModelParams:
    """Public M0 of a shard."""
    return init_model(dims, derive_seed(seed, shard))


def incremental_train(
    shard: int,
    slices: Sequence[Sequence[int]],
    source: DataSource,
    hp: Hyperparams,
    checkpoints: Checkpointer,
    *,
    initial: ModelParams,
    start: int = 1,
    schedule: str = "replay",
    phase: Phase = "learn",
    clock: Callable[[], float] = time.perf_counter,
) -> SubmodelChain:
    """Train m_start..m_s, restoring each predecessor through ``checkpoints``.

    ``slices`` are the surviving kids of d_1..d_s in plan order. Each step
    trains over d_1..d_i starting from m_{i-1} (M0 when i = 1) and stores the
    result before the next step begins.
    """
    s = len(slices)
    if not 1 <= start <= s:
        raise ValueError(f"start slice {start} outside 1..{s}")
    n_epochs = epochs_for_slice(hp.epochs, s, schedule)
    models: list[ModelParams] = []
    timings: list[StepTiming] = []
    cumulative: list[int] = [k for sl in slices[: start - 1] for k in sl]
    for i in range(start, s + 1):
        t0 = clock()
        prev = initial if i == 1 else checkpoints.restore(shard, i - 1)
        t1 = clock()
        cumulative.extend(slices[i - 1])
        x, y = source.rows(cumulative)
        model = train_sgd(prev, x, y, hp, stream=(shard, i), epochs=n_epochs)
        model = replace(model, slice_index=i)
        t2 = clock()
        checkpoints.store(shard, i, model)
        t3 = clock()
        models.append(model)
        timings.append(
            StepTiming(shard, i, phase, t2 - t1, t3 - t2, t1 - t0, samples=len(cumulative))
        )
        logger.debug("shard %s slice %s/%s trained on %s samples", shard, i, s, len(cumulative))
    return SubmodelChain(shard, start, tuple(models), tuple(timings))


def aggregate_predict(models: Sequence[ModelParams], features: np.ndarray) -> Prediction:
    """Mean of the constituent models' softmax scores, argmax with lowest-index ties."""
    if not models:
        raise ValueError("aggregate_predict needs at least one constituent model")
    x = np.asarray(features)
    if x.ndim != 1:
        raise ValueError(f"expected one feature vector, got shape {x.shape}")
    mean = np.mean([scores(m, x[None, :])[0] for m in models], axis=0)
    return Prediction(scores=tuple(float(v) for v in mean), label=int(np.argmax(mean)))


def aggregate_accuracy(
    models: Sequence[ModelParams], features: np.ndarray, labels: np.ndarray
) -> float:
    if features.shape[0] == 0:
        return 0.0
    mean = np.mean([scores(m, features) for m in models], axis=0)
    return float((mean.argmax(axis=1) == labels).mean())


def map_shards(fn: Callable[[int], T], shards: Iterable[int], max_workers: int = 1) -> list[T]:
    """Run fn per shard, optionally across threads; results keep shard order."""
    shards = list(shards)
    if max_workers <= 1 or len(shards) <= 1:
        return [fn(j) for j in shards]
    with ThreadPoolExecutor(max_workers=min(max_workers, len(shards))) as pool:
        return list(pool.map(fn, shards))


class DatasetSource:
    """Rows looked up by kid from an in-memory dataset."""

    def __init__(self, dataset: Dataset) -> None:
        self._dataset = dataset
        self._row = {kid: i for i, kid in enumerate(dataset.kids)}

    def rows(self, kids: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        idx = np.fromiter((self._row[k] for k in kids), dtype=np.int64, count=len(kids))
        return self._dataset.features[idx], self._dataset.labels[idx]


@dataclass
class MemoryCheckpointer:
    models: dict[tuple[int, int], ModelParams] = field(default_factory=dict)

    def restore(self, shard: int, slice_index: int) -> ModelParams:
        return self.models[(shard, slice_index)]

    def store(self, shard: int, slice_index: int, model: ModelParams) -> None:
        self.models[(shard, slice_index)] = model


class SisaPipeline:
    """Unauthenticated SISA: train, unlearn and predict in memory."""

    def __init__(
        self,
        dataset: Dataset,
        *,
        n_shards: int,
        n_slices: int,
        dims: ModelDims,
        hp: Hyperparams,
        seed: int = 0,
        schedule: str = "replay",
        max_workers: int = 1,
        plan: ShardPlan | None = None,
    ) -> None:
        self.dataset = dataset
        if plan is None:
            plan = ShardPlan.build(dataset.kids, n_shards, n_slices, seed)
        self.plan = plan
        self.dims = dims
        self.hp = hp
        self.seed = seed
        self.schedule = schedule
        self.max_workers = max_workers
        self.source = DatasetSource(dataset)
        self.checkpoints = MemoryCheckpointer()
        self.deleted: set[int] = set()
        self.timings: list[StepTiming] = []

    @classmethod
    def from_config(
        cls, dataset: Dataset, config: PipelineConfig, *, plan: ShardPlan | None = None
    ) -> SisaPipeline:
        return cls(
            dataset,
            n_shards=config.n_shards,
            n_slices=config.n_slices,
            dims=config.dims,
            hp=config.hyperparams,
            seed=config.seed,
            schedule=config.epoch_schedule,
            max_workers=config.max_workers,
            plan=plan,
        )

    def _live_slices(self, shard: int) -> list[list[int]]:
        return [[k for k in sl if k not in self.deleted] for sl in self.plan.slices(shard)]

    def _train_shard(self, shard: int, start: int, phase: Phase) -> SubmodelChain:
        return incremental_train(
            shard,
            self._live_slices(shard),
            self.source,
            self.hp,
            self.checkpoints,
            initial=initial_model(self.dims, self.seed, shard),
            start=start,
            schedule=self.schedule,
            phase=phase,
        )

    def train(self) -> list[SubmodelChain]:
        chains = map_shards(
            lambda j: self._train_shard(j, 1, "learn"), range(self.plan.n_shards), self.max_workers
        )
        for c in chains:
            self.timings.extend(c.timings)
        return chains

    def unlearn(self, kid: int) -> SubmodelChain:
        """Drop one kid and retrain its slice's submodel and every later one."""
        if kid in self.deleted:
            raise AlreadyDeleted(f"kid {kid:#018x} was already deleted")
        affected = self.plan.locate_affected(kid)
        self.deleted.add(kid)
        chain = self._train_shard(affected.shard, affected.slice_index, "unlearn")
        self.timings.extend(chain.timings)
        return chain

    def unlearn_batch(self, kids: Iterable[int]) -> list[SubmodelChain]:
        """Delete several kids, retraining each affected shard once from its lowest slice."""
        kids = list(kids)
        first: dict[int, int] = {}
        seen: set[int] = set()
        for kid in kids:
            if kid in self.deleted:
                raise AlreadyDeleted(f"kid {kid:#018x} was already deleted")
            if kid in seen:
                raise DuplicateKid(f"kid {kid:#018x} listed twice in one deletion")
            seen.add(kid)
            j, i = self.plan.locate(kid)
            first[j] = min(i, first.get(j, i))
        self.deleted.update(kids)
        chains = [self._train_shard(j, i, "unlearn") for j, i in sorted(first.items())]
        for c in chains:
            self.timings.extend(c.timings)
        return chains

    def constituents(self) -> list[ModelParams]:
        s = self.plan.n_slices
        return [self.checkpoints.restore(j, s) for j in range(self.plan.n_shards)]

    def submodel(self, shard: int, slice_index: int) -> ModelParams:
        return self.checkpoints.restore(shard, slice_index)

    def predict(self, features: np.ndarray) -> Prediction:
        return aggregate_predict(self.constituents(), features)

    def accuracy(self, features: np.ndarray, labels: np.ndarray) -> float:
        return aggregate_accuracy(self.constituents(), features, labels)
