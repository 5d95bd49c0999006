"""SISA sharding, incremental training and aggregation."""

from .plan import Affected, ShardPlan, shard, slice_shard
from .trainer import (
    Checkpointer,
    DataSource,
    DatasetSource,
    MemoryCheckpointer,
    SisaPipeline,
    StepTiming,
    SubmodelChain,
    aggregate_accuracy,
    aggregate_predict,
    epochs_for_slice,
    incremental_train,
    initial_model,
    map_shards,
)

__all__ = [
    "Affected",
    "Checkpointer",
    "DataSource",
    "DatasetSource",
    "MemoryCheckpointer",
    "ShardPlan",
    "SisaPipeline",
    "StepTiming",
    "SubmodelChain",
    "aggregate_accuracy",
    "aggregate_predict",
    "epochs_for_slice",
    "incremental_train",
    "initial_model",
    "map_shards",
    "shard",
    "slice_shard",
]
