"""Benchmarks, sweeps, the synthetic dataset generator and the attack simulator."""

from .attacks import STRATEGIES, AttackOutcome, attack_sim, build_arena, run_attack
from .datasets import FULL_TEST, FULL_TRAIN, assign_owners, gen_dataset, write_split
from .experiments import (
    bench_filter,
    bench_mht,
    bench_storage,
    bench_unlearn,
    compare_speedups,
    exactness_trials,
    live_submodels,
    measure_fpr,
    sweep_hparams,
    sweep_slices,
    verification_cost,
)
from .results import BenchResult, Measurement, write_result

__all__ = [
    "FULL_TEST",
    "FULL_TRAIN",
    "STRATEGIES",
    "AttackOutcome",
    "BenchResult",
    "Measurement",
    "assign_owners",
    "attack_sim",
    "bench_filter",
    "bench_mht",
    "bench_storage",
    "bench_unlearn",
    "build_arena",
    "compare_speedups",
    "exactness_trials",
    "gen_dataset",
    "live_submodels",
    "measure_fpr",
    "run_attack",
    "sweep_hparams",
    "sweep_slices",
    "verification_cost",
    "write_result",
    "write_split",
]
