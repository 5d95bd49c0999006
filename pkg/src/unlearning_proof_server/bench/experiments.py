"""Desk-scale experiments: filter vs MHT, FPR, storage, unlearning cost, sweeps.

Every function returns a :class:`BenchResult`; the CLI prints it and writes
it to the results directory. Timings are wall-clock means over at least
``MIN_TIMING_REPS`` repetitions unless the caller asks for fewer.
"""

from __future__ import annotations

import logging
import math
import os
from collections.abc import Sequence
from dataclasses import replace

import numpy as np

from ..core.config import PipelineConfig
from ..core.dataset import DataPoint, Dataset
from ..core.enclave.sgx import EnclaveSimulator
from ..core.errors import IntegrityError
from ..core.filter.cuckoo import CuckooFilter, FilterConfig
from ..core.lineage.auth import (
    MODEL_HEADER_SIZE,
    LineageStore,
    Placement,
    model_record_placement,
)
from ..core.lineage.key_list import ENTRY_SIZE, KeyEntry, KeyList
from ..core.lineage.record_log import RecordLog
from ..core.mht import MerkleTree, verify_path
from ..core.ml.network import ModelDims, canonical_bytes, init_model
from ..core.protocol.phases import deletion_phase, pin_owner, setup_phase
from ..core.protocol.server import UnlearningServer
from ..core.sisa.plan import ShardPlan
from ..core.sisa.trainer import SisaPipeline
from .datasets import gen_dataset
from .results import MIN_TIMING_REPS, BenchResult, summarize_us, time_loop

logger = logging.getLogger(__name__)

REFERENCE_FILTER_US = {"insert": 0.034, "query": 0.035, "delete": 0.037}
REFERENCE_MHT_US = {"insert": 6.3, "query": 12.6, "delete": 12.6}
SPEEDUP_BAR = 10.0
FULL_SCALE_ITEMS = 56_073
DEFAULT_MODEL_BYTES = 308_744
ACCURACY_BAR = 0.90


def nonincreasing(values: Sequence[float], *, tolerance: float = 0.0) -> bool:
    """Each value at most (1 + tolerance) times its predecessor."""
    return all(b <= a * (1 + tolerance) for a, b in zip(values, values[1:], strict=False))


def nondecreasing(values: Sequence[float], *, tolerance: float = 0.0) -> bool:
    """Each value at least its predecessor minus an absolute tolerance."""
    return all(b >= a - tolerance for a, b in zip(values, values[1:], strict=False))


# -- filter and MHT ---------------------------------------------------------------


def _random_items(n: int, bits: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    fps = rng.integers(1, 1 << bits, size=n, dtype=np.int64).tolist()
    h1s = rng.integers(0, 1 << 62, size=n, dtype=np.int64).tolist()
    return list(zip(fps, h1s, strict=True))


def _filter_round(config: FilterConfig, items: list[tuple[int, int]]) -> tuple[float, ...]:
    f = CuckooFilter(config)
    insert = time_loop(lambda it: f.insert(*it), items)
    query = time_loop(lambda it: f.query(*it), items)
    delete = time_loop(lambda it: f.delete(*it), items)
    return insert, query, delete


def bench_filter(
    config: FilterConfig,
    n_items: int,
    *,
    repetitions: int = MIN_TIMING_REPS,
    seed: int = 0,
) -> BenchResult:
    """Per-operation insert/query/delete time at n_items."""
    if n_items > config.slot_count:
        raise ValueError(f"{n_items} items do not fit in {config.slot_count} slots")
    items = _random_items(n_items, config.fingerprint_bits, np.random.default_rng(seed))
    rounds = [_filter_round(config, items) for _ in range(repetitions)]
    result = BenchResult(
        experiment="bench-filter",
        params={
            "items": n_items,
            "buckets": config.bucket_count,
            "entries_per_bucket": config.entries_per_bucket,
            "fp_bits": config.fingerprint_bits,
            "load": round(n_items / config.slot_count, 4),
        },
    )
    for k, op in enumerate(("insert", "query", "delete")):
        mean, sd = summarize_us([r[k] for r in rounds])
        result.add(op, mean, "us", repetitions=repetitions, stdev=sd)
        result.add(f"reference_{op}", REFERENCE_FILTER_US[op], "us")
    return result


def _checked_path(tree: MerkleTree, values: list[bytes], i: int) -> None:
    if not verify_path(tree.root, values[i], tree.prove_membership(i)):
        raise IntegrityError(f"MHT path check failed at leaf {i}")


def _mht_round(
    leaves: list[bytes], targets: list[int], fresh: list[bytes]
) -> tuple[float, float, float]:
    values = list(leaves)
    tree = MerkleTree.build(values)

    def update(k: int) -> None:
        i = targets[k]
        _checked_path(tree, values, i)
        values[i] = fresh[k]
        tree.update_leaf(i, fresh[k])

    def delete(k: int) -> None:
        i = targets[k]
        _checked_path(tree, values, i)
        tree.delete_leaf(i)

    ks = list(range(len(targets)))
    insert = time_loop(update, ks)
    query = time_loop(lambda k: _checked_path(tree, values, targets[k]), ks)
    remove = time_loop(delete, ks)
    return insert, query, remove


def bench_mht(
    n_items: int,
    *,
    repetitions: int = MIN_TIMING_REPS,
    ops: int = 10_000,
    seed: int = 0,
) -> BenchResult:
    """MHT baseline: every operation first checks the leaf's path, then (for
    update/delete) rewrites it, i.e. 2 x log2(n) hash evaluations."""
    rng = np.random.default_rng(seed)
    leaves = [rng.bytes(32) for _ in range(n_items)]
    targets = rng.choice(n_items, size=min(ops, n_items), replace=False).tolist()
    fresh = [rng.bytes(32) for _ in targets]
    rounds = [_mht_round(leaves, targets, fresh) for _ in range(repetitions)]

    sample = MerkleTree.build(leaves[:n_items])
    before = sample.hash_count
    sample.update_leaf(0, fresh[0])
    update_hashes = sample.hash_count - before

    result = BenchResult(
        experiment="bench-mht",
        params={"items": n_items, "ops": len(targets), "depth": sample.depth},
    )
    for k, op in enumerate(("insert", "query", "delete")):
        mean, sd = summarize_us([r[k] for r in rounds])
        result.add(op, mean, "us", repetitions=repetitions, stdev=sd)
        result.add(f"reference_{op}", REFERENCE_MHT_US[op], "us")
    result.add("update_hashes", update_hashes, "hashes")
    result.add("path_length", len(sample.prove_membership(0)), "nodes")
    result.passed = update_hashes == sample.depth
    return result


def compare_speedups(filter_result: BenchResult, mht_result: BenchResult) -> BenchResult:
    result = BenchResult(
        experiment="filter-vs-mht",
        params={"items": filter_result.params.get("items"), "bar": SPEEDUP_BAR},
    )
    ratios = []
    for op in ("insert", "query", "delete"):
        ratio = mht_result.value(op) / filter_result.value(op)
        ratios.append(ratio)
        result.add(f"{op}_speedup", ratio, "x")
    result.passed = all(r >= SPEEDUP_BAR for r in ratios)
    return result


# -- false-positive rate ------------------------------------------------------------


def _fill(f: CuckooFilter, items: Sequence[tuple[int, int]]) -> int:
    done = 0
    for fp, h1 in items:
        if not f.insert(fp, h1):
            break
        done += 1
    return done


def _fpr(f: CuckooFilter, negatives: Sequence[tuple[int, int]]) -> float:
    return sum(f.query(fp, h1) for fp, h1 in negatives) / len(negatives)


def fpr_bound(config: FilterConfig) -> float:
    """Worst case 2b/2^f, reached with every slot full."""
    return 2 * config.entries_per_bucket / math.pow(2, config.fingerprint_bits)


def expected_fpr(config: FilterConfig, load: float) -> float:
    """Chance a random fingerprint matches one of the 2b slots it is compared with."""
    slots = 2 * config.entries_per_bucket * load
    return 1.0 - (1.0 - 1.0 / ((1 << config.fingerprint_bits) - 1)) ** slots


def measure_fpr(
    config: FilterConfig,
    items: int,
    negatives: int = 1_000_000,
    *,
    seed: int = 0,
    fill_to: float = 0.9,
) -> BenchResult:
    """Measured FPR at the configured item count and again with the table filled
    to ``fill_to`` load, against random (fingerprint, bucket) negatives."""
    rng = np.random.default_rng(seed)
    f = CuckooFilter(config)
    inserted = _fill(f, _random_items(items, config.fingerprint_bits, rng))
    negs = _random_items(negatives, config.fingerprint_bits, rng)

    result = BenchResult(
        experiment=f"fpr-f{config.fingerprint_bits}",
        params={
            "buckets": config.bucket_count,
            "entries_per_bucket": config.entries_per_bucket,
            "fp_bits": config.fingerprint_bits,
            "items": inserted,
            "negatives": negatives,
        },
    )
    load = f.load_factor
    result.add("load", load, "fraction")
    result.add("fpr", _fpr(f, negs), "fraction", repetitions=negatives)
    result.add("fpr_expected", expected_fpr(config, load), "fraction")

    target = int(fill_to * config.slot_count) - f.item_count
    if target > 0:
        _fill(f, _random_items(target, config.fingerprint_bits, rng))
    full_load = f.load_factor
    result.add("load_full", full_load, "fraction")
    result.add("fpr_full", _fpr(f, negs), "fraction", repetitions=negatives)
    result.add("fpr_full_expected", expected_fpr(config, full_load), "fraction")
    result.add("fpr_bound", fpr_bound(config), "fraction")
    return result


# -- storage ----------------------------------------------------------------------------


def bench_storage(config: PipelineConfig, n_entries: int = FULL_SCALE_ITEMS) -> BenchResult:
    """Serialized sizes of key_list, model_link and the filter table."""
    keys = KeyList()
    for i in range(n_entries):
        keys.append(KeyEntry(kid=i + 1, shard=0, slice_index=1))
    key_bytes = keys.serialized_size

    enclave = EnclaveSimulator()
    store = LineageStore(
        eid=bytes(32),
        mac_key=os.urandom(16),
        prf_key=os.urandom(16),
        fresh_seed=enclave.fresh_seed,
        filter_config=config.filter,
    )
    n_models = config.n_shards * config.n_slices
    zeros = np.zeros(config.dims.input_dim, dtype=np.float32)
    for k in range(n_models):
        point = DataPoint(zeros + k, label=0)
        shard, sl = divmod(k, config.n_slices)
        store.commit_add(point.kid, point.encode(), None, Placement(shard, sl + 1, True))
        model = init_model(config.dims, config.seed + k)
        store.store_submodel(point.kid, canonical_bytes(replace(model, slice_index=sl + 1)))
    model_bytes = len(store.model_link)
    record_bytes = len(store.data_store) / n_models

    filter_blob = CuckooFilter(config.filter).serialize()
    cfg = config.filter
    formula = cfg.bucket_count * cfg.entries_per_bucket * cfg.fingerprint_bits // 8
    reference = n_models * DEFAULT_MODEL_BYTES

    result = BenchResult(
        experiment="bench-storage",
        params={"entries": n_entries, "submodels": n_models, "hidden_dim": config.dims.hidden_dim},
    )
    result.add("key_list_bytes", key_bytes, "B")
    result.add("key_list_bytes_per_entry", key_bytes / max(n_entries, 1), "B")
    result.add("model_link_bytes", model_bytes, "B")
    result.add("model_link_reference", reference, "B")
    result.add("data_record_bytes", record_bytes, "B")
    result.add("filter_table_bytes", cfg.table_bytes, "B")
    result.add("filter_serialized_bytes", len(filter_blob), "B")
    checks = [key_bytes <= ENTRY_SIZE * n_entries, cfg.table_bytes == formula]
    if config.dims == ModelDims():
        checks.append(abs(model_bytes - reference) <= 0.1 * reference)
    result.passed = all(checks)
    return result


# -- unlearning cost ---------------------------------------------------------------------


def _trained_server(
    dataset: Dataset, config: PipelineConfig
) -> tuple[UnlearningServer, ShardPlan]:
    plan = ShardPlan.build(dataset.kids, config.n_shards, config.n_slices, config.seed)
    server = UnlearningServer(config)
    setup_phase(server, dataset, [pin_owner(server)], plan=plan)
    return server, plan


def bench_unlearn(
    dataset: Dataset,
    config: PipelineConfig,
    *,
    repetitions: int = MIN_TIMING_REPS,
    shard: int = 0,
    seed: int = 0,
) -> BenchResult:
    """Delete one point from each slice position in turn and time the relearn.

    Deleting from slice i must retrain exactly s - i + 1 submodels.
    """
    server, plan = _trained_server(dataset, config)
    s = config.n_slices
    rng = np.random.default_rng(seed)
    deleted: set[int] = set()
    per_pos: dict[int, list[tuple[float, float, int]]] = {i: [] for i in range(1, s + 1)}
    rows = []
    for rep in range(repetitions):
        for i in range(1, s + 1):
            live = [k for k in plan.slice_kids(shard, i) if k not in deleted]
            if not live:
                raise ValueError(f"slice {i} of shard {shard} ran out of points to delete")
            kid = live[int(rng.integers(len(live)))]
            deleted.add(kid)
            mark = len(server.timings)
            receipt = server.delete([kid])
            server.prove_learning(receipt.c)
            steps = server.timings[mark:]
            train = sum(t.train_s for t in steps)
            overhead = sum(t.checkpoint_s + t.restore_s for t in steps)
            retrained = len(server.retrain_log[-1].get(shard, ()))
            per_pos[i].append((train, overhead, retrained))
            rows.append(
                {
                    "rep": rep,
                    "position": i,
                    "retrained": retrained,
                    "expected": s - i + 1,
                    "train_s": train,
                    "ckpt_restore_s": overhead,
                }
            )

    result = BenchResult(
        experiment="bench-unlearn",
        params={"slices": s, "shards": config.n_shards, "points": len(dataset)},
        rows=rows,
    )
    means = []
    worst_ratio = 0.0
    for i, samples in per_pos.items():
        times = [t for t, _, _ in samples]
        mean = float(np.mean(times))
        means.append(mean)
        result.add(f"retrain_s[{i}]", mean, "s", repetitions=len(times), stdev=float(np.std(times)))
        for train, overhead, _ in samples:
            if train > 0:
                worst_ratio = max(worst_ratio, overhead / train)
    result.add("ckpt_restore_over_train_max", worst_ratio, "fraction")
    counts_ok = all(r["retrained"] == r["expected"] for r in rows)
    result.passed = counts_ok and nonincreasing(means) and worst_ratio < 0.05
    return result


def verification_cost(
    dataset: Dataset,
    config: PipelineConfig,
    slice_counts: Sequence[int] = (1, 3, 6, 12),
    *,
    seed: int = 0,
) -> BenchResult:
    """Signature checks per assertion after one deletion, for several slice counts."""
    rows = []
    for s in slice_counts:
        cfg = replace(config, n_slices=s)
        server, plan = _trained_server(dataset, cfg)
        owner = pin_owner(server, seed=seed)
        kid = plan.slice_kids(0, 1)[0]
        point = next(p for p in dataset if p.kid == kid)
        result = deletion_phase(server, [owner], [point], check_membership=False)

        fresh = pin_owner(server).verifier
        counts = {}
        fresh.reset_counters()
        fresh.verify_receipt(result.receipt)
        counts["receipt"] = fresh.signature_checks
        fresh.reset_counters()
        fresh.verify_learn(result.learn)
        counts["learn"] = fresh.signature_checks
        fresh.reset_counters()
        fresh.verify_predict(result.predict, result.challenge)
        counts["predict"] = fresh.signature_checks
        rows.append(
            {
                "slices": s,
                "retrained": sum(len(v) for v in server.retrain_log[-1].values()),
                "accepted": result.accepted,
                **{f"sig_checks_{k}": v for k, v in counts.items()},
            }
        )
    out = BenchResult(experiment="verification-cost", params={"points": len(dataset)}, rows=rows)
    out.passed = all(
        r["accepted"] and r["sig_checks_receipt"] == r["sig_checks_learn"] == 1
        and r["sig_checks_predict"] == 1
        for r in rows
    )
    return out


# -- exactness ---------------------------------------------------------------------------


def live_submodels(model_link: RecordLog) -> dict[tuple[int, int], bytes]:
    """Current (shard, slice) -> canonical model bytes, read as the host sees them."""
    out: dict[tuple[int, int], bytes] = {}
    for _, dead, payload in model_link.scan():
        if not dead:
            out[model_record_placement(payload)] = payload[MODEL_HEADER_SIZE:]
    return out


def exactness_trials(
    base: PipelineConfig,
    *,
    trials: int = 20,
    max_points: int = 2000,
    seed: int = 0,
) -> BenchResult:
    """Unlearn through the enclave, then compare every submodel with a from-scratch
    retrain on the surviving data (same plan, same seeds). Equality is bytewise."""
    rng = np.random.default_rng(seed)
    rows = []
    for trial in range(trials):
        cfg = replace(
            base,
            n_shards=int(rng.choice([1, 2])),
            n_slices=int(rng.choice([1, 3, 6])),
            seed=int(rng.integers(0, 1 << 31)),
        )
        n = int(rng.integers(max(12, max_points // 4), max_points + 1))
        data, _ = gen_dataset(
            n, 0, dim=cfg.dims.input_dim, classes=cfg.dims.class_count, seed=cfg.seed
        )
        server, plan = _trained_server(data, cfg)
        kid = data.kids[int(rng.integers(len(data.kids)))]
        receipt = server.delete([kid])
        server.prove_learning(receipt.c)

        oracle = SisaPipeline.from_config(data, cfg, plan=plan.without([kid]))
        oracle.train()
        expected = {
            (j, i): canonical_bytes(oracle.submodel(j, i))
            for j in range(cfg.n_shards)
            for i in range(1, cfg.n_slices + 1)
        }
        identical = live_submodels(server.model_link) == expected
        rows.append(
            {
                "trial": trial,
                "shards": cfg.n_shards,
                "slices": cfg.n_slices,
                "points": n,
                "position": plan.locate(kid)[1],
                "identical": identical,
            }
        )
        logger.debug("exactness trial %s: %s", trial, identical)
    result = BenchResult(experiment="exactness", params={"trials": trials}, rows=rows)
    result.passed = all(r["identical"] for r in rows)
    return result


# -- sweeps -------------------------------------------------------------------------------


def _accuracy(train: Dataset, test: Dataset, config: PipelineConfig) -> float:
    pipeline = SisaPipeline.from_config(train, config)
    pipeline.train()
    return pipeline.accuracy(test.features, test.labels)


def sweep_slices(
    train: Dataset,
    test: Dataset,
    config: PipelineConfig,
    slice_counts: Sequence[int] = (1, 3, 6, 12),
    *,
    schedule: str = "budget",
    spread: float = 0.03,
) -> BenchResult:
    """Aggregated accuracy per slice count at a fixed epochs-over-data budget."""
    rows = []
    for s in slice_counts:
        cfg = replace(config, n_slices=s, epoch_schedule=schedule)
        rows.append({"slices": s, "accuracy": _accuracy(train, test, cfg)})
        logger.info("slice sweep s=%s accuracy=%.4f", s, rows[-1]["accuracy"])
    accs = [r["accuracy"] for r in rows]
    result = BenchResult(
        experiment="sweep-slices",
        params={"schedule": schedule, "epochs": config.hyperparams.epochs, "points": len(train)},
        rows=rows,
    )
    result.add("accuracy_spread", max(accs) - min(accs), "fraction")
    result.passed = max(accs) - min(accs) <= spread
    return result


def sweep_hparams(
    train: Dataset,
    test: Dataset,
    config: PipelineConfig,
    *,
    epochs: Sequence[int] = (5, 10, 22),
    batches: Sequence[int] = (8000, 4000, 2000, 1000),
    fixed_batch: int = 1000,
    fixed_epochs: int = 20,
    tolerance: float = 0.0,
    min_accuracy: float = ACCURACY_BAR,
) -> BenchResult:
    """Epoch sweep at a fixed batch size, then batch sweep at fixed epochs.

    Passes when accuracy does not drop as epochs grow and the longest run at
    ``fixed_batch`` reaches ``min_accuracy``.
    """
    rows = []
    for e in epochs:
        hp = replace(config.hyperparams, epochs=e, batch_size=fixed_batch)
        acc = _accuracy(train, test, replace(config, hyperparams=hp))
        rows.append({"sweep": "epochs", "epochs": e, "batch": fixed_batch, "accuracy": acc})
    for b in batches:
        hp = replace(config.hyperparams, epochs=fixed_epochs, batch_size=b)
        acc = _accuracy(train, test, replace(config, hyperparams=hp))
        rows.append({"sweep": "batch", "epochs": fixed_epochs, "batch": b, "accuracy": acc})
    by_epochs = [r["accuracy"] for r in rows if r["sweep"] == "epochs"]
    result = BenchResult(
        experiment="sweep-hparams",
        params={
            "points": len(train),
            "lr": config.hyperparams.learning_rate,
            "min_accuracy": min_accuracy,
        },
        rows=rows,
    )
    at_max = max(
        (r for r in rows if r["sweep"] == "epochs"), key=lambda r: r["epochs"], default=None
    )
    if at_max is not None:
        result.add("accuracy_at_max_epochs", at_max["accuracy"], "fraction")
    result.passed = (
        at_max is not None
        and at_max["accuracy"] >= min_accuracy
        and nondecreasing(by_epochs, tolerance=tolerance)
    )
    return result
