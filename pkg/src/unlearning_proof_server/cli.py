"""Command-line driver.

Protocol commands (setup, challenge, delete, membership, audit,
verify-transcript) act on a session workspace and print JSON. Benchmark
commands print a result table and write ``<experiment>.json`` (and ``.csv``)
to the results directory.

Exit status: 0 on success, 1 on a protocol/integrity error or any failed
verification or benchmark check, 2 on a bad configuration value.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from collections.abc import Awaitable, Callable, Sequence
from typing import Any

from unlearning_proof_server.bench import attacks, datasets, experiments
from unlearning_proof_server.bench.results import BenchResult, write_result
from unlearning_proof_server.core.config import (
    LOG_LEVEL_ENV,
    PipelineConfig,
    build_pipeline_config,
    resolve_results_dir,
)
from unlearning_proof_server.core.dataset import Dataset, read_dataset
from unlearning_proof_server.core.errors import UnlearningProofError
from unlearning_proof_server.tools import protocol as tools

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

DESK_ITEMS = 3_500
DESK_BUCKETS = 1 << 12


def _configure_logging() -> None:
    level_name = os.getenv(LOG_LEVEL_ENV, "INFO").upper()
    level = getattr(logging, level_name, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


# -- argument groups ----------------------------------------------------------------------


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--shards", type=int)
    g.add_argument("--slices", type=int)
    g.add_argument("--batch", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--hidden", type=int, help="hidden layer width (default 128)")
    g.add_argument("--workers", type=int, help="shard-parallel training workers")
    g.add_argument("--fp-bits", type=int)
    g.add_argument("--buckets", type=int)
    g.add_argument("--entries-per-bucket", type=int)


def _data_flags(p: argparse.ArgumentParser, *, points: int, test_points: int = 0) -> None:
    p.add_argument("--dataset", help="dataset file in the import format (default: synthetic)")
    p.add_argument("--points", type=int, default=points, help="synthetic training points")
    if test_points:
        p.add_argument("--test-points", type=int, default=test_points)


def _workspace_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workspace", help="session directory (default: POUL_WORKSPACE or ./.poul)")


def _results_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--results-dir", help="default: POUL_RESULTS_DIR or ./results")


def _config(args: argparse.Namespace, **overrides: Any) -> PipelineConfig:
    opts = {
        "shards": args.shards,
        "slices": args.slices,
        "batch": args.batch,
        "epochs": args.epochs,
        "lr": args.lr,
        "seed": args.seed,
        "fp_bits": args.fp_bits,
        "buckets": args.buckets,
        "entries_per_bucket": args.entries_per_bucket,
        "max_workers": args.workers,
    }
    if args.hidden is not None:
        opts["dims"] = (datasets.FEATURE_DIM, args.hidden, 2)
    opts.update({k: v for k, v in overrides.items() if opts.get(k) is None})
    return build_pipeline_config(**opts)


def _load_data(args: argparse.Namespace, config: PipelineConfig) -> tuple[Dataset, Dataset]:
    """(train, test); an imported file is split 90/10 when a test set is needed."""
    n_test = getattr(args, "test_points", 0)
    if args.dataset:
        data = asyncio.run(read_dataset(args.dataset))
        if not n_test:
            return data, data.subset([])
        cut = len(data) * 9 // 10
        return data.subset(range(cut)), data.subset(range(cut, len(data)))
    return datasets.gen_dataset(
        args.points,
        n_test,
        dim=config.dims.input_dim,
        classes=config.dims.class_count,
        seed=config.seed,
    )


def _emit_bench(args: argparse.Namespace, *results: BenchResult) -> int:
    out = resolve_results_dir(args.results_dir)
    for result in results:
        print(result.render())
        path = asyncio.run(write_result(result, out))
        print(f"  -> {path}")
    return EXIT_FAILED if any(r.passed is False for r in results) else EXIT_OK


def _emit_json(payload: dict[str, Any], *, ok_keys: Sequence[str] = ("accepted",)) -> int:
    print(json.dumps(payload, indent=2, default=str))
    return EXIT_OK if all(payload.get(k, True) for k in ok_keys) else EXIT_FAILED


# -- protocol commands ---------------------------------------------------------------------


def cmd_setup(args: argparse.Namespace) -> int:
    payload = asyncio.run(
        tools.setup_impl(
            workspace=args.workspace,
            dataset_path=args.dataset,
            points=args.points,
            shards=args.shards,
            slices=args.slices,
            batch=args.batch,
            epochs=args.epochs,
            lr=args.lr,
            seed=args.seed,
            fp_bits=args.fp_bits,
            buckets=args.buckets,
            entries_per_bucket=args.entries_per_bucket,
        )
    )
    return _emit_json(payload)


def _session_cmd(
    impl: Callable[..., Awaitable[dict[str, Any]]], *, ok_keys: Sequence[str] = ("accepted",)
) -> Callable[[argparse.Namespace], int]:
    def run(args: argparse.Namespace) -> int:
        kwargs = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
        return _emit_json(asyncio.run(impl(**kwargs)), ok_keys=ok_keys)

    return run


# -- benchmark commands --------------------------------------------------------------------


def cmd_gen_dataset(args: argparse.Namespace) -> int:
    train, test = datasets.gen_dataset(
        args.train, args.test, dim=args.dim, classes=args.classes, seed=args.seed, flip=args.flip
    )
    train_path, test_path = asyncio.run(datasets.write_split(args.out, train, test))
    print(f"{train_path} ({len(train)} records)\n{test_path} ({len(test)} records)")
    return EXIT_OK


def cmd_bench_filter(args: argparse.Namespace) -> int:
    cfg = _config(args, buckets=DESK_BUCKETS).filter
    timing = experiments.bench_filter(cfg, args.items, repetitions=args.repetitions)
    fpr = experiments.measure_fpr(cfg, args.items, args.negatives, seed=args.seed or 0)
    return _emit_bench(args, timing, fpr)


def cmd_bench_mht(args: argparse.Namespace) -> int:
    cfg = _config(args, buckets=1 << 16).filter
    reps = args.repetitions
    mht = experiments.bench_mht(args.items, repetitions=reps)
    filt = experiments.bench_filter(cfg, args.items, repetitions=reps)
    return _emit_bench(args, mht, experiments.compare_speedups(filt, mht))


def cmd_bench_unlearn(args: argparse.Namespace) -> int:
    cfg = _config(args)
    train, _ = _load_data(args, cfg)
    result = experiments.bench_unlearn(train, cfg, repetitions=args.repetitions)
    cost = experiments.verification_cost(train, cfg)
    return _emit_bench(args, result, cost)


def cmd_bench_storage(args: argparse.Namespace) -> int:
    return _emit_bench(args, experiments.bench_storage(_config(args), args.entries))


def cmd_bench_exactness(args: argparse.Namespace) -> int:
    cfg = _config(args, epochs=2, dims=(datasets.FEATURE_DIM, 32, 2))
    result = experiments.exactness_trials(
        cfg, trials=args.trials, max_points=args.points, seed=args.seed or 0
    )
    return _emit_bench(args, result)


def cmd_attack_sim(args: argparse.Namespace) -> int:
    cfg = _config(args, slices=3, epochs=1)
    train, _ = _load_data(args, cfg)
    return _emit_bench(args, attacks.attack_sim(train, cfg, trials=args.trials))


def cmd_sweep_slices(args: argparse.Namespace) -> int:
    cfg = _config(args)
    train, test = _load_data(args, cfg)
    return _emit_bench(args, experiments.sweep_slices(train, test, cfg))


def cmd_sweep_hparams(args: argparse.Namespace) -> int:
    cfg = _config(args)
    train, test = _load_data(args, cfg)
    return _emit_bench(args, experiments.sweep_hparams(train, test, cfg))


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poul", description="Proof-of-unlearning sessions and benchmarks."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("setup", help="commit, learn and verify a new session")
    _pipeline_flags(p)
    _data_flags(p, points=tools.DEFAULT_POINTS)
    _workspace_flag(p)
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("challenge", help="verify one prediction on a random input")
    _workspace_flag(p)
    p.set_defaults(func=_session_cmd(tools.challenge_impl))

    p = sub.add_parser("delete", help="delete dataset rows and verify the unlearning")
    p.add_argument("indices", type=int, nargs="+", help="dataset row indices")
    p.add_argument("--requester")
    _workspace_flag(p)
    p.set_defaults(func=_session_cmd(tools.delete_impl))

    p = sub.add_parser("membership", help="enclave-signed membership of one row")
    p.add_argument("index", type=int)
    _workspace_flag(p)
    p.set_defaults(func=_session_cmd(tools.membership_impl))

    p = sub.add_parser("audit", help="run challenges under an auditing enclave")
    p.add_argument("--challenges", type=int, default=3)
    _workspace_flag(p)
    p.set_defaults(
        func=_session_cmd(tools.audit_impl, ok_keys=("report_accepted", "owner_accepted"))
    )

    p = sub.add_parser("verify-transcript", help="replay the stored transcript offline")
    _workspace_flag(p)
    p.set_defaults(func=_session_cmd(tools.verify_transcript_impl))

    p = sub.add_parser("gen-dataset", help="write a synthetic train/test split")
    p.add_argument("--train", type=int, default=datasets.FULL_TRAIN)
    p.add_argument("--test", type=int, default=datasets.FULL_TEST)
    p.add_argument("--dim", type=int, default=datasets.FEATURE_DIM)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--flip", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_gen_dataset)

    for name, func, items in (
        ("bench-filter", cmd_bench_filter, DESK_ITEMS),
        ("bench-mht", cmd_bench_mht, experiments.FULL_SCALE_ITEMS),
    ):
        p = sub.add_parser(name, help=f"{name.removeprefix('bench-')} operation timings")
        _pipeline_flags(p)
        _results_flag(p)
        p.add_argument("--items", type=int, default=items)
        p.add_argument("--repetitions", type=int, default=5)
        if name == "bench-filter":
            p.add_argument("--negatives", type=int, default=1_000_000)
        p.set_defaults(func=func)

    p = sub.add_parser("bench-unlearn", help="relearn cost per deletion position")
    _pipeline_flags(p)
    _data_flags(p, points=6_000)
    _results_flag(p)
    p.add_argument("--repetitions", type=int, default=5)
    p.set_defaults(func=cmd_bench_unlearn)

    p = sub.add_parser("bench-storage", help="sizes of key_list, model_link and filter")
    _pipeline_flags(p)
    _results_flag(p)
    p.add_argument("--entries", type=int, default=experiments.FULL_SCALE_ITEMS)
    p.set_defaults(func=cmd_bench_storage)

    p = sub.add_parser("bench-exactness", help="unlearned submodels vs retraining from scratch")
    _pipeline_flags(p)
    _results_flag(p)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--points", type=int, default=2_000, help="max points per trial")
    p.set_defaults(func=cmd_bench_exactness)

    p = sub.add_parser("attack-sim", help="run every tamper strategy against a session")
    _pipeline_flags(p)
    _data_flags(p, points=600)
    _results_flag(p)
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_attack_sim)

    for name, func in (("sweep-slices", cmd_sweep_slices), ("sweep-hparams", cmd_sweep_hparams)):
        p = sub.add_parser(name, help="accuracy sweep")
        _pipeline_flags(p)
        _data_flags(p, points=12_000, test_points=3_000)
        _results_flag(p)
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> None:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except UnlearningProofError as exc:
        LOGGER.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_FAILED
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    sys.exit(code)


if __name__ == "__main__":
    main()
