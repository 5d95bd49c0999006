"""Integrity-attack simulator.

A dishonest host owns the data_store and model_link buffers and may run as
many enclave instances as it likes. Each strategy tampers with an honest,
trained session, then the tampered state is put through the same check an
owner relies on: an enclave scrub (which halts with the attack class) or the
owner's pinned verifier. A trial counts as rejected when either fires. The
buffers are restored between trials.
"""

from __future__ import annotations

import logging
import os
from collections import Counter
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from ..core.config import PipelineConfig
from ..core.dataset import Dataset
from ..core.enclave.sgx import EnclaveSimulator
from ..core.errors import IntegrityError
from ..core.lineage.auth import MODEL_HEADER_SIZE, model_record_placement
from ..core.lineage.record_log import RecordLog
from ..core.protocol.phases import deletion_phase, pin_owner, setup_phase
from ..core.protocol.server import UnlearningServer
from ..core.protocol.verifier import DataOwner
from ..core.sisa.plan import ShardPlan
from .experiments import fpr_bound
from .results import BenchResult

logger = logging.getLogger(__name__)

STRATEGIES = (
    "forge-model",
    "fork-instance",
    "replace-data",
    "relocate-submodel",
    "rollback-submodel",
    "stale-proof-replay",
)


@dataclass(slots=True)
class AttackOutcome:
    strategy: str
    trials: int = 0
    rejected: int = 0
    detected_by: Counter[str] = field(default_factory=Counter)

    @property
    def detection_rate(self) -> float:
        return self.rejected / self.trials if self.trials else 0.0


@dataclass(slots=True)
class Arena:
    """An honest session after setup and one deletion, plus the host's stale copies."""

    server: UnlearningServer
    owner: DataOwner
    dataset: Dataset
    plan: ShardPlan
    stale: UnlearningServer
    stale_h_model: bytes
    rng: np.random.Generator


def _frames(log: RecordLog, *, live: bool) -> list[tuple[int, bytes]]:
    return [(off, p) for off, dead, p in log.scan() if dead != live]


def _snapshot(server: UnlearningServer) -> tuple[bytes, bytes]:
    return bytes(server.data_store.raw), bytes(server.model_link.raw)


def _restore(server: UnlearningServer, snap: tuple[bytes, bytes]) -> None:
    server.data_store.raw[:] = snap[0]
    server.model_link.raw[:] = snap[1]


def build_arena(dataset: Dataset, config: PipelineConfig, *, seed: int = 0) -> Arena:
    """Honest setup, a sealed snapshot, then one deletion from slice 1 of shard 0.

    The snapshot is what a host can legitimately keep: the sealed blob and
    its own buffers. Reloading it on the same platform yields an enclave with
    the same key and eid but the pre-deletion model.
    """
    secret = os.urandom(32)
    server = UnlearningServer(config, enclave=EnclaveSimulator(platform_secret=secret))
    owner = pin_owner(server, seed=seed)
    plan = ShardPlan.build(dataset.kids, config.n_shards, config.n_slices, config.seed)
    setup = setup_phase(server, dataset, [owner], plan=plan)
    sealed = server.seal()
    data_raw, model_raw = _snapshot(server)

    kid = plan.slice_kids(0, 1)[0]
    point = next(p for p in dataset if p.kid == kid)
    deletion_phase(server, [owner], [point])

    stale = UnlearningServer(
        config,
        enclave=EnclaveSimulator(platform_secret=secret),
        sid=server.sid,
        data_store=RecordLog("data_store", data_raw),
        model_link=RecordLog("model_link", model_raw),
        sealed=sealed,
    )
    return Arena(
        server=server,
        owner=owner,
        dataset=dataset,
        plan=plan,
        stale=stale,
        stale_h_model=bytes.fromhex(setup.learn.h_model),
        rng=np.random.default_rng(seed),
    )


def _scrub(arena: Arena) -> str | None:
    """Attack class reported by the enclave, or None if the scrub passed."""
    try:
        report = arena.server.integrity_scrub()
    except IntegrityError as exc:
        return exc.attack_class
    verdict = arena.owner.verifier.verify_scrub(report)
    return None if verdict else f"verifier: {verdict.reason}"


def _verdict(ok: object) -> str | None:
    return None if ok else f"verifier: {getattr(ok, 'reason', 'rejected')}"


# -- strategies ------------------------------------------------------------------------


def forge_model(arena: Arena) -> str | None:
    """Serve from a model the enclave never trained.

    Either the host perturbs a stored submodel, or it hands the owner a
    prediction proof whose h_model it chose itself.
    """
    rng = arena.rng
    if rng.random() < 0.5:
        off, payload = _pick(rng, _frames(arena.server.model_link, live=True))
        forged = bytearray(payload)
        k = int(rng.integers(MODEL_HEADER_SIZE, len(forged)))
        forged[k] ^= 1 << int(rng.integers(0, 8))
        arena.server.model_link.overwrite(off, bytes(forged))
        return _scrub(arena)
    t = arena.owner.challenge(arena.server.config.dims.input_dim)
    honest = arena.server.prove_prediction(t, arena.owner.verifier.latest_h_model or b"")
    fake = honest.model_copy(update={"h_model": rng.bytes(32).hex()})
    return _verdict(arena.owner.verifier.verify_predict(fake, t))


def fork_instance(arena: Arena) -> str | None:
    """A second enclave on the same host commits data and answers the owner."""
    fork = UnlearningServer(arena.server.config, sid=arena.server.sid)
    idx = arena.rng.choice(len(arena.dataset), size=min(4, len(arena.dataset)), replace=False)
    points = [arena.dataset.point(int(i)) for i in idx]
    receipt = fork.commit_plan(
        {p.kid: p for p in points},
        ShardPlan([[[p.kid for p in points]]]),
    )[-1]
    return _verdict(arena.owner.verifier.verify_receipt(receipt))


def replace_data(arena: Arena) -> str | None:
    """Swap the payloads of two live data records, or corrupt one in place."""
    rng = arena.rng
    live = _frames(arena.server.data_store, live=True)
    a_off, a = _pick(rng, live)
    same = [(o, p) for o, p in live if o != a_off and len(p) == len(a)]
    if same and rng.random() < 0.5:
        b_off, b = _pick(rng, same)
        arena.server.data_store.overwrite(a_off, b)
        arena.server.data_store.overwrite(b_off, a)
    else:
        bad = bytearray(a)
        k = int(rng.integers(8, len(bad)))
        bad[k] ^= 1 << int(rng.integers(0, 8))
        arena.server.data_store.overwrite(a_off, bytes(bad))
    return _scrub(arena)


def relocate_submodel(arena: Arena) -> str | None:
    """Copy one valid submodel record over another (shard, slice)."""
    rng = arena.rng
    live = _frames(arena.server.model_link, live=True)
    if len(live) < 2:
        raise ValueError("relocation needs at least two stored submodels")
    a_off, _ = _pick(rng, live)
    _, b = _pick(rng, [(o, p) for o, p in live if o != a_off])
    arena.server.model_link.overwrite(a_off, b)
    return _scrub(arena)


def rollback_submodel(arena: Arena) -> str | None:
    """Put a superseded version of a submodel back where the current one lives."""
    rng = arena.rng
    log = arena.server.model_link
    live = {model_record_placement(p): off for off, p in _frames(log, live=True)}
    old = [
        (live[place], p)
        for _, p in _frames(log, live=False)
        if (place := model_record_placement(p)) in live
    ]
    if not old:
        raise ValueError("no superseded submodel versions to roll back to")
    off, payload = _pick(rng, old)
    arena.server.model_link.overwrite(off, payload)
    return _scrub(arena)


def stale_proof_replay(arena: Arena) -> str | None:
    """Answer a fresh challenge from the pre-deletion enclave state."""
    t = arena.owner.challenge(arena.server.config.dims.input_dim)
    proof = arena.stale.prove_prediction(t, arena.stale_h_model)
    return _verdict(arena.owner.verifier.verify_predict(proof, t))


def _pick(rng: np.random.Generator, items: list[tuple[int, bytes]]) -> tuple[int, bytes]:
    if not items:
        raise ValueError("nothing to tamper with")
    return items[int(rng.integers(0, len(items)))]


ATTACKS: dict[str, Callable[[Arena], str | None]] = {
    "forge-model": forge_model,
    "fork-instance": fork_instance,
    "replace-data": replace_data,
    "relocate-submodel": relocate_submodel,
    "rollback-submodel": rollback_submodel,
    "stale-proof-replay": stale_proof_replay,
}


def run_attack(arena: Arena, strategy: str, trials: int = 100) -> AttackOutcome:
    attack = ATTACKS[strategy]
    outcome = AttackOutcome(strategy)
    for _ in range(trials):
        snap = _snapshot(arena.server)
        try:
            detected = attack(arena)
        finally:
            _restore(arena.server, snap)
        outcome.trials += 1
        if detected is not None:
            outcome.rejected += 1
            outcome.detected_by[detected] += 1
        else:
            logger.warning("%s trial went undetected", strategy)
    return outcome


def attack_sim(
    dataset: Dataset,
    config: PipelineConfig,
    *,
    trials: int = 100,
    strategies: tuple[str, ...] = STRATEGIES,
    seed: int = 0,
) -> BenchResult:
    """Run every strategy ``trials`` times; passes only if all trials are rejected."""
    if config.n_slices * config.n_shards < 2:
        raise ValueError("attack-sim needs at least two submodels (shards x slices >= 2)")
    arena = build_arena(dataset, config, seed=seed)
    rows = []
    for name in strategies:
        out = run_attack(arena, name, trials)
        rows.append(
            {
                "strategy": name,
                "trials": out.trials,
                "rejected": out.rejected,
                "detection_rate": out.detection_rate,
                "detected_by": ";".join(f"{k}={v}" for k, v in sorted(out.detected_by.items())),
            }
        )
        logger.info("%s: %s/%s rejected", name, out.rejected, out.trials)
    result = BenchResult(
        experiment="attack-sim",
        params={"trials": trials, "points": len(dataset), "slices": config.n_slices},
        rows=rows,
    )
    result.add("replace_data_fpr_bound", fpr_bound(config.filter), "fraction")
    result.add(
        "replace_data_detection_floor",
        1 - fpr_bound(config.filter),
        "fraction",
    )
    result.passed = all(r["rejected"] == r["trials"] for r in rows)
    return result


__all__ = [
    "ATTACKS",
    "STRATEGIES",
    "Arena",
    "AttackOutcome",
    "attack_sim",
    "build_arena",
    "run_attack",
]
