"""The four enclave programs: prog_k, prog_c, prog_t and prog_p.

Each program takes an :class:`EnclaveContext` and a request object, touches
only in-enclave state (``ctx.mem``) and the checked stores, and returns the
canonical payload that the enclave signs. The request classes expose
``canonical()`` so monitors can log an input digest.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..config import PipelineConfig
from ..dataset import DataPoint, kid_of
from ..enclave.sgx import EnclaveContext, EnclaveProgram, EnclaveSimulator, ProgramResult
from ..errors import StaleCommitment, WrongModel
from ..filter.cuckoo import CuckooFilter
from ..lineage.auth import LineageStore, Placement
from ..lineage.key_list import KeyList
from ..lineage.record_log import RecordLog
from ..ml.network import ModelParams, canonical_bytes, from_canonical_bytes
from ..sisa.trainer import SubmodelChain, aggregate_predict, incremental_train, initial_model
from . import messages as m

logger = logging.getLogger(__name__)

_U64 = struct.Struct("<Q")


@dataclass(frozen=True, slots=True)
class DeriveKid:
    content: bytes
    owner: str | None = None

    def canonical(self) -> bytes:
        return m.canonical(b"kid-req", self.content, (self.owner or "").encode("utf-8"))


@dataclass(frozen=True, slots=True)
class CommitAdd:
    items: tuple[tuple[bytes, Placement], ...]
    owner: str | None = None

    def canonical(self) -> bytes:
        h = hashlib.sha256()
        for data, p in self.items:
            h.update(data)
            h.update(struct.pack("<HH?", p.shard, p.slice_index, p.slice_final))
        return m.canonical(b"add-req", h.digest(), (self.owner or "").encode("utf-8"))


@dataclass(frozen=True, slots=True)
class CommitDel:
    kids: tuple[int, ...]
    requester: str | None = None

    def canonical(self) -> bytes:
        return m.canonical(
            b"del-req",
            b"".join(_U64.pack(k) for k in self.kids),
            (self.requester or "").encode("utf-8"),
        )


@dataclass(frozen=True, slots=True)
class QueryMembership:
    data: bytes

    def canonical(self) -> bytes:
        return m.canonical(b"member-req", self.data)


@dataclass(frozen=True, slots=True)
class OpenCommitment:
    def canonical(self) -> bytes:
        return b"open-req"


@dataclass(frozen=True, slots=True)
class Learn:
    c: bytes

    def canonical(self) -> bytes:
        return m.canonical(b"learn-req", self.c)


@dataclass(frozen=True, slots=True)
class Scrub:
    c: bytes

    def canonical(self) -> bytes:
        return m.canonical(b"scrub-req", self.c)


@dataclass(frozen=True, slots=True)
class Predict:
    t: bytes
    h_model: bytes

    def canonical(self) -> bytes:
        return m.canonical(b"predict-req", self.t, self.h_model)


@dataclass(frozen=True, slots=True)
class LearnOutcome:
    h_model: bytes
    chains: tuple[SubmodelChain, ...] = ()
    retrained: Mapping[int, tuple[int, ...]] = field(default_factory=dict)


# -- in-enclave adapters ---------------------------------------------------------


class CheckedSource:
    """Training rows fetched through the integrity-checked data path."""

    def __init__(self, store: LineageStore) -> None:
        self._store = store

    def rows(self, kids: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        points = [DataPoint.decode(self._store.fetch_data_checked(k)) for k in kids]
        if not points:
            return np.empty((0, 0), dtype=np.float32), np.empty(0, dtype=np.int64)
        x = np.stack([p.features for p in points]).astype(np.float32, copy=False)
        y = np.fromiter((p.label for p in points), dtype=np.int64, count=len(points))
        return x, y


class CheckedCheckpointer:
    """Submodels stored with fresh seeds and restored only if H(model || seed) holds."""

    def __init__(self, store: LineageStore, config: PipelineConfig) -> None:
        self._store = store
        self._dims = config.dims

    def restore(self, shard: int, slice_index: int) -> ModelParams:
        kid = self._store.final_kid(shard, slice_index)
        return from_canonical_bytes(self._store.restore_submodel_checked(kid), self._dims)

    def store(self, shard: int, slice_index: int, model: ModelParams) -> None:
        kid = self._store.final_kid(shard, slice_index)
        self._store.store_submodel(kid, canonical_bytes(model))


def _store(ctx: EnclaveContext) -> LineageStore:
    return ctx.mem["store"]


def _h_model(store: LineageStore) -> bytes:
    """H over the chain-final m_s_mac of every shard, in shard order."""
    h = hashlib.sha256()
    for shard in store.shards:
        h.update(store.submodel_mac(store.final_kid(shard, store.n_slices(shard))))
    return h.digest()


def _receipt(ctx: EnclaveContext, owner: str | None) -> bytes:
    store = _store(ctx)
    return m.receipt_payload(
        ctx.mem["sid"],
        store.filter.digest(),
        store.key_list.digest(),
        store.filter.item_count,
        owner,
        ctx.program_digest(m.PROG_C),
        ctx.program_digest(m.PROG_K),
    )


def _check_c(store: LineageStore, c: bytes) -> None:
    if c != store.filter.digest():
        raise StaleCommitment("supplied filter digest is not the enclave's current one")


# -- programs ---------------------------------------------------------------------


def prog_k(ctx: EnclaveContext, req: DeriveKid) -> ProgramResult:
    kid = kid_of(req.content, req.owner)
    return ProgramResult(m.canonical(b"kid", _U64.pack(kid)), kid)


def prog_c(ctx: EnclaveContext, req: object) -> ProgramResult:
    store = _store(ctx)
    if isinstance(req, CommitAdd):
        kids = []
        for data, placement in req.items:
            point = DataPoint.decode(data)
            kid = kid_of(point.content_bytes(), point.owner)
            store.commit_add(kid, data, point.owner, placement)
            kids.append(kid)
        return ProgramResult(_receipt(ctx, req.owner), tuple(kids))
    if isinstance(req, CommitDel):
        invalidated = store.delete_batch(req.kids, req.requester)
        return ProgramResult(_receipt(ctx, req.requester), invalidated)
    if isinstance(req, QueryMembership):
        point = DataPoint.decode(req.data)
        kid = kid_of(point.content_bytes(), point.owner)
        present = store.contains(kid, req.data, point.owner)
        payload = m.membership_payload(
            ctx.mem["sid"], kid, present, store.filter.digest(), ctx.program_digest(m.PROG_C)
        )
        return ProgramResult(payload, (kid, present))
    if isinstance(req, OpenCommitment):
        blobs = (store.filter.serialize(), store.key_list.serialize())
        payload = m.opening_payload(
            ctx.mem["sid"],
            hashlib.sha256(blobs[0]).digest(),
            hashlib.sha256(blobs[1]).digest(),
            ctx.program_digest(m.PROG_C),
        )
        return ProgramResult(payload, blobs)
    raise TypeError(f"prog_c cannot handle {type(req).__name__}")


def prog_t(ctx: EnclaveContext, req: object) -> ProgramResult:
    store = _store(ctx)
    config: PipelineConfig = ctx.mem["config"]
    if isinstance(req, Learn):
        _check_c(store, req.c)
        source = CheckedSource(store)
        checkpoints = CheckedCheckpointer(store, config)
        chains: list[SubmodelChain] = []
        retrained: dict[int, tuple[int, ...]] = {}
        for shard in store.shards:
            start = store.first_invalid(shard)
            if start is None:
                continue
            s = store.n_slices(shard)
            slices = [
                [k for k in store.slice_kids(shard, i) if store.key_list.get(k).live]
                for i in range(1, s + 1)
            ]
            chain = incremental_train(
                shard,
                slices,
                source,
                config.hyperparams,
                checkpoints,
                initial=initial_model(config.dims, config.seed, shard),
                start=start,
                schedule=config.epoch_schedule,
                phase="learn" if not ctx.mem.get("learned") else "unlearn",
            )
            chains.append(chain)
            retrained[shard] = tuple(range(start, s + 1))
        ctx.mem["learned"] = True
        h_model = _h_model(store)
        payload = m.learn_payload(ctx.mem["sid"], req.c, h_model, ctx.program_digest(m.PROG_T))
        return ProgramResult(payload, LearnOutcome(h_model, tuple(chains), retrained))
    if isinstance(req, Scrub):
        _check_c(store, req.c)
        data_checked = 0
        for entry in store.key_list:
            if entry.live:
                store.fetch_data_checked(entry.kid)
                data_checked += 1
        models_checked = 0
        for entry in store.key_list:
            if entry.slice_final and entry.seed is not None:
                store.restore_submodel_checked(entry.kid)
                models_checked += 1
        h_model = _h_model(store)
        payload = m.scrub_payload(
            ctx.mem["sid"],
            req.c,
            h_model,
            data_checked,
            models_checked,
            ctx.program_digest(m.PROG_T),
        )
        return ProgramResult(payload, (h_model, data_checked, models_checked))
    raise TypeError(f"prog_t cannot handle {type(req).__name__}")


def prog_p(ctx: EnclaveContext, req: Predict) -> ProgramResult:
    store = _store(ctx)
    config: PipelineConfig = ctx.mem["config"]
    checkpoints = CheckedCheckpointer(store, config)
    models = [checkpoints.restore(j, store.n_slices(j)) for j in store.shards]
    if _h_model(store) != req.h_model:
        raise WrongModel("restored constituent models do not match the requested h_model")
    t = np.frombuffer(req.t, dtype="<f4")
    pred = aggregate_predict(models, t)
    payload = m.predict_payload(
        ctx.mem["sid"],
        pred.label,
        pred.scores,
        hashlib.sha256(req.t).digest(),
        req.h_model,
        ctx.program_digest(m.PROG_P),
    )
    return ProgramResult(payload, pred)


def default_programs() -> list[EnclaveProgram]:
    return [
        EnclaveProgram.from_callable(m.PROG_K, "prog_k", prog_k),
        EnclaveProgram.from_callable(m.PROG_C, "prog_c", prog_c),
        EnclaveProgram.from_callable(m.PROG_T, "prog_t", prog_t),
        EnclaveProgram.from_callable(m.PROG_P, "prog_p", prog_p),
    ]


def program_digests(programs: Sequence[EnclaveProgram]) -> dict[int, bytes]:
    return {p.program_id: p.digest for p in programs}


def boot(
    enclave: EnclaveSimulator,
    *,
    sid: str,
    config: PipelineConfig,
    data_store: RecordLog | None = None,
    model_link: RecordLog | None = None,
    sealed: Mapping[str, bytes] | None = None,
) -> LineageStore:
    """Load the enclave's in-memory structures (fresh, or from unsealed sections)."""
    ctx = enclave.context()
    cuckoo = key_list = None
    if sealed is not None:
        cuckoo = CuckooFilter.deserialize(
            sealed["filter"], displacement_limit=config.filter.displacement_limit
        )
        key_list = KeyList.deserialize(sealed["key_list"])
        enclave.mem["learned"] = bool(sealed.get("learned", b"\x00")[0])
    store = LineageStore(
        eid=ctx.eid,
        mac_key=ctx.mac_key,
        prf_key=ctx.prf_key,
        fresh_seed=ctx.fresh_seed,
        filter_config=config.filter,
        data_store=data_store,
        model_link=model_link,
        cuckoo=cuckoo,
        key_list=key_list,
    )
    enclave.mem.update(store=store, config=config, sid=sid)
    return store


def sealed_sections(enclave: EnclaveSimulator) -> dict[str, bytes]:
    store: LineageStore = enclave.mem["store"]
    return {
        "filter": store.filter.serialize(),
        "key_list": store.key_list.serialize(),
        "learned": bytes([bool(enclave.mem.get("learned"))]),
    }


__all__ = [
    "CheckedCheckpointer",
    "CheckedSource",
    "CommitAdd",
    "CommitDel",
    "DeriveKid",
    "Learn",
    "LearnOutcome",
    "OpenCommitment",
    "Predict",
    "QueryMembership",
    "Scrub",
    "boot",
    "default_programs",
    "program_digests",
    "prog_c",
    "prog_k",
    "prog_p",
    "prog_t",
    "sealed_sections",
]
