"""Host side of the commit-and-prove protocol.

:class:`UnlearningServer` is the untrusted server process. It owns the record
stores (plain memory it may tamper with) and an enclave whose programs do all
the security-relevant work; the server only forwards requests and packages
attested outputs into wire messages.
"""

from __future__ import annotations

import itertools
import logging
import uuid
from collections.abc import Iterable, Iterator, Mapping, Sequence

import numpy as np

from ..config import PipelineConfig
from ..dataset import DataPoint
from ..enclave.sgx import Attested, EnclaveSimulator
from ..lineage.auth import LineageStore, Placement
from ..lineage.record_log import RecordLog
from ..ml.network import Prediction
from ..sisa.plan import ShardPlan
from ..sisa.trainer import StepTiming
from . import messages as m
from .programs import (
    CommitAdd,
    CommitDel,
    DeriveKid,
    Learn,
    LearnOutcome,
    OpenCommitment,
    Predict,
    QueryMembership,
    Scrub,
    boot,
    default_programs,
    program_digests,
    sealed_sections,
)

logger = logging.getLogger(__name__)


def _batched(iterable: Iterable, n: int) -> Iterator[tuple]:
    """``itertools.batched`` fallback for Python < 3.12."""
    it = iter(iterable)
    while chunk := tuple(itertools.islice(it, n)):
        yield chunk


batched = getattr(itertools, "batched", _batched)

COMMIT_BATCH = 512


def new_sid() -> str:
    return uuid.uuid4().hex


def challenge_bytes(t: np.ndarray, dim: int) -> bytes:
    x = np.asarray(t)
    if x.shape != (dim,):
        raise ValueError(f"test input must have shape ({dim},), got {x.shape}")
    return np.ascontiguousarray(x, dtype="<f4").tobytes()


class UnlearningServer:
    """One protocol session: a booted enclave plus the host's untrusted stores."""

    def __init__(
        self,
        config: PipelineConfig,
        *,
        enclave: EnclaveSimulator | None = None,
        sid: str | None = None,
        data_store: RecordLog | None = None,
        model_link: RecordLog | None = None,
        sealed: bytes | None = None,
    ) -> None:
        self.config = config
        self.sid = sid or new_sid()
        self.enclave = enclave or EnclaveSimulator()
        programs = default_programs()
        self.enclave.install(programs)
        self.program_digests = program_digests(programs)
        sections = self.enclave.unseal_state(sealed) if sealed is not None else None
        self._store: LineageStore = boot(
            self.enclave,
            sid=self.sid,
            config=config,
            data_store=data_store,
            model_link=model_link,
            sealed=sections,
        )
        self.timings: list[StepTiming] = []
        self.retrain_log: list[Mapping[int, tuple[int, ...]]] = []
        self.latest_c: bytes | None = None
        self.latest_h_model: bytes | None = None
        logger.info("session %s booted (eid=%s)", self.sid, self.eid.hex()[:16])

    def __repr__(self) -> str:
        return f"<UnlearningServer sid={self.sid} entries={len(self._store.key_list)}>"

    @property
    def pk(self) -> bytes:
        return self.enclave.pk

    @property
    def eid(self) -> bytes:
        return self.enclave.eid

    # The host legitimately holds these buffers; the enclave re-checks them on read.
    @property
    def data_store(self) -> RecordLog:
        return self._store.data_store

    @property
    def model_link(self) -> RecordLog:
        return self._store.model_link

    def _call(self, program_id: int, request: object) -> Attested:
        return self.enclave.resume(self.eid, program_id, request)

    def _signed(self, attested: Attested) -> dict[str, str]:
        return {
            "sid": self.sid,
            "eid": attested.attestation.eid.hex(),
            "signature": attested.attestation.signature.hex(),
        }

    def _receipt(self, attested: Attested, owner: str | None) -> m.Receipt:
        fields = m.decode_fields(attested.payload, b"receipt")
        self.latest_c = fields[1]
        return m.Receipt(
            c=fields[1].hex(),
            key_list_digest=fields[2].hex(),
            item_count=int.from_bytes(fields[3], "little"),
            owner=owner,
            **self._signed(attested),
        )

    # -- commit -----------------------------------------------------------------

    def derive_kid(self, point: DataPoint) -> int:
        return self._call(m.PROG_K, DeriveKid(point.content_bytes(), point.owner)).value

    def commit(
        self, point: DataPoint, placement: Placement, *, owner: str | None = None
    ) -> m.Receipt:
        return self.commit_many([(point, placement)], owner=owner)

    def commit_many(
        self, items: Sequence[tuple[DataPoint, Placement]], *, owner: str | None = None
    ) -> m.Receipt:
        req = CommitAdd(tuple((p.encode(), pl) for p, pl in items), owner)
        return self._receipt(self._call(m.PROG_C, req), owner)

    def commit_plan(
        self,
        points: Mapping[int, DataPoint],
        plan: ShardPlan,
        *,
        batch: int = COMMIT_BATCH,
    ) -> list[m.Receipt]:
        """Commit every planned point in plan order.

        Consecutive points of the same owner go in one request (split at
        ``batch``), so each owner gets a receipt for the filter state right
        after its data. The last receipt covers everything.
        """
        receipts: list[m.Receipt] = []
        ordered = ((points[kid], placement) for kid, placement in plan.placements())
        for owner, run in itertools.groupby(ordered, key=lambda item: item[0].owner):
            for chunk in batched(run, batch):
                receipts.append(self.commit_many(chunk, owner=owner))
        logger.info("committed %s points in %s requests", len(plan), len(receipts))
        return receipts

    def delete(self, kids: Iterable[int], *, requester: str | None = None) -> m.Receipt:
        req = CommitDel(tuple(kids), requester)
        attested = self._call(m.PROG_C, req)
        logger.info("deleted %s kids, invalidated %s", len(req.kids), attested.value)
        return self._receipt(attested, requester)

    # -- prove ------------------------------------------------------------------

    def prove_learning(self, c: bytes | str) -> m.LearnProof:
        c = bytes.fromhex(c) if isinstance(c, str) else c
        attested = self._call(m.PROG_T, Learn(c))
        outcome: LearnOutcome = attested.value
        for chain in outcome.chains:
            self.timings.extend(chain.timings)
        self.retrain_log.append(dict(outcome.retrained))
        self.latest_h_model = outcome.h_model
        return m.LearnProof(c=c.hex(), h_model=outcome.h_model.hex(), **self._signed(attested))

    def prove_prediction(self, t: np.ndarray, h_model: bytes | str) -> m.PredictProof:
        h_model = bytes.fromhex(h_model) if isinstance(h_model, str) else h_model
        raw = challenge_bytes(t, self.config.dims.input_dim)
        attested = self._call(m.PROG_P, Predict(raw, h_model))
        pred: Prediction = attested.value
        return m.PredictProof(
            label=pred.label,
            scores=list(pred.scores),
            test_digest=m.decode_fields(attested.payload, b"predict")[3].hex(),
            h_model=h_model.hex(),
            **self._signed(attested),
        )

    def prove_membership(self, point: DataPoint) -> m.MembershipProof:
        attested = self._call(m.PROG_C, QueryMembership(point.encode()))
        kid, present = attested.value
        c = m.decode_fields(attested.payload, b"membership")[3]
        return m.MembershipProof(kid=kid, present=present, c=c.hex(), **self._signed(attested))

    def open_commitment(self) -> m.Opening:
        attested = self._call(m.PROG_C, OpenCommitment())
        filter_blob, key_list_blob = attested.value
        fields = m.decode_fields(attested.payload, b"open")
        return m.Opening(
            c=fields[1].hex(),
            key_list_digest=fields[2].hex(),
            filter_blob=filter_blob.hex(),
            key_list_blob=key_list_blob.hex(),
            **self._signed(attested),
        )

    def integrity_scrub(self) -> m.ScrubReport:
        c = self.current_c()
        attested = self._call(m.PROG_T, Scrub(c))
        h_model, data_checked, models_checked = attested.value
        return m.ScrubReport(
            c=c.hex(),
            h_model=h_model.hex(),
            data_checked=data_checked,
            submodels_checked=models_checked,
            **self._signed(attested),
        )

    # -- host views ----------------------------------------------------------------

    def current_c(self) -> bytes:
        """Filter digest from the latest receipt."""
        if self.latest_c is None:
            raise ValueError("nothing has been committed in this session")
        return self.latest_c

    def seal(self) -> bytes:
        return self.enclave.seal_state(sealed_sections(self.enclave))


__all__ = ["COMMIT_BATCH", "UnlearningServer", "challenge_bytes", "new_sid"]
