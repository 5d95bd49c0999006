"""Auditing enclave for the prediction phase.

A second :class:`EnclaveSimulator` with its own key pair runs one audit
program. After an attested key exchange with the execution enclave, every
prog_p call (successful or halted) is forwarded over the channel; the audit
program re-verifies the attestation, compares the prediction's h_model with
the latest learn proof it was given, and appends a hash-chained log entry.
Rejections also produce a signed alert. Owners fetch a signed log head and
check one auditor signature instead of every prediction proof.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
import time
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import aiofiles
from pydantic import BaseModel, ConfigDict

from ..enclave.sgx import (
    Attestation,
    Attested,
    CallRecord,
    Channel,
    EnclaveContext,
    EnclaveProgram,
    EnclaveSimulator,
    ProgramResult,
    sha256,
    verify_signature,
)
from ..errors import ChannelError
from ..protocol import messages as m
from ..protocol.server import UnlearningServer
from ..protocol.verifier import Verdict, Verifier

logger = logging.getLogger(__name__)

PROG_AUDIT = 1
GENESIS = bytes(32)
_U64 = struct.Struct("<Q")

VerdictName = Literal["accept", "reject"]


class AuditLogEntry(BaseModel):
    """One observed call. ``digest`` chains over ``prev_digest``."""

    model_config = ConfigDict(frozen=True)

    seq: int
    program_id: int
    input_digest: str
    output_digest: str
    payload: str
    attestation: str
    expected_h_model: str
    verdict: VerdictName
    reason: str
    timestamp: float
    prev_digest: str
    digest: str

    @staticmethod
    def chain_digest(prev: bytes, fields: Mapping[str, Any]) -> bytes:
        body = json.dumps(dict(fields), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(prev + body.encode("utf-8")).digest()

    def chained_fields(self) -> dict[str, Any]:
        return self.model_dump(exclude={"prev_digest", "digest"})


class AlertReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    entry_seq: int
    failure_class: str
    entry_digest: str
    auditor_eid: str
    signature: str

    @staticmethod
    def payload(entry_seq: int, failure_class: str, entry_digest: bytes) -> bytes:
        return m.canonical(
            b"alert", _U64.pack(entry_seq), failure_class.encode("utf-8"), entry_digest
        )


class AuditReport(BaseModel):
    """A log prefix with its signed head digest."""

    model_config = ConfigDict(frozen=True)

    sid: str
    entries: list[AuditLogEntry]
    alerts: list[AlertReport]
    total: int
    head_digest: str
    auditor_eid: str
    signature: str

    @staticmethod
    def head_payload(sid: str, total: int, head: bytes) -> bytes:
        return m.canonical(b"audit-head", sid.encode("utf-8"), _U64.pack(total), head)


# -- requests handled by the audit program -------------------------------------------


@dataclass(frozen=True, slots=True)
class Observe:
    seq: int
    payload: bytes
    mac: bytes

    def canonical(self) -> bytes:
        return m.canonical(b"observe", _U64.pack(self.seq), self.payload, self.mac)


@dataclass(frozen=True, slots=True)
class RecordProof:
    message: m.Receipt | m.LearnProof

    def canonical(self) -> bytes:
        return m.canonical(b"record", self.message.model_dump_json().encode("utf-8"))


@dataclass(frozen=True, slots=True)
class RaiseAlert:
    seq: int

    def canonical(self) -> bytes:
        return m.canonical(b"alert-req", _U64.pack(self.seq))


@dataclass(frozen=True, slots=True)
class SignHead:
    upto: int | None = None

    def canonical(self) -> bytes:
        upto = -1 if self.upto is None else self.upto
        return m.canonical(b"head-req", struct.pack("<q", upto))


def check_call(
    rec: CallRecord, exec_pk: bytes, exec_eid: bytes, latest_h_model: bytes | None
) -> tuple[VerdictName, str]:
    """Verdict for one observed call, from its bytes and the pinned key alone."""
    if rec.error:
        return "reject", rec.error
    try:
        att = Attestation.from_bytes(rec.attestation)
    except ValueError:
        return "reject", "malformed attestation"
    if att.eid != exec_eid or att.program_id != rec.program_id:
        return "reject", "attestation from another enclave or program"
    if not att.covers(rec.payload) or not att.verify(exec_pk):
        return "reject", "attestation does not verify"
    if rec.program_id == m.PROG_P:
        if latest_h_model is None:
            return "reject", "prediction before any learn proof"
        try:
            served = m.predict_h_model(rec.payload)
        except (ValueError, IndexError, struct.error):
            return "reject", "unparseable prediction payload"
        if served != latest_h_model:
            return "reject", "stale-model"
    return "accept", "ok"


@dataclass
class AuditState:
    """Audit-enclave memory."""

    exec_pk: bytes
    exec_eid: bytes
    verifier: Verifier
    clock: Callable[[], float] = time.time
    channel: Channel | None = None
    latest_h_model: bytes | None = None
    entries: list[AuditLogEntry] = field(default_factory=list)

    def head(self, upto: int | None = None) -> bytes:
        prefix = self.entries[:upto]
        return bytes.fromhex(prefix[-1].digest) if prefix else GENESIS

    def observe(self, req: Observe) -> AuditLogEntry:
        rec: CallRecord | None = None
        try:
            if self.channel is None:
                raise ChannelError("no channel established")
            rec = CallRecord.from_bytes(self.channel.open(req.seq, req.payload, req.mac))
            verdict, reason = check_call(
                rec, self.exec_pk, self.exec_eid, self.latest_h_model
            )
        except (ChannelError, struct.error, UnicodeDecodeError) as exc:
            verdict, reason = "reject", f"channel: {exc}"
        fields = {
            "seq": len(self.entries),
            "program_id": rec.program_id if rec else 0,
            "input_digest": rec.input_digest.hex() if rec else "",
            "output_digest": sha256(rec.payload).hex() if rec and rec.payload else "",
            "payload": rec.payload.hex() if rec else "",
            "attestation": rec.attestation.hex() if rec else "",
            "expected_h_model": self.latest_h_model.hex() if self.latest_h_model else "",
            "verdict": verdict,
            "reason": reason,
            "timestamp": self.clock(),
        }
        prev = self.head()
        entry = AuditLogEntry(
            **fields,
            prev_digest=prev.hex(),
            digest=AuditLogEntry.chain_digest(prev, fields).hex(),
        )
        self.entries.append(entry)
        return entry


def audit_program(ctx: EnclaveContext, req: object) -> ProgramResult:
    state: AuditState = ctx.mem["audit"]
    if isinstance(req, Observe):
        entry = state.observe(req)
        return ProgramResult(m.canonical(b"audit-entry", bytes.fromhex(entry.digest)), entry)
    if isinstance(req, RecordProof):
        msg = req.message
        if isinstance(msg, m.LearnProof):
            verdict = state.verifier.verify_learn(msg)
            if verdict:
                state.latest_h_model = bytes.fromhex(msg.h_model)
        else:
            verdict = state.verifier.verify_receipt(msg)
        return ProgramResult(m.canonical(b"recorded", bytes([verdict.accepted])), verdict)
    if isinstance(req, RaiseAlert):
        entry = state.entries[req.seq]
        if entry.verdict != "reject":
            raise ValueError(f"entry {req.seq} was accepted; no alert to raise")
        payload = AlertReport.payload(entry.seq, entry.reason, bytes.fromhex(entry.digest))
        return ProgramResult(payload, entry)
    if isinstance(req, SignHead):
        total = len(state.entries[: req.upto])
        head = state.head(req.upto)
        payload = AuditReport.head_payload(state.verifier.sid, total, head)
        return ProgramResult(payload, (total, head))
    raise TypeError(f"audit program cannot handle {type(req).__name__}")


class Auditor:
    """Host handle on the auditing enclave."""

    def __init__(
        self,
        *,
        exec_pk: bytes,
        exec_eid: bytes,
        sid: str,
        program_digests: Mapping[int, bytes],
        enclave: EnclaveSimulator | None = None,
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.enclave = enclave or EnclaveSimulator()
        self.enclave.install([EnclaveProgram.from_callable(PROG_AUDIT, "audit", audit_program)])
        self.sid = sid
        verifier = Verifier(pk=exec_pk, eid=exec_eid, sid=sid, program_digests=program_digests)
        self._state = AuditState(exec_pk, exec_eid, verifier, clock)
        self.enclave.mem["audit"] = self._state
        self.alerts: list[AlertReport] = []

    @classmethod
    def for_server(cls, server: UnlearningServer, **kwargs: Any) -> Auditor:
        return cls(
            exec_pk=server.pk,
            exec_eid=server.eid,
            sid=server.sid,
            program_digests=server.program_digests,
            **kwargs,
        )

    def __repr__(self) -> str:
        return f"<Auditor sid={self.sid} entries={len(self._state.entries)}>"

    @property
    def pk(self) -> bytes:
        return self.enclave.pk

    @property
    def eid(self) -> bytes:
        return self.enclave.eid

    @property
    def entries(self) -> list[AuditLogEntry]:
        return list(self._state.entries)

    def _call(self, req: object) -> Attested:
        return self.enclave.resume(self.eid, PROG_AUDIT, req)

    def establish_channel(self, server: UnlearningServer) -> None:
        """Attested X25519 exchange, then route the server's prog_p calls here.

        Both ends pin the other's signing key and eid; a key share from any
        other enclave aborts with :class:`ChannelError`.
        """
        ours = self.enclave.key_share()
        theirs = server.enclave.key_share()
        channel = self.enclave.open_channel(
            ours, theirs, peer_pk=self._state.exec_pk, peer_eid=self._state.exec_eid
        )
        exec_side = server.enclave.open_channel(theirs, ours, peer_pk=self.pk, peer_eid=self.eid)
        server.enclave.attach_monitor(exec_side, {m.PROG_P})
        self._state.channel = channel
        logger.info("audit channel open to eid=%s", self._state.exec_eid.hex()[:16])

    def record(self, msg: m.Receipt | m.LearnProof) -> Verdict:
        """Feed the owner's receipts and learn proofs; the latest accepted h_model is tracked."""
        return self._call(RecordProof(msg)).value

    def observe_and_verify(self, envelope: tuple[int, bytes, bytes]) -> AuditLogEntry:
        seq, payload, mac = envelope
        entry: AuditLogEntry = self._call(Observe(seq, payload, mac)).value
        if entry.verdict == "reject":
            attested = self._call(RaiseAlert(entry.seq))
            alert = AlertReport(
                entry_seq=entry.seq,
                failure_class=entry.reason,
                entry_digest=entry.digest,
                auditor_eid=self.eid.hex(),
                signature=attested.attestation.signature.hex(),
            )
            self.alerts.append(alert)
            logger.warning("audit alert at entry %s: %s", entry.seq, entry.reason)
        return entry

    def drain(self, server: UnlearningServer) -> list[AuditLogEntry]:
        """Process every observation the execution enclave has queued."""
        return [self.observe_and_verify(env) for env in server.enclave.drain_observations()]

    def fetch_reports(self, upto: int | None = None) -> AuditReport:
        """The log prefix entries[:upto] and its alerts under one signed head digest."""
        attested = self._call(SignHead(upto))
        total, head = attested.value
        entries = self._state.entries[:total]
        return AuditReport(
            sid=self.sid,
            entries=entries,
            alerts=[a for a in self.alerts if a.entry_seq < total],
            total=total,
            head_digest=head.hex(),
            auditor_eid=self.eid.hex(),
            signature=attested.attestation.signature.hex(),
        )

    async def dump_log(self, path: str | Path) -> None:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        async with aiofiles.open(p, "w", encoding="utf-8") as f:
            for entry in self._state.entries:
                await f.write(entry.model_dump_json() + "\n")


def _signed_by(pk: bytes, eid: bytes, signature: str, payload: bytes) -> bool:
    try:
        sig = bytes.fromhex(signature)
    except ValueError:
        return False
    return verify_signature(pk, sig, Attestation.message_for(eid, PROG_AUDIT, sha256(payload)))


def verify_report(
    report: AuditReport,
    *,
    auditor_pk: bytes,
    auditor_eid: bytes,
    exec_pk: bytes | None = None,
    exec_eid: bytes | None = None,
    expected_total: int | None = None,
) -> Verdict:
    """Owner-side check of an audit report.

    One auditor signature covers (sid, total, head). The entries must chain
    from the genesis digest to that head, so a dropped or edited entry shows
    up. ``expected_total`` is how many observations the owner knows of; a
    shorter signed prefix is a truncation. With the execution enclave's pk
    and eid, every verdict is recomputed as well.
    """
    head = bytes.fromhex(report.head_digest)
    payload = AuditReport.head_payload(report.sid, report.total, head)
    if not _signed_by(auditor_pk, auditor_eid, report.signature, payload):
        return Verdict(False, "audit head signature does not verify")
    if len(report.entries) != report.total:
        return Verdict(False, f"log truncated: {len(report.entries)} of {report.total} entries")
    if expected_total is not None and report.total < expected_total:
        return Verdict(False, f"log truncated: {report.total} of {expected_total} entries")
    prev = GENESIS
    for i, entry in enumerate(report.entries):
        if entry.seq != i or entry.prev_digest != prev.hex():
            return Verdict(False, f"log chain broken at entry {i}")
        digest = AuditLogEntry.chain_digest(prev, entry.chained_fields())
        if digest.hex() != entry.digest:
            return Verdict(False, f"entry {i} digest mismatch")
        if exec_pk is not None and exec_eid is not None:
            if recheck_entry(entry, exec_pk=exec_pk, exec_eid=exec_eid) != entry.verdict:
                return Verdict(False, f"entry {i} verdict is not reproducible")
        prev = digest
    if prev != head:
        return Verdict(False, "entries do not chain to the signed head")
    by_seq = {e.seq: e for e in report.entries}
    for alert in report.alerts:
        entry = by_seq.get(alert.entry_seq)
        if entry is None or entry.digest != alert.entry_digest:
            return Verdict(False, f"alert for entry {alert.entry_seq} has no matching entry")
        if not verify_alert(alert, auditor_pk=auditor_pk, auditor_eid=auditor_eid):
            return Verdict(False, f"alert for entry {alert.entry_seq} is not signed")
    return Verdict(True)


def verify_alert(alert: AlertReport, *, auditor_pk: bytes, auditor_eid: bytes) -> bool:
    """A standalone alert blob verifies under the auditor's key alone."""
    payload = AlertReport.payload(
        alert.entry_seq, alert.failure_class, bytes.fromhex(alert.entry_digest)
    )
    return _signed_by(auditor_pk, auditor_eid, alert.signature, payload)


def recheck_entry(entry: AuditLogEntry, *, exec_pk: bytes, exec_eid: bytes) -> VerdictName:
    """Recompute an entry's verdict from its logged bytes and the pinned key."""
    if not entry.attestation:
        return "reject"
    rec = CallRecord(
        program_id=entry.program_id,
        input_digest=bytes.fromhex(entry.input_digest),
        payload=bytes.fromhex(entry.payload),
        attestation=bytes.fromhex(entry.attestation),
    )
    latest = bytes.fromhex(entry.expected_h_model) if entry.expected_h_model else None
    verdict, _ = check_call(rec, exec_pk, exec_eid, latest)
    return verdict


def alerts_by_class(alerts: Iterable[AlertReport]) -> dict[str, int]:
    out: dict[str, int] = {}
    for a in alerts:
        out[a.failure_class] = out.get(a.failure_class, 0) + 1
    return out
