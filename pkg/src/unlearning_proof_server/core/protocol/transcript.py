"""Line-delimited proof transcripts and their offline verification.

Every message a session exchanges is appended as one JSON record
``{seq, type, sid, eid, payload_digest, signature, body}``. Challenges sent by
the owner are recorded too, so predict proofs can be re-checked later against
the exact test input. Record order is the protocol order: "latest receipt"
and "latest learn proof" mean latest in the transcript.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Any, Literal

import aiofiles
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter

from . import messages as m
from .verifier import Verdict, Verifier

logger = logging.getLogger(__name__)

RecordType = Literal["receipt", "learn", "predict", "membership", "opening", "scrub", "challenge"]

_MESSAGES = TypeAdapter(Annotated[m.SignedMessage, Field(discriminator="kind")])


def parse_message(body: dict[str, Any]) -> m.SignedMessage:
    return _MESSAGES.validate_python(body)


class TranscriptRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    seq: int
    type: RecordType
    sid: str
    eid: str
    payload_digest: str
    signature: str = ""
    body: dict[str, Any]


def payload_for(msg: m.SignedMessage, program_digests: Mapping[int, bytes]) -> tuple[int, bytes]:
    """Rebuild the attested payload of a message; returns (program id, payload)."""
    d = program_digests
    h = bytes.fromhex
    match msg:
        case m.Receipt():
            return m.PROG_C, m.receipt_payload(
                msg.sid,
                h(msg.c),
                h(msg.key_list_digest),
                msg.item_count,
                msg.owner,
                d[m.PROG_C],
                d[m.PROG_K],
            )
        case m.LearnProof():
            return m.PROG_T, m.learn_payload(msg.sid, h(msg.c), h(msg.h_model), d[m.PROG_T])
        case m.PredictProof():
            return m.PROG_P, m.predict_payload(
                msg.sid, msg.label, msg.scores, h(msg.test_digest), h(msg.h_model), d[m.PROG_P]
            )
        case m.MembershipProof():
            return m.PROG_C, m.membership_payload(
                msg.sid, msg.kid, msg.present, h(msg.c), d[m.PROG_C]
            )
        case m.Opening():
            return m.PROG_C, m.opening_payload(
                msg.sid, h(msg.c), h(msg.key_list_digest), d[m.PROG_C]
            )
        case m.ScrubReport():
            return m.PROG_T, m.scrub_payload(
                msg.sid,
                h(msg.c),
                h(msg.h_model),
                msg.data_checked,
                msg.submodels_checked,
                d[m.PROG_T],
            )
    raise TypeError(f"not a signed message: {type(msg).__name__}")


class Transcript:
    """Append-only list of records for one session."""

    def __init__(
        self,
        sid: str,
        eid: bytes,
        program_digests: Mapping[int, bytes],
        records: Iterable[TranscriptRecord] = (),
    ) -> None:
        self.sid = sid
        self.eid = eid
        self.program_digests = dict(program_digests)
        self.records: list[TranscriptRecord] = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, msg: m.SignedMessage) -> TranscriptRecord:
        _, payload = payload_for(msg, self.program_digests)
        rec = TranscriptRecord(
            seq=len(self.records),
            type=msg.kind,
            sid=msg.sid,
            eid=msg.eid,
            payload_digest=hashlib.sha256(payload).hexdigest(),
            signature=msg.signature,
            body=msg.model_dump(mode="json"),
        )
        self.records.append(rec)
        return rec

    def record_challenge(self, t: np.ndarray) -> TranscriptRecord:
        raw = np.ascontiguousarray(t, dtype="<f4").tobytes()
        rec = TranscriptRecord(
            seq=len(self.records),
            type="challenge",
            sid=self.sid,
            eid=self.eid.hex(),
            payload_digest=hashlib.sha256(raw).hexdigest(),
            body={"t": raw.hex()},
        )
        self.records.append(rec)
        return rec

    async def dump(self, path: str | Path) -> None:
        """Rewrite the whole transcript as JSON lines."""
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        async with aiofiles.open(p, "w", encoding="utf-8") as f:
            for rec in self.records:
                await f.write(rec.model_dump_json() + "\n")

    async def append_to(self, path: str | Path, start: int) -> None:
        """Append records[start:] to an existing file."""
        async with aiofiles.open(Path(path), "a", encoding="utf-8") as f:
            for rec in self.records[start:]:
                await f.write(rec.model_dump_json() + "\n")


async def read_transcript(path: str | Path) -> list[TranscriptRecord]:
    records: list[TranscriptRecord] = []
    async with aiofiles.open(Path(path), encoding="utf-8") as f:
        async for line in f:
            line = line.strip()
            if line:
                records.append(TranscriptRecord.model_validate(json.loads(line)))
    return records


@dataclass(slots=True)
class TranscriptReport:
    checked: int = 0
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.checked > 0 and not self.failures

    def to_dict(self) -> dict[str, Any]:
        return {
            "accepted": self.accepted,
            "checked": self.checked,
            "failures": [{"seq": s, "reason": r} for s, r in self.failures],
        }


def verify_transcript(
    records: Iterable[TranscriptRecord],
    *,
    pk: bytes,
    eid: bytes,
    program_digests: Mapping[int, bytes],
    sid: str | None = None,
) -> TranscriptReport:
    """Replay a transcript through a fresh verifier pinned to pk/eid."""
    records = list(records)
    report = TranscriptReport()
    if not records:
        return report
    sid = sid or records[0].sid
    verifier = Verifier(pk=pk, eid=eid, sid=sid, program_digests=program_digests)
    challenge: np.ndarray | None = None
    expected_seq = 0
    for rec in records:
        report.checked += 1
        if rec.seq != expected_seq:
            report.failures.append((rec.seq, f"sequence gap: expected {expected_seq}"))
        expected_seq = rec.seq + 1
        if rec.sid != sid or rec.eid != eid.hex():
            report.failures.append((rec.seq, "record belongs to another session or enclave"))
            continue
        if rec.type == "challenge":
            raw = bytes.fromhex(rec.body["t"])
            if hashlib.sha256(raw).hexdigest() != rec.payload_digest:
                report.failures.append((rec.seq, "challenge digest mismatch"))
            challenge = np.frombuffer(raw, dtype="<f4")
            continue
        try:
            msg = parse_message(rec.body)
        except ValueError as exc:
            report.failures.append((rec.seq, f"malformed body: {exc}"))
            continue
        _, payload = payload_for(msg, program_digests)
        if hashlib.sha256(payload).hexdigest() != rec.payload_digest:
            report.failures.append((rec.seq, "payload digest does not match body"))
            continue
        verdict = _dispatch(verifier, msg, challenge)
        if not verdict:
            report.failures.append((rec.seq, verdict.reason))
    logger.info(
        "transcript %s: %s records, %s failures", sid, report.checked, len(report.failures)
    )
    return report


def _dispatch(verifier: Verifier, msg: m.SignedMessage, t: np.ndarray | None) -> Verdict:
    match msg:
        case m.Receipt():
            return verifier.verify_receipt(msg)
        case m.LearnProof():
            return verifier.verify_learn(msg)
        case m.PredictProof():
            if t is None:
                return Verdict(False, "predict proof without a preceding challenge")
            return verifier.verify_predict(msg, t)
        case m.MembershipProof():
            return verifier.verify_membership(msg)
        case m.Opening():
            return verifier.verify_opening(msg)
        case m.ScrubReport():
            return verifier.verify_scrub(msg)
    return Verdict(False, f"unexpected message {type(msg).__name__}")
