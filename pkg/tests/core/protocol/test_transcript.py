from __future__ import annotations

import pytest

from unlearning_proof_server.core.protocol import (
    Transcript,
    deletion_phase,
    pin_owner,
    read_transcript,
    setup_phase,
    verify_transcript,
)
from unlearning_proof_server.core.protocol.server import UnlearningServer
from unlearning_proof_server.core.protocol.transcript import TranscriptRecord


@pytest.fixture
def session_transcript(tiny_config, toy_dataset):
    server = UnlearningServer(tiny_config)
    owner = pin_owner(server)
    transcript = Transcript(server.sid, server.eid, server.program_digests)
    setup_phase(server, toy_dataset, [owner], transcript=transcript)
    deletion_phase(server, [owner], [toy_dataset.point(3)], transcript=transcript)
    return server, transcript


def _verify(server, records):
    return verify_transcript(
        records, pk=server.pk, eid=server.eid, program_digests=server.program_digests
    )


def test_records_follow_protocol_order(session_transcript) -> None:
    _, transcript = session_transcript
    types = [r.type for r in transcript.records]

    assert [r.seq for r in transcript.records] == list(range(len(types)))
    assert types[-4:] == ["membership", "learn", "challenge", "predict"]
    assert types.index("learn") > types.index("receipt")
    assert types.count("challenge") == types.count("predict") == 2


def test_honest_transcript_replays(session_transcript) -> None:
    server, transcript = session_transcript

    report = _verify(server, transcript.records)

    assert report.accepted, report.failures
    assert report.checked == len(transcript)


@pytest.mark.asyncio
async def test_dump_and_read_back(session_transcript, tmp_path) -> None:
    server, transcript = session_transcript
    path = tmp_path / "transcript.jsonl"

    await transcript.dump(path)
    records = await read_transcript(path)

    assert records == transcript.records
    assert _verify(server, records).accepted


@pytest.mark.asyncio
async def test_append_to_extends_file(session_transcript, tmp_path) -> None:
    server, transcript = session_transcript
    path = tmp_path / "transcript.jsonl"
    head = Transcript(server.sid, server.eid, server.program_digests, transcript.records[:3])
    await head.dump(path)

    await transcript.append_to(path, 3)

    assert await read_transcript(path) == transcript.records


def _edit(rec: TranscriptRecord, **body) -> TranscriptRecord:
    return rec.model_copy(update={"body": {**rec.body, **body}})


def test_edited_prediction_fails_digest(session_transcript) -> None:
    server, transcript = session_transcript
    records = list(transcript.records)
    i = max(r.seq for r in records if r.type == "predict")
    records[i] = _edit(records[i], label=1 - records[i].body["label"])

    report = _verify(server, records)

    assert not report.accepted
    assert report.failures == [(i, "payload digest does not match body")]


def test_bad_signature_is_reported(session_transcript) -> None:
    server, transcript = session_transcript
    records = list(transcript.records)
    i = next(r.seq for r in records if r.type == "learn")
    records[i] = _edit(records[i], signature="00" * 64)

    report = _verify(server, records)

    assert [seq for seq, _ in report.failures][:1] == [i]


def test_dropped_record_is_a_sequence_gap(session_transcript) -> None:
    server, transcript = session_transcript
    records = transcript.records[:2] + transcript.records[3:]

    report = _verify(server, records)

    assert any("sequence gap" in reason for _, reason in report.failures)


def test_foreign_enclave_key_rejects_everything(session_transcript) -> None:
    server, transcript = session_transcript
    other = UnlearningServer(server.config)

    report = verify_transcript(
        transcript.records,
        pk=other.pk,
        eid=server.eid,
        program_digests=server.program_digests,
    )

    signed = [r for r in transcript.records if r.type != "challenge"]
    assert len(report.failures) >= len(signed)


def test_empty_transcript_is_not_accepted(session_transcript) -> None:
    server, _ = session_transcript
    assert not _verify(server, []).accepted
