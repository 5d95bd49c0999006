from __future__ import annotations

import pytest

from unlearning_proof_server.core.audit import (
    Auditor,
    alerts_by_class,
    verify_alert,
    verify_report,
)
from unlearning_proof_server.core.errors import WrongModel
from unlearning_proof_server.core.protocol import deletion_phase


@pytest.fixture
def audited(honest_session):
    server, owner, result = honest_session
    auditor = Auditor.for_server(server, clock=lambda: 1_700_000_000.0)
    auditor.establish_channel(server)
    assert auditor.record(result.receipt)
    assert auditor.record(result.learn)
    return server, owner, result, auditor


def _predict(server, owner, h_model):
    t = owner.challenge(server.config.dims.input_dim)
    return server.prove_prediction(t, h_model)


def _check(report, auditor, server, **kwargs):
    return verify_report(
        report,
        auditor_pk=auditor.pk,
        auditor_eid=auditor.eid,
        exec_pk=server.pk,
        exec_eid=server.eid,
        **kwargs,
    )


def test_honest_predictions_are_logged_and_accepted(audited) -> None:
    server, owner, result, auditor = audited
    for _ in range(3):
        _predict(server, owner, result.learn.h_model)

    entries = auditor.drain(server)
    report = auditor.fetch_reports()

    assert [e.verdict for e in entries] == ["accept"] * 3
    assert [e.seq for e in entries] == [0, 1, 2]
    assert report.total == 3 and not report.alerts
    assert _check(report, auditor, server, expected_total=3)


def test_entries_chain_from_genesis(audited) -> None:
    server, owner, result, auditor = audited
    _predict(server, owner, result.learn.h_model)
    _predict(server, owner, result.learn.h_model)
    first, second = auditor.drain(server)

    assert first.prev_digest == "00" * 32
    assert second.prev_digest == first.digest


def test_prediction_after_unreported_relearn_is_stale(audited, toy_dataset) -> None:
    server, owner, _, auditor = audited
    deletion_phase(server, [owner], [toy_dataset.point(0)])

    (entry,) = auditor.drain(server)
    report = auditor.fetch_reports()

    assert entry.verdict == "reject" and entry.reason == "stale-model"
    assert alerts_by_class(report.alerts) == {"stale-model": 1}
    assert verify_alert(report.alerts[0], auditor_pk=auditor.pk, auditor_eid=auditor.eid)
    assert _check(report, auditor, server)


def test_halted_prediction_raises_an_alert(audited) -> None:
    server, owner, _, auditor = audited
    with pytest.raises(WrongModel):
        _predict(server, owner, bytes(32))

    (entry,) = auditor.drain(server)

    assert entry.verdict == "reject"
    assert entry.reason == "wrong-model"
    assert len(auditor.alerts) == 1
    assert _check(auditor.fetch_reports(), auditor, server)


def test_forged_learn_proof_is_not_recorded(audited) -> None:
    _, _, result, auditor = audited
    forged = result.learn.model_copy(update={"h_model": "ab" * 32})

    assert not auditor.record(forged)


def test_truncated_prefix_is_detected(audited) -> None:
    server, owner, result, auditor = audited
    for _ in range(2):
        _predict(server, owner, result.learn.h_model)
    auditor.drain(server)

    prefix = auditor.fetch_reports(upto=1)
    verdict = _check(prefix, auditor, server, expected_total=2)

    assert prefix.total == 1
    assert not verdict
    assert "truncated" in verdict.reason
    assert _check(prefix, auditor, server)


def test_edited_entry_breaks_the_chain(audited) -> None:
    server, owner, result, auditor = audited
    for _ in range(2):
        _predict(server, owner, result.learn.h_model)
    auditor.drain(server)
    report = auditor.fetch_reports()
    edited = report.entries[0].model_copy(update={"verdict": "reject"})
    tampered = report.model_copy(update={"entries": [edited, report.entries[1]]})

    verdict = _check(tampered, auditor, server)

    assert not verdict
    assert "entry 0" in verdict.reason


def test_report_needs_the_auditor_key(audited) -> None:
    server, owner, result, auditor = audited
    _predict(server, owner, result.learn.h_model)
    auditor.drain(server)
    report = auditor.fetch_reports()

    verdict = verify_report(report, auditor_pk=server.pk, auditor_eid=auditor.eid)

    assert not verdict
    assert verdict.reason == "audit head signature does not verify"


@pytest.mark.asyncio
async def test_dump_log_writes_one_line_per_entry(audited, tmp_path) -> None:
    server, owner, result, auditor = audited
    for _ in range(2):
        _predict(server, owner, result.learn.h_model)
    auditor.drain(server)

    path = tmp_path / "audit" / "audit.jsonl"
    await auditor.dump_log(path)

    assert len(path.read_text(encoding="utf-8").splitlines()) == 2
