"""MCP tool implementations.

Keep this layer thin: validate inputs, load the session workspace, hand the
blocking protocol work to a thread and return JSON-serializable dicts.
"""

from __future__ import annotations

import asyncio
from pathlib import Path
from typing import Any

from unlearning_proof_server.bench.datasets import gen_dataset
from unlearning_proof_server.core.audit import Auditor, alerts_by_class, verify_report
from unlearning_proof_server.core.config import build_pipeline_config, resolve_workspace
from unlearning_proof_server.core.dataset import Dataset, read_dataset
from unlearning_proof_server.core.protocol import (
    PhaseResult,
    deletion_phase,
    read_transcript,
    setup_phase,
    verify_transcript,
)
from unlearning_proof_server.core.session import AUDIT_LOG, TRANSCRIPT, Session

DEFAULT_POINTS = 2_000


def _phase_dict(session: Session, result: PhaseResult) -> dict[str, Any]:
    return {
        "sid": session.server.sid,
        "accepted": result.accepted,
        "failures": result.failures(),
        "c": result.receipt.c,
        "h_model": result.learn.h_model,
        "prediction": {"label": result.predict.label, "scores": result.predict.scores},
    }


def _row_indices(dataset: Dataset, indices: list[int]) -> list[int]:
    if not indices:
        raise ValueError("indices must name at least one dataset row")
    bad = [i for i in indices if not 0 <= i < len(dataset)]
    if bad:
        raise ValueError(f"row indices out of range [0, {len(dataset)}): {bad}")
    if len(set(indices)) != len(indices):
        raise ValueError(f"row indices listed more than once: {indices}")
    return indices


async def setup_impl(
    *,
    workspace: str | None = None,
    dataset_path: str | None = None,
    points: int = DEFAULT_POINTS,
    shards: int | None = None,
    slices: int | None = None,
    batch: int | None = None,
    epochs: int | None = None,
    lr: float | None = None,
    seed: int | None = None,
    fp_bits: int | None = None,
    buckets: int | None = None,
    entries_per_bucket: int | None = None,
) -> dict[str, Any]:
    """Commit a dataset, learn it and answer one challenge.

    Parameters
    ----------
    workspace : str | None
        Session directory. Defaults to POUL_WORKSPACE, then ./.poul.
    dataset_path : str | None
        Dataset in the import format. A synthetic set of ``points`` rows is
        generated when omitted.
    points : int
        Synthetic training-set size.
    shards, slices, batch, epochs, lr, seed, fp_bits, buckets, entries_per_bucket
        Pipeline overrides; unset values keep the defaults.

    Returns
    -------
    dict[str, Any]
        Session id, pinned enclave identity, digests and verdicts.
    """
    config = build_pipeline_config(
        shards=shards,
        slices=slices,
        batch=batch,
        epochs=epochs,
        lr=lr,
        seed=seed,
        fp_bits=fp_bits,
        buckets=buckets,
        entries_per_bucket=entries_per_bucket,
    )
    if dataset_path is not None:
        dataset = await read_dataset(dataset_path)
    else:
        if points < config.n_shards * config.n_slices:
            raise ValueError(f"points={points} is fewer than shards x slices")
        dataset, _ = gen_dataset(points, 0, dim=config.dims.input_dim, seed=config.seed)
    if dataset.dim != config.dims.input_dim:
        raise ValueError(
            f"dataset has {dataset.dim} features, model expects {config.dims.input_dim}"
        )

    session = await Session.create(resolve_workspace(workspace), config, dataset)
    result = await asyncio.to_thread(
        setup_phase, session.server, dataset, [session.owner], transcript=session.transcript
    )
    session.challenges += 1
    await session.save()
    out = _phase_dict(session, result)
    out.update(
        eid=session.server.eid.hex(),
        pk=session.server.pk.hex(),
        points=len(dataset),
        config=config.to_dict(),
        workspace=str(session.workspace),
    )
    return out


async def challenge_impl(*, workspace: str | None = None) -> dict[str, Any]:
    """Send a fresh random test input and check the prediction proof."""
    session = await Session.load(resolve_workspace(workspace))
    owner = session.owner
    t = owner.challenge(session.config.dims.input_dim)
    session.transcript.record_challenge(t)
    proof = await asyncio.to_thread(
        session.server.prove_prediction, t, owner.verifier.latest_h_model or b""
    )
    session.transcript.record(proof)
    verdict = owner.verifier.verify_predict(proof, t)
    session.challenges += 1
    await session.save()
    return {
        "sid": session.server.sid,
        "accepted": bool(verdict),
        "reason": verdict.reason,
        "label": proof.label,
        "scores": proof.scores,
        "h_model": proof.h_model,
    }


async def delete_impl(
    *,
    indices: list[int],
    requester: str | None = None,
    workspace: str | None = None,
) -> dict[str, Any]:
    """Delete dataset rows, relearn, and verify receipt, learn proof and prediction."""
    session = await Session.load(resolve_workspace(workspace))
    rows = _row_indices(session.dataset, indices)
    points = [session.dataset.point(i) for i in rows]
    result = await asyncio.to_thread(
        deletion_phase,
        session.server,
        [session.owner],
        points,
        requester=requester,
        transcript=session.transcript,
    )
    session.deleted.extend(p.kid for p in points)
    session.challenges += 1
    await session.save()
    out = _phase_dict(session, result)
    out["deleted"] = [f"{p.kid:#018x}" for p in points]
    out["retrained"] = {str(j): list(v) for j, v in session.server.retrain_log[-1].items()}
    return out


async def membership_impl(*, index: int, workspace: str | None = None) -> dict[str, Any]:
    """Ask the enclave whether a dataset row is currently committed."""
    session = await Session.load(resolve_workspace(workspace))
    (row,) = _row_indices(session.dataset, [index])
    proof = await asyncio.to_thread(session.server.prove_membership, session.dataset.point(row))
    session.transcript.record(proof)
    verdict = session.owner.verifier.verify_membership(proof)
    await session.save()
    return {
        "kid": f"{proof.kid:#018x}",
        "present": proof.present,
        "accepted": bool(verdict),
        "reason": verdict.reason,
    }


async def audit_impl(*, challenges: int = 3, workspace: str | None = None) -> dict[str, Any]:
    """Attach an auditing enclave, run challenges through it and check its signed log."""
    if challenges < 1:
        raise ValueError(f"challenges must be >= 1 (got {challenges})")
    session = await Session.load(resolve_workspace(workspace))
    server, owner = session.server, session.owner
    v = owner.verifier
    auditor = Auditor(exec_pk=v.pk, exec_eid=v.eid, sid=v.sid, program_digests=v.program_digests)
    auditor.establish_channel(server)
    for kind in ("receipt", "learn"):
        msg = session.latest(kind)
        if msg is not None:
            auditor.record(msg)  # type: ignore[arg-type]

    owner_ok = True
    for _ in range(challenges):
        t = owner.challenge(session.config.dims.input_dim)
        session.transcript.record_challenge(t)
        proof = await asyncio.to_thread(server.prove_prediction, t, v.latest_h_model or b"")
        session.transcript.record(proof)
        owner_ok = bool(v.verify_predict(proof, t)) and owner_ok
        auditor.drain(server)
    session.challenges += challenges

    report = auditor.fetch_reports()
    verdict = verify_report(
        report,
        auditor_pk=auditor.pk,
        auditor_eid=auditor.eid,
        exec_pk=v.pk,
        exec_eid=v.eid,
        expected_total=challenges,
    )
    await auditor.dump_log(session.workspace / AUDIT_LOG)
    await session.save()
    return {
        "sid": server.sid,
        "entries": report.total,
        "alerts": alerts_by_class(report.alerts),
        "report_accepted": bool(verdict),
        "reason": verdict.reason,
        "owner_accepted": owner_ok,
        "auditor_eid": auditor.eid.hex(),
    }


async def verify_transcript_impl(*, workspace: str | None = None) -> dict[str, Any]:
    """Replay the stored transcript through a fresh verifier pinned to the session key."""
    ws = resolve_workspace(workspace)
    session = await Session.load(ws)
    meta = session.meta()
    path = Path(ws) / TRANSCRIPT
    records = await read_transcript(path) if path.exists() else []
    report = await asyncio.to_thread(
        verify_transcript,
        records,
        pk=bytes.fromhex(meta.pk),
        eid=bytes.fromhex(meta.eid),
        program_digests={k: bytes.fromhex(d) for k, d in meta.program_digests.items()},
        sid=meta.sid,
    )
    return {"sid": meta.sid, **report.to_dict()}
