from __future__ import annotations

import json

import pytest
import pytest_asyncio

from unlearning_proof_server.core.protocol import deletion_phase, setup_phase
from unlearning_proof_server.core.session import (
    DATA_STORE,
    DATASET,
    META,
    SEALED,
    TRANSCRIPT,
    Session,
    SessionNotFound,
)


@pytest_asyncio.fixture
async def saved(tmp_path, tiny_config, toy_dataset) -> Session:
    session = await Session.create(tmp_path / "ws", tiny_config, toy_dataset)
    result = setup_phase(
        session.server, toy_dataset, [session.owner], transcript=session.transcript
    )
    assert result.accepted, result.failures()
    await session.save()
    return session


@pytest.mark.asyncio
async def test_save_writes_workspace_layout(saved: Session) -> None:
    for name in (META, SEALED, DATA_STORE, DATASET, TRANSCRIPT):
        assert (saved.workspace / name).is_file(), name

    meta = json.loads((saved.workspace / META).read_text(encoding="utf-8"))
    assert meta["sid"] == saved.server.sid
    assert meta["latest_learn"]["h_model"] == saved.server.latest_h_model.hex()


@pytest.mark.asyncio
async def test_load_restores_identity_and_owner_state(saved: Session) -> None:
    loaded = await Session.load(saved.workspace)

    assert loaded.server.sid == saved.server.sid
    assert loaded.server.pk == saved.server.pk
    assert loaded.server.eid == saved.server.eid
    assert loaded.owner.verifier.latest_h_model == saved.owner.verifier.latest_h_model
    assert loaded.owner.verifier.latest_c == saved.owner.verifier.latest_c
    assert len(loaded.transcript) == len(saved.transcript)
    assert len(loaded.dataset) == len(saved.dataset)


@pytest.mark.asyncio
async def test_loaded_session_keeps_serving(saved: Session, toy_dataset) -> None:
    loaded = await Session.load(saved.workspace)

    result = deletion_phase(
        loaded.server, [loaded.owner], [toy_dataset.point(5)], transcript=loaded.transcript
    )
    await loaded.save()

    assert result.accepted, result.failures()
    assert result.learn.h_model != saved.server.latest_h_model.hex()
    again = await Session.load(saved.workspace)
    assert again.latest("learn") == result.learn
    assert len(again.transcript) == len(loaded.transcript)


@pytest.mark.asyncio
async def test_latest_returns_most_recent_message(saved: Session) -> None:
    assert saved.latest("learn").h_model == saved.server.latest_h_model.hex()
    assert saved.latest("scrub") is None


@pytest.mark.asyncio
async def test_create_discards_previous_transcript(
    saved: Session, tiny_config, toy_dataset
) -> None:
    fresh = await Session.create(saved.workspace, tiny_config, toy_dataset)

    assert not (saved.workspace / TRANSCRIPT).exists()
    assert fresh.server.sid != saved.server.sid


@pytest.mark.asyncio
async def test_load_without_session_fails(tmp_path) -> None:
    with pytest.raises(SessionNotFound, match="run setup first"):
        await Session.load(tmp_path)
