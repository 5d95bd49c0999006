from __future__ import annotations

from pathlib import Path

import pytest
import pytest_asyncio

from unlearning_proof_server.bench import gen_dataset
from unlearning_proof_server.core.dataset import write_dataset
from unlearning_proof_server.core.session import AUDIT_LOG, META, TRANSCRIPT, SessionNotFound
from unlearning_proof_server.tools.protocol import (
    audit_impl,
    challenge_impl,
    delete_impl,
    membership_impl,
    setup_impl,
    verify_transcript_impl,
)

SMALL = {"points": 60, "slices": 3, "epochs": 1, "batch": 32, "buckets": 256, "seed": 4}


@pytest_asyncio.fixture
async def workspace(tmp_path: Path) -> str:
    ws = str(tmp_path / "ws")
    out = await setup_impl(workspace=ws, **SMALL)
    assert out["accepted"], out["failures"]
    return ws


@pytest.mark.asyncio
async def test_setup_impl_pins_the_enclave(tmp_path: Path) -> None:
    ws = tmp_path / "ws"

    out = await setup_impl(workspace=str(ws), **SMALL)

    assert out["accepted"] is True
    assert out["failures"] == {}
    assert out["points"] == 60
    assert out["config"]["n_slices"] == 3
    assert len(bytes.fromhex(out["pk"])) == 32
    assert out["prediction"]["label"] in (0, 1)
    assert (ws / META).is_file()
    assert (ws / TRANSCRIPT).is_file()


@pytest.mark.asyncio
async def test_setup_impl_env_workspace(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("POUL_WORKSPACE", str(tmp_path / "from-env"))

    out = await setup_impl(**SMALL)

    assert Path(out["workspace"]) == (tmp_path / "from-env").resolve()


@pytest.mark.asyncio
async def test_setup_impl_imports_a_dataset(tmp_path: Path) -> None:
    train, _ = gen_dataset(45, 0, seed=9)
    path = tmp_path / "train.bin"
    await write_dataset(path, train)

    out = await setup_impl(
        workspace=str(tmp_path / "ws"), dataset_path=str(path), slices=3, epochs=1, buckets=256
    )

    assert out["accepted"]
    assert out["points"] == 45


@pytest.mark.asyncio
async def test_setup_impl_rejects_wrong_feature_count(tmp_path: Path) -> None:
    train, _ = gen_dataset(20, 0, dim=16, seed=1)
    path = tmp_path / "narrow.bin"
    await write_dataset(path, train)

    with pytest.raises(ValueError, match="16 features"):
        await setup_impl(workspace=str(tmp_path / "ws"), dataset_path=str(path))


@pytest.mark.asyncio
async def test_setup_impl_rejects_too_few_points(tmp_path: Path) -> None:
    with pytest.raises(ValueError, match="fewer than shards x slices"):
        await setup_impl(workspace=str(tmp_path / "ws"), points=4, slices=6)


@pytest.mark.asyncio
async def test_challenge_impl_verifies(workspace: str) -> None:
    out = await challenge_impl(workspace=workspace)

    assert out["accepted"] is True
    assert out["reason"] == "ok"
    assert sum(out["scores"]) == pytest.approx(1.0, abs=1e-5)


@pytest.mark.asyncio
async def test_delete_then_membership(workspace: str) -> None:
    out = await delete_impl(indices=[0, 7], workspace=workspace)

    assert out["accepted"], out["failures"]
    assert len(out["deleted"]) == 2
    assert set(out["retrained"]) == {"0"}
    assert out["retrained"]["0"][-1] == 3

    gone = await membership_impl(index=0, workspace=workspace)
    kept = await membership_impl(index=1, workspace=workspace)
    assert (gone["present"], gone["accepted"]) == (False, True)
    assert (kept["present"], kept["accepted"]) == (True, True)
    assert gone["kid"] == out["deleted"][0]


@pytest.mark.asyncio
@pytest.mark.parametrize("indices", [[], [60], [-1], [2, 2]])
async def test_delete_impl_checks_indices(workspace: str, indices: list[int]) -> None:
    with pytest.raises(ValueError, match="indices|row"):
        await delete_impl(indices=indices, workspace=workspace)


@pytest.mark.asyncio
async def test_audit_impl_accepts_honest_log(workspace: str) -> None:
    out = await audit_impl(challenges=2, workspace=workspace)

    assert out["entries"] == 2
    assert out["alerts"] == {}
    assert out["report_accepted"] is True
    assert out["owner_accepted"] is True
    assert len((Path(workspace) / AUDIT_LOG).read_text(encoding="utf-8").splitlines()) == 2


@pytest.mark.asyncio
async def test_audit_impl_needs_a_challenge(workspace: str) -> None:
    with pytest.raises(ValueError, match="challenges"):
        await audit_impl(challenges=0, workspace=workspace)


@pytest.mark.asyncio
async def test_transcript_survives_every_tool(workspace: str) -> None:
    await challenge_impl(workspace=workspace)
    await delete_impl(indices=[3], workspace=workspace)
    await membership_impl(index=3, workspace=workspace)
    await audit_impl(challenges=1, workspace=workspace)

    out = await verify_transcript_impl(workspace=workspace)

    assert out["accepted"] is True, out["failures"]
    assert out["checked"] > 10


@pytest.mark.asyncio
async def test_tools_need_a_session(tmp_path: Path) -> None:
    with pytest.raises(SessionNotFound):
        await challenge_impl(workspace=str(tmp_path / "empty"))
