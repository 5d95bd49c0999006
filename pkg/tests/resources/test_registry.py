from __future__ import annotations

import json
from pathlib import Path

import pytest
from mcp.server.fastmcp import FastMCP

from unlearning_proof_server.resources.registry import register_resources
from unlearning_proof_server.tools.protocol import setup_impl


@pytest.fixture
def mcp(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> FastMCP:
    monkeypatch.setenv("POUL_WORKSPACE", str(tmp_path / "ws"))
    server = FastMCP("poul-test", json_response=True)
    register_resources(server)
    return server


async def _read(mcp: FastMCP, uri: str) -> str:
    (content,) = list(await mcp.read_resource(uri))
    return content.content


@pytest.mark.asyncio
async def test_resources_are_listed(mcp: FastMCP) -> None:
    uris = {str(r.uri) for r in await mcp.list_resources()}

    assert {
        "app://poul/help",
        "app://poul/config",
        "app://poul/transcript",
        "app://poul/schemas/receipt",
        "app://poul/schemas/learn-proof",
        "app://poul/schemas/predict-proof",
    } <= uris


@pytest.mark.asyncio
async def test_help_names_the_workspace(mcp: FastMCP, tmp_path: Path) -> None:
    text = await _read(mcp, "app://poul/help")

    assert "app://poul/transcript" in text
    assert str((tmp_path / "ws").resolve()) in text


@pytest.mark.asyncio
async def test_config_without_session_shows_defaults(mcp: FastMCP) -> None:
    body = json.loads(await _read(mcp, "app://poul/config"))

    assert body["session"] is None
    assert body["config"]["n_slices"] == 6


@pytest.mark.asyncio
async def test_config_and_transcript_after_setup(mcp: FastMCP) -> None:
    out = await setup_impl(points=60, slices=3, epochs=1, batch=32, buckets=256)

    body = json.loads(await _read(mcp, "app://poul/config"))
    lines = (await _read(mcp, "app://poul/transcript")).splitlines()

    assert body["session"] == out["sid"]
    assert body["config"]["n_slices"] == 3
    assert json.loads(lines[0])["type"] == "receipt"
    assert json.loads(lines[-1])["type"] == "predict"


@pytest.mark.asyncio
async def test_missing_transcript_is_an_error(mcp: FastMCP) -> None:
    with pytest.raises(Exception, match="No transcript"):
        await _read(mcp, "app://poul/transcript")


@pytest.mark.asyncio
async def test_message_schemas(mcp: FastMCP) -> None:
    schema = json.loads(await _read(mcp, "app://poul/schemas/learn-proof"))

    assert {"c", "h_model", "signature"} <= set(schema["properties"])
