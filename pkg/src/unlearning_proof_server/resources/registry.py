"""MCP resource registry.

Resources are addressable by URI and can be fetched by the MCP client on demand.
The session resources read the workspace named by POUL_WORKSPACE.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import aiofiles
from mcp.server.fastmcp import FastMCP

from unlearning_proof_server.core.config import WORKSPACE_ENV, PipelineConfig, resolve_workspace
from unlearning_proof_server.core.protocol import LearnProof, PredictProof, Receipt
from unlearning_proof_server.core.session import META, TRANSCRIPT

TEXT_ENCODING = "utf-8"


async def _read_text(path: Path) -> str:
    async with aiofiles.open(path, encoding=TEXT_ENCODING) as f:
        return await f.read()


def register_resources(mcp: FastMCP) -> None:
    """Register resource handlers on the MCP server."""

    @mcp.resource("app://poul/help")
    def help_resource() -> str:
        """Return a short list of available resource URIs."""
        return (
            "Resources:\n"
            "- app://poul/help\n"
            "- app://poul/config\n"
            "- app://poul/transcript\n"
            "- app://poul/schemas/receipt\n"
            "- app://poul/schemas/learn-proof\n"
            "- app://poul/schemas/predict-proof\n"
            f"\nWorkspace: {resolve_workspace()} (set {WORKSPACE_ENV} to change)\n"
        )

    @mcp.resource("app://poul/config")
    async def config_resource() -> dict[str, Any]:
        """Return the session's pipeline config, or the defaults when no session exists."""
        meta = resolve_workspace() / META
        if not meta.exists():
            return {"session": None, "config": PipelineConfig().to_dict()}
        body = json.loads(await _read_text(meta))
        return {"session": body["sid"], "config": body["config"]}

    @mcp.resource("app://poul/transcript")
    async def transcript_resource() -> str:
        """Return the session transcript as JSON lines."""
        path = resolve_workspace() / TRANSCRIPT
        if not path.exists():
            raise FileNotFoundError(f"No transcript at {path}; run poul_setup first")
        return await _read_text(path)

    @mcp.resource("app://poul/schemas/receipt")
    def receipt_schema() -> dict[str, Any]:
        return Receipt.model_json_schema()

    @mcp.resource("app://poul/schemas/learn-proof")
    def learn_proof_schema() -> dict[str, Any]:
        return LearnProof.model_json_schema()

    @mcp.resource("app://poul/schemas/predict-proof")
    def predict_proof_schema() -> dict[str, Any]:
        return PredictProof.model_json_schema()
