"""MCP server entrypoint (stdio transport).

This module wires together:
- Tools: the data owner's side of the protocol (setup, challenge, delete, audit)
- Resources: help text, the session config and transcript, message schemas

Run locally (stdio):
    python -m unlearning_proof_server.server.poul_server
"""

from __future__ import annotations

import logging
import os
import sys
from collections.abc import Sequence
from typing import Any

from mcp.server.fastmcp import FastMCP

from unlearning_proof_server.core.config import LOG_LEVEL_ENV
from unlearning_proof_server.resources.registry import register_resources
from unlearning_proof_server.tools.protocol import (
    audit_impl,
    challenge_impl,
    delete_impl,
    membership_impl,
    setup_impl,
    verify_transcript_impl,
)

LOGGER = logging.getLogger(__name__)


def _configure_logging() -> None:
    level_name = os.getenv(LOG_LEVEL_ENV, "INFO").upper()
    level = getattr(logging, level_name, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


mcp = FastMCP("poul", json_response=True)

register_resources(mcp)


@mcp.tool()
async def poul_setup(
    workspace: str | None = None,
    dataset_path: str | None = None,
    points: int = 2_000,
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
    """Start a session: commit the dataset, train, and verify the first proofs.

    Parameters
    ----------
    workspace : str | None
        Session directory (default: POUL_WORKSPACE or ./.poul). Overwritten.
    dataset_path : str | None
        Dataset file in the import format; a synthetic set is generated if omitted.
    points : int
        Size of the synthetic training set.
    shards, slices : int | None
        SISA layout.
    batch, epochs, lr, seed : int | float | None
        Training hyper-parameters.
    fp_bits, buckets, entries_per_bucket : int | None
        Cuckoo filter geometry.

    Returns
    -------
    dict[str, Any]
        Session id, pinned enclave key and eid, commitment and model digests,
        and per-check verdicts under `accepted` / `failures`.
    """
    return await setup_impl(
        workspace=workspace,
        dataset_path=dataset_path,
        points=points,
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


@mcp.tool()
async def poul_challenge(workspace: str | None = None) -> dict[str, Any]:
    """Send a random test input and verify the signed prediction."""
    return await challenge_impl(workspace=workspace)


@mcp.tool()
async def poul_delete(
    indices: list[int],
    requester: str | None = None,
    workspace: str | None = None,
) -> dict[str, Any]:
    """Delete dataset rows and verify that the served model unlearned them.

    Parameters
    ----------
    indices : list[int]
        Row indices into the session dataset. All rows go in one request.
    requester : str | None
        Owner tag; must match the owner tag of every row when rows are owned.
    workspace : str | None
        Session directory.

    Returns
    -------
    dict[str, Any]
        Deleted kids, retrained (shard -> slices), new digests and verdicts.
    """
    return await delete_impl(indices=indices, requester=requester, workspace=workspace)


@mcp.tool()
async def poul_membership(index: int, workspace: str | None = None) -> dict[str, Any]:
    """Ask whether a dataset row is still committed; the answer is enclave-signed."""
    return await membership_impl(index=index, workspace=workspace)


@mcp.tool()
async def poul_audit(challenges: int = 3, workspace: str | None = None) -> dict[str, Any]:
    """Run challenges under an auditing enclave and verify its signed log."""
    return await audit_impl(challenges=challenges, workspace=workspace)


@mcp.tool()
async def poul_verify_transcript(workspace: str | None = None) -> dict[str, Any]:
    """Re-verify every stored proof offline against the pinned enclave key."""
    return await verify_transcript_impl(workspace=workspace)


def main(argv: Sequence[str] | None = None) -> None:
    """Start the MCP server over stdio."""
    _configure_logging()
    LOGGER.debug("Starting MCP server (transport=stdio)")
    _ = argv or sys.argv[1:]
    mcp.run(transport="stdio")


if __name__ == "__main__":
    main()
