"""On-disk session workspace.

Layout::

    <workspace>/
        platform_secret     simulated platform sealing root
        sealed.bin          enclave keys, filter and key list (AES-GCM)
        data_store.log      untrusted data records
        model_link.log      untrusted submodel records
        dataset.bin         the committed dataset (import format)
        session.json        config, sid, pinned pk/eid, program digests, owner state
        transcript.jsonl    every exchanged message, in order

The owner-side fields of ``session.json`` (pinned key, latest receipt and
learn proof) are what a real owner would keep on its own machine.
"""

from __future__ import annotations

import asyncio
import logging
import os
from pathlib import Path

import aiofiles
from pydantic import BaseModel, ConfigDict, Field

from .config import PipelineConfig
from .dataset import Dataset, read_dataset, write_dataset
from .enclave.sgx import EnclaveSimulator
from .errors import UnlearningProofError
from .lineage.record_log import RecordLog
from .protocol import messages as m
from .protocol.phases import pin_owner
from .protocol.server import UnlearningServer
from .protocol.transcript import Transcript, parse_message, read_transcript
from .protocol.verifier import DataOwner, Verifier

logger = logging.getLogger(__name__)

PLATFORM_SECRET = "platform_secret"
SEALED = "sealed.bin"
DATA_STORE = "data_store.log"
MODEL_LINK = "model_link.log"
DATASET = "dataset.bin"
META = "session.json"
TRANSCRIPT = "transcript.jsonl"
AUDIT_LOG = "audit.jsonl"


class SessionNotFound(UnlearningProofError):
    """No session in the workspace."""


class SessionMeta(BaseModel):
    model_config = ConfigDict(frozen=True)

    sid: str
    eid: str
    pk: str
    program_digests: dict[int, str]
    config: dict
    latest_receipt: m.Receipt | None = None
    latest_learn: m.LearnProof | None = None
    deleted: list[int] = Field(default_factory=list)
    challenges: int = 0


async def _read_bytes(path: Path) -> bytes:
    async with aiofiles.open(path, "rb") as f:
        return await f.read()


async def _write_bytes(path: Path, data: bytes) -> None:
    async with aiofiles.open(path, "wb") as f:
        await f.write(data)


class Session:
    """A live server plus the owner state and transcript stored next to it."""

    def __init__(
        self,
        workspace: Path,
        server: UnlearningServer,
        dataset: Dataset,
        transcript: Transcript,
        *,
        meta: SessionMeta | None = None,
    ) -> None:
        self.workspace = workspace
        self.server = server
        self.dataset = dataset
        self.transcript = transcript
        self._persisted = len(transcript)
        self.deleted: list[int] = list(meta.deleted) if meta else []
        self.challenges = meta.challenges if meta else 0
        if meta is None:
            self.owner = pin_owner(server, seed=None)
        else:
            self.owner = self._owner_from(meta)

    def __repr__(self) -> str:
        return f"<Session {self.server.sid} at {self.workspace}>"

    @staticmethod
    def _owner_from(meta: SessionMeta) -> DataOwner:
        verifier = Verifier(
            pk=bytes.fromhex(meta.pk),
            eid=bytes.fromhex(meta.eid),
            sid=meta.sid,
            program_digests={k: bytes.fromhex(v) for k, v in meta.program_digests.items()},
        )
        if meta.latest_receipt is not None:
            verifier.latest_c = bytes.fromhex(meta.latest_receipt.c)
        if meta.latest_learn is not None:
            verifier.latest_h_model = bytes.fromhex(meta.latest_learn.h_model)
        return DataOwner(verifier, seed=None)

    @property
    def config(self) -> PipelineConfig:
        return self.server.config

    def latest(self, kind: str) -> m.SignedMessage | None:
        for rec in reversed(self.transcript.records):
            if rec.type == kind:
                return parse_message(rec.body)
        return None

    def meta(self) -> SessionMeta:
        v = self.owner.verifier
        return SessionMeta(
            sid=self.server.sid,
            eid=v.eid.hex(),
            pk=v.pk.hex(),
            program_digests={k: d.hex() for k, d in v.program_digests.items()},
            config=self.config.to_dict(),
            latest_receipt=self.latest("receipt"),
            latest_learn=self.latest("learn"),
            deleted=self.deleted,
            challenges=self.challenges,
        )

    @classmethod
    async def create(
        cls,
        workspace: str | Path,
        config: PipelineConfig,
        dataset: Dataset,
    ) -> Session:
        ws = Path(workspace)
        ws.mkdir(parents=True, exist_ok=True)
        secret = os.urandom(32)
        await _write_bytes(ws / PLATFORM_SECRET, secret)
        await write_dataset(ws / DATASET, dataset)
        server = UnlearningServer(config, enclave=EnclaveSimulator(platform_secret=secret))
        transcript = Transcript(server.sid, server.eid, server.program_digests)
        transcript_path = ws / TRANSCRIPT
        if transcript_path.exists():
            transcript_path.unlink()
        return cls(ws, server, dataset, transcript)

    @classmethod
    async def load(cls, workspace: str | Path) -> Session:
        ws = Path(workspace)
        if not (ws / META).exists():
            raise SessionNotFound(f"no session in {ws}; run setup first")
        async with aiofiles.open(ws / META, encoding="utf-8") as f:
            meta = SessionMeta.model_validate_json(await f.read())
        secret = await _read_bytes(ws / PLATFORM_SECRET)
        sealed = await _read_bytes(ws / SEALED)
        data_store = await RecordLog.load("data_store", ws / DATA_STORE)
        model_link = await RecordLog.load("model_link", ws / MODEL_LINK)
        dataset = await read_dataset(ws / DATASET)
        config = PipelineConfig.from_dict(meta.config)
        server = await asyncio.to_thread(
            UnlearningServer,
            config,
            enclave=EnclaveSimulator(platform_secret=secret),
            sid=meta.sid,
            data_store=data_store,
            model_link=model_link,
            sealed=sealed,
        )
        if meta.latest_receipt is not None:
            server.latest_c = bytes.fromhex(meta.latest_receipt.c)
        if meta.latest_learn is not None:
            server.latest_h_model = bytes.fromhex(meta.latest_learn.h_model)
        records = await read_transcript(ws / TRANSCRIPT) if (ws / TRANSCRIPT).exists() else []
        transcript = Transcript(server.sid, server.eid, server.program_digests, records)
        logger.info("loaded session %s (%s transcript records)", meta.sid, len(records))
        return cls(ws, server, dataset, transcript, meta=meta)

    async def save(self) -> None:
        """Seal enclave state, dump the stores and append new transcript records."""
        ws = self.workspace
        await _write_bytes(ws / SEALED, self.server.seal())
        await self.server.data_store.dump(ws / DATA_STORE)
        await self.server.model_link.dump(ws / MODEL_LINK)
        async with aiofiles.open(ws / META, "w", encoding="utf-8") as f:
            await f.write(self.meta().model_dump_json(indent=2))
        if self._persisted == 0:
            await self.transcript.dump(ws / TRANSCRIPT)
        else:
            await self.transcript.append_to(ws / TRANSCRIPT, self._persisted)
        self._persisted = len(self.transcript)
        logger.debug("saved session %s to %s", self.server.sid, ws)

