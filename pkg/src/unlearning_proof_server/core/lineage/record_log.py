"""Append-only record log standing in for untrusted host memory.

Each record is framed as ``flags u8 | length u32 | payload``. Offsets returned
by :meth:`RecordLog.append` are byte positions of the frame, so a handle is
just an integer. Tombstoning flips bit 0 of the flags byte; bytes are never
reclaimed. ``raw`` is writable: the host controls this memory
and integrity is enforced by whoever reads it back.
"""

from __future__ import annotations

import logging
import struct
import threading
from collections.abc import Iterator
from pathlib import Path

import aiofiles

from ..errors import StoreCorrupted

logger = logging.getLogger(__name__)

_FRAME = struct.Struct("<BI")
TOMBSTONE = 0x01


class RecordLog:
    def __init__(self, name: str, data: bytes | bytearray = b"") -> None:
        self.name = name
        self.raw = bytearray(data)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.raw)

    def __repr__(self) -> str:
        return f"<RecordLog {self.name} bytes={len(self.raw)}>"

    def append(self, payload: bytes) -> int:
        with self._lock:
            offset = len(self.raw)
            self.raw += _FRAME.pack(0, len(payload))
            self.raw += payload
            return offset

    def _frame(self, offset: int) -> tuple[int, int]:
        if offset < 0 or offset + _FRAME.size > len(self.raw):
            raise StoreCorrupted(f"{self.name}: no record frame at offset {offset}")
        flags, length = _FRAME.unpack_from(self.raw, offset)
        if offset + _FRAME.size + length > len(self.raw):
            raise StoreCorrupted(f"{self.name}: record at {offset} overruns the log")
        return flags, length

    def read(self, offset: int) -> bytes:
        _, length = self._frame(offset)
        start = offset + _FRAME.size
        return bytes(self.raw[start : start + length])

    def is_tombstoned(self, offset: int) -> bool:
        flags, _ = self._frame(offset)
        return bool(flags & TOMBSTONE)

    def tombstone(self, offset: int) -> None:
        with self._lock:
            flags, _ = self._frame(offset)
            self.raw[offset] = flags | TOMBSTONE

    def overwrite(self, offset: int, payload: bytes) -> None:
        """Replace a record's payload in place (same length only)."""
        with self._lock:
            _, length = self._frame(offset)
            if len(payload) != length:
                raise ValueError(f"payload length {len(payload)} != record length {length}")
            start = offset + _FRAME.size
            self.raw[start : start + length] = payload

    def scan(self) -> Iterator[tuple[int, bool, bytes]]:
        """Walk every frame: (offset, tombstoned, payload)."""
        offset = 0
        while offset < len(self.raw):
            flags, length = self._frame(offset)
            start = offset + _FRAME.size
            yield offset, bool(flags & TOMBSTONE), bytes(self.raw[start : start + length])
            offset = start + length

    def payload_bytes(self) -> int:
        """Sum of live payload lengths, excluding framing and tombstones."""
        return sum(len(p) for _, dead, p in self.scan() if not dead)

    async def dump(self, path: str | Path) -> None:
        async with aiofiles.open(Path(path), "wb") as f:
            await f.write(bytes(self.raw))
        logger.debug("dumped %r to %s", self, path)

    @classmethod
    async def load(cls, name: str, path: str | Path) -> RecordLog:
        async with aiofiles.open(Path(path), "rb") as f:
            data = await f.read()
        return cls(name, data)
