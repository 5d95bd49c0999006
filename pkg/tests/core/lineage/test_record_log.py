from __future__ import annotations

from pathlib import Path

import pytest

from unlearning_proof_server.core.errors import StoreCorrupted
from unlearning_proof_server.core.lineage.record_log import RecordLog


def test_append_read_tombstone() -> None:
    log = RecordLog("data_store")
    a = log.append(b"alpha")
    b = log.append(b"bravo!")

    assert log.read(a) == b"alpha"
    assert log.read(b) == b"bravo!"
    assert log.payload_bytes() == 11

    log.tombstone(a)
    assert log.is_tombstoned(a)
    assert log.read(a) == b"alpha"
    assert log.payload_bytes() == 6
    assert [(off, dead) for off, dead, _ in log.scan()] == [(a, True), (b, False)]


def test_overwrite_same_length_only() -> None:
    log = RecordLog("model_link")
    off = log.append(b"1234")
    log.overwrite(off, b"abcd")
    assert log.read(off) == b"abcd"
    with pytest.raises(ValueError):
        log.overwrite(off, b"abc")


def test_bad_offsets() -> None:
    log = RecordLog("data_store")
    log.append(b"x")
    with pytest.raises(StoreCorrupted):
        log.read(100)
    with pytest.raises(StoreCorrupted):
        log.read(-1)

    log.raw[1:5] = (1000).to_bytes(4, "little")
    with pytest.raises(StoreCorrupted, match="overruns"):
        log.read(0)


@pytest.mark.asyncio
async def test_dump_and_load(tmp_path: Path) -> None:
    log = RecordLog("data_store")
    offs = [log.append(bytes([i]) * (i + 1)) for i in range(5)]
    log.tombstone(offs[2])

    await log.dump(tmp_path / "data_store.log")
    loaded = await RecordLog.load("data_store", tmp_path / "data_store.log")

    assert loaded.raw == log.raw
    assert loaded.is_tombstoned(offs[2])
    assert loaded.read(offs[4]) == bytes([4]) * 5
