from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from unlearning_proof_server.core.dataset import (
    DataPoint,
    Dataset,
    decode_dataset,
    encode_dataset,
    kid_of,
    read_dataset,
    write_dataset,
)


def test_kid_depends_on_content_and_owner() -> None:
    x = np.array([1.0, 0.0, 1.0], dtype=np.float32)
    plain = DataPoint(x, 1)
    owned = DataPoint(x, 1, owner="alice")

    assert plain.kid == kid_of(plain.content_bytes())
    assert owned.kid != plain.kid
    assert DataPoint(x, 0).kid != plain.kid
    assert 0 <= plain.kid < 1 << 64


def test_point_record_carries_owner() -> None:
    p = DataPoint(np.arange(4, dtype=np.float32), 3, owner="bob")
    q = DataPoint.decode(p.encode())

    assert q.owner == "bob"
    assert q.label == 3
    assert q.kid == p.kid
    assert DataPoint.decode(DataPoint(p.features, 3).encode()).owner is None


@pytest.mark.asyncio
async def test_dataset_file(tmp_path: Path, toy_dataset: Dataset) -> None:
    path = tmp_path / "train.bin"
    await write_dataset(path, toy_dataset)

    loaded = await read_dataset(path)

    assert loaded.kids == toy_dataset.kids
    assert loaded.classes == toy_dataset.classes
    assert path.stat().st_size == 20 + len(toy_dataset) * (2 + 4 * toy_dataset.dim)


def test_decode_rejects_bad_files(toy_dataset: Dataset) -> None:
    blob = encode_dataset(toy_dataset)
    with pytest.raises(ValueError, match="magic"):
        decode_dataset(b"XXXX" + blob[4:])
    with pytest.raises(ValueError, match="bytes"):
        decode_dataset(blob[:-1])
    with pytest.raises(ValueError):
        decode_dataset(b"PO")


def test_shape_checks() -> None:
    with pytest.raises(ValueError):
        Dataset(np.zeros(3, dtype=np.float32), np.zeros(3))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2), dtype=np.float32), np.zeros(2))


def test_subset_and_owners(toy_dataset: Dataset) -> None:
    owned = toy_dataset.with_owners([f"o{i % 2}" for i in range(len(toy_dataset))])
    sub = owned.subset([0, 2, 4])

    assert len(sub) == 3
    assert sub.owners == ("o0", "o0", "o0")
    assert sub.kids == [owned.kids[i] for i in (0, 2, 4)]
