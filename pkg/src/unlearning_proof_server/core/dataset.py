"""Data points, content-derived kids and the packed dataset file format.

File layout (little-endian)::

    b"POUL" | version u32 | count u32 | dim u32 | classes u32
    count x ( label u16 | dim x f32 )
"""

from __future__ import annotations

import logging
import struct
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path

import aiofiles
import mmh3
import numpy as np

logger = logging.getLogger(__name__)

FILE_MAGIC = b"POUL"
FILE_VERSION = 1
_FILE_HEADER = struct.Struct("<4sIIII")
_POINT_HEADER = struct.Struct("<HI")
_OWNER_LEN = struct.Struct("<H")
_F32 = np.dtype("<f4")


def h64(data: bytes) -> int:
    """The fixed 64-bit non-cryptographic hash used for kids (MurmurHash3 x64)."""
    return mmh3.hash64(data, signed=False)[0]


@dataclass(frozen=True, slots=True, eq=False)
class DataPoint:
    features: np.ndarray
    label: int
    owner: str | None = None

    def content_bytes(self) -> bytes:
        """Label, dimension and features; the owner is not part of the content."""
        feats = np.ascontiguousarray(self.features, dtype=_F32)
        return _POINT_HEADER.pack(self.label, feats.shape[0]) + feats.tobytes()

    def encode(self) -> bytes:
        """Canonical record bytes: content followed by the length-prefixed owner."""
        owner = (self.owner or "").encode("utf-8")
        return self.content_bytes() + _OWNER_LEN.pack(len(owner)) + owner

    @classmethod
    def decode(cls, data: bytes) -> DataPoint:
        label, dim = _POINT_HEADER.unpack_from(data)
        off = _POINT_HEADER.size
        feats = np.frombuffer(data, dtype=_F32, count=dim, offset=off)
        off += dim * 4
        (n,) = _OWNER_LEN.unpack_from(data, off)
        owner = data[off + _OWNER_LEN.size : off + _OWNER_LEN.size + n].decode("utf-8")
        return cls(features=feats, label=label, owner=owner or None)

    @property
    def kid(self) -> int:
        return kid_of(self.content_bytes(), self.owner)


def kid_of(content: bytes, owner: str | None = None) -> int:
    """kid = H64(data), or H64(owner || data) when the point has an owner."""
    if owner:
        return h64(owner.encode("utf-8") + content)
    return h64(content)


class Dataset:
    """Row-major features plus labels, optionally tagged with owners."""

    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        *,
        classes: int | None = None,
        owners: Sequence[str | None] | None = None,
    ) -> None:
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape[0] != features.shape[0]:
            raise ValueError(
                f"{labels.shape[0]} labels for {features.shape[0]} feature rows"
            )
        if owners is not None and len(owners) != features.shape[0]:
            raise ValueError(f"{len(owners)} owners for {features.shape[0]} rows")
        self.features = np.ascontiguousarray(features, dtype=np.float32)
        self.labels = labels.astype(np.int64, copy=False)
        self.classes = classes if classes is not None else int(labels.max(initial=0)) + 1
        self.owners = tuple(owners) if owners is not None else None
        self._kids: list[int] | None = None

    def __len__(self) -> int:
        return self.features.shape[0]

    def __iter__(self) -> Iterator[DataPoint]:
        for i in range(len(self)):
            yield self.point(i)

    def __repr__(self) -> str:
        return f"<Dataset n={len(self)} dim={self.dim} classes={self.classes}>"

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def point(self, index: int) -> DataPoint:
        owner = self.owners[index] if self.owners is not None else None
        return DataPoint(self.features[index], int(self.labels[index]), owner)

    @property
    def kids(self) -> list[int]:
        if self._kids is None:
            self._kids = [p.kid for p in self]
        return self._kids

    def with_owners(self, owners: Sequence[str | None]) -> Dataset:
        return Dataset(self.features, self.labels, classes=self.classes, owners=owners)

    def subset(self, rows: Sequence[int] | np.ndarray) -> Dataset:
        idx = np.asarray(rows, dtype=np.int64)
        owners = [self.owners[i] for i in idx] if self.owners is not None else None
        return Dataset(self.features[idx], self.labels[idx], classes=self.classes, owners=owners)


def encode_dataset(ds: Dataset) -> bytes:
    header = _FILE_HEADER.pack(FILE_MAGIC, FILE_VERSION, len(ds), ds.dim, ds.classes)
    rec = np.dtype([("label", "<u2"), ("x", _F32, (ds.dim,))])
    body = np.empty(len(ds), dtype=rec)
    body["label"] = ds.labels
    body["x"] = ds.features
    return header + body.tobytes()


def decode_dataset(blob: bytes) -> Dataset:
    if len(blob) < _FILE_HEADER.size:
        raise ValueError("dataset file shorter than its header")
    magic, version, count, dim, classes = _FILE_HEADER.unpack_from(blob)
    if magic != FILE_MAGIC:
        raise ValueError(f"bad dataset magic {magic!r}")
    if version != FILE_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    rec = np.dtype([("label", "<u2"), ("x", _F32, (dim,))])
    expected = _FILE_HEADER.size + count * rec.itemsize
    if len(blob) != expected:
        raise ValueError(f"dataset file has {len(blob)} bytes, header implies {expected}")
    body = np.frombuffer(blob, dtype=rec, count=count, offset=_FILE_HEADER.size)
    return Dataset(body["x"].copy(), body["label"].astype(np.int64), classes=classes)


async def write_dataset(path: str | Path, ds: Dataset) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    async with aiofiles.open(p, "wb") as f:
        await f.write(encode_dataset(ds))
    logger.info("wrote %s (%s records, dim=%s)", p, len(ds), ds.dim)


async def read_dataset(path: str | Path) -> Dataset:
    async with aiofiles.open(Path(path), "rb") as f:
        blob = await f.read()
    return decode_dataset(blob)
