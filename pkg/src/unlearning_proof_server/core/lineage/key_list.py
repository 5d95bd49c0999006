"""In-enclave key list: one packed lineage entry per committed data point.

Entry layout (52 bytes, little-endian)::

    kid u64 | tag u8 | data_link i64 | model_link i64 | seed u64
    | shard u16 | slice u16 | flags u8 | reserved 14x

Links use -1 for null. ``flags`` bit 0 marks the positional last entry of a
slice (the one that owns the submodel), bit 1 marks a valid seed.
"""

from __future__ import annotations

import hashlib
import struct
from collections.abc import Iterator
from dataclasses import dataclass, replace

from ..errors import DuplicateKid, UnknownKid

ENTRY = struct.Struct("<QBqqQHHB14x")
ENTRY_SIZE = ENTRY.size
NULL_LINK = -1

_SLICE_FINAL = 0x01
_SEED_VALID = 0x02


@dataclass(frozen=True, slots=True)
class KeyEntry:
    kid: int
    tag: int = 1
    data_link: int = NULL_LINK
    model_link: int = NULL_LINK
    seed: int | None = None
    shard: int = 0
    slice_index: int = 0
    slice_final: bool = False

    @property
    def live(self) -> bool:
        return self.tag == 1

    def pack(self) -> bytes:
        flags = (_SLICE_FINAL if self.slice_final else 0) | (
            _SEED_VALID if self.seed is not None else 0
        )
        return ENTRY.pack(
            self.kid,
            self.tag,
            self.data_link,
            self.model_link,
            self.seed or 0,
            self.shard,
            self.slice_index,
            flags,
        )

    @classmethod
    def unpack(cls, raw: bytes, offset: int = 0) -> KeyEntry:
        kid, tag, dlink, mlink, seed, shard, sl, flags = ENTRY.unpack_from(raw, offset)
        return cls(
            kid=kid,
            tag=tag,
            data_link=dlink,
            model_link=mlink,
            seed=seed if flags & _SEED_VALID else None,
            shard=shard,
            slice_index=sl,
            slice_final=bool(flags & _SLICE_FINAL),
        )


class KeyList:
    """Ordered entries with a kid index; order is commit order."""

    def __init__(self) -> None:
        self._entries: list[KeyEntry] = []
        self._index: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[KeyEntry]:
        return iter(self._entries)

    def __contains__(self, kid: object) -> bool:
        return kid in self._index

    def append(self, entry: KeyEntry) -> int:
        if entry.kid in self._index:
            raise DuplicateKid(f"kid {entry.kid:#018x} already in key list")
        pos = len(self._entries)
        self._entries.append(entry)
        self._index[entry.kid] = pos
        return pos

    def position(self, kid: int) -> int:
        try:
            return self._index[kid]
        except KeyError:
            raise UnknownKid(f"kid {kid:#018x} not in key list") from None

    def get(self, kid: int) -> KeyEntry:
        return self._entries[self.position(kid)]

    def at(self, position: int) -> KeyEntry:
        return self._entries[position]

    def update(self, kid: int, **changes: object) -> KeyEntry:
        pos = self.position(kid)
        entry = replace(self._entries[pos], **changes)
        self._entries[pos] = entry
        return entry

    def serialize(self) -> bytes:
        return b"".join(e.pack() for e in self._entries)

    @classmethod
    def deserialize(cls, blob: bytes) -> KeyList:
        if len(blob) % ENTRY_SIZE:
            raise ValueError(
                f"key list blob of {len(blob)} bytes is not a multiple of {ENTRY_SIZE}"
            )
        out = cls()
        for off in range(0, len(blob), ENTRY_SIZE):
            out.append(KeyEntry.unpack(blob, off))
        return out

    def digest(self) -> bytes:
        return hashlib.sha256(self.serialize()).digest()

    @property
    def serialized_size(self) -> int:
        return len(self._entries) * ENTRY_SIZE
