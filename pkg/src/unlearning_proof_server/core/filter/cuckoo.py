"""Deletable cuckoo filter over keyed fingerprints.

Buckets hold ``entries_per_bucket`` slots; a slot is 0 when empty, otherwise a
``fingerprint_bits``-bit fingerprint (never 0). Partial-key cuckoo hashing:
``i1 = h1 mod B`` and ``i2 = i1 XOR (Hash64(fp) mod B)``, so either index can
be recovered from the other and the fingerprint alone.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass

import mmh3
import numpy as np
from cryptography.hazmat.primitives import cmac
from cryptography.hazmat.primitives.ciphers import algorithms

_HEADER = struct.Struct("<4sIIIIQQ")
_MAGIC = b"CKOO"


@dataclass(frozen=True, slots=True)
class FilterConfig:
    bucket_count: int = 1 << 16
    entries_per_bucket: int = 4
    fingerprint_bits: int = 12
    displacement_limit: int = 500
    eviction_seed: int = 0

    def __post_init__(self) -> None:
        b = self.bucket_count
        if b < 1 or b & (b - 1):
            raise ValueError(f"bucket_count must be a power of two (got {b})")
        if not 1 <= self.fingerprint_bits <= 32:
            raise ValueError(f"fingerprint_bits must be in [1, 32] (got {self.fingerprint_bits})")
        if self.entries_per_bucket < 1:
            raise ValueError("entries_per_bucket must be >= 1")
        if self.displacement_limit < 0:
            raise ValueError("displacement_limit must be >= 0")
        if not 0 <= self.eviction_seed < 1 << 64:
            raise ValueError(f"eviction_seed must fit in 64 bits (got {self.eviction_seed})")

    @property
    def slot_count(self) -> int:
        return self.bucket_count * self.entries_per_bucket

    @property
    def table_bytes(self) -> int:
        """Size of the packed bucket array: buckets * entries * bits / 8."""
        return -(-self.slot_count * self.fingerprint_bits // 8)


def fingerprint(
    kid: int,
    data: bytes,
    eid: bytes,
    prf_key: bytes,
    *,
    bits: int,
    owner: str | None = None,
) -> int:
    """Keyed fingerprint Enc(kid || data || eid [|| owner]) truncated to ``bits``.

    AES-CMAC under the enclave-held key is the 128-bit-block PRF. A truncated
    value of 0 is remapped to 1 (0 marks an empty slot), biasing that value by
    at most 2^-bits.
    """
    mac = cmac.CMAC(algorithms.AES(prf_key))
    mac.update(kid.to_bytes(8, "little"))
    mac.update(data)
    mac.update(eid)
    if owner is not None:
        mac.update(owner.encode("utf-8"))
    value = int.from_bytes(mac.finalize()[:4], "little") & ((1 << bits) - 1)
    return value or 1


class CuckooFilter:
    """Approximate membership with O(1) insert, query and delete.

    Single writer. Readers may run concurrently between mutations; the
    enclave serializes mutation and digest.
    """

    def __init__(self, config: FilterConfig | None = None) -> None:
        self.config = config or FilterConfig()
        self._mask = self.config.bucket_count - 1
        self._buckets: list[list[int]] = [
            [0] * self.config.entries_per_bucket for _ in range(self.config.bucket_count)
        ]
        self._offsets: dict[int, int] = {}
        self.item_count = 0
        self.evictions = 0

    def __repr__(self) -> str:
        cfg = self.config
        return (
            f"<CuckooFilter items={self.item_count} buckets={cfg.bucket_count} "
            f"entries={cfg.entries_per_bucket} fp_bits={cfg.fingerprint_bits}>"
        )

    @property
    def load_factor(self) -> float:
        return self.item_count / self.config.slot_count

    def _offset(self, fp: int) -> int:
        off = self._offsets.get(fp)
        if off is None:
            off = mmh3.hash64(fp.to_bytes(4, "little"), signed=False)[0] & self._mask
            self._offsets[fp] = off
        return off

    def index_pair(self, h1: int, fp: int) -> tuple[int, int]:
        i1 = h1 & self._mask
        return i1, i1 ^ self._offset(fp)

    def alt_index(self, index: int, fp: int) -> int:
        return index ^ self._offset(fp)

    def insert(self, fp: int, h1: int) -> bool:
        """Store fp; False when the displacement limit is exhausted.

        A failed insertion leaves the table exactly as it was.
        """
        if fp == 0:
            raise ValueError("fingerprint 0 is reserved for empty slots")
        i1, i2 = self.index_pair(h1, fp)
        for i in (i1, i2):
            bucket = self._buckets[i]
            if 0 in bucket:
                bucket[bucket.index(0)] = fp
                self.item_count += 1
                return True

        # Victim choice depends only on (eviction_seed, evictions).
        rng = random.Random((self.config.eviction_seed << 64) | self.evictions)
        swaps: list[tuple[int, int, int]] = []
        i = rng.choice((i1, i2))
        for _ in range(self.config.displacement_limit):
            slot = rng.randrange(self.config.entries_per_bucket)
            bucket = self._buckets[i]
            swaps.append((i, slot, bucket[slot]))
            fp, bucket[slot] = bucket[slot], fp
            i = self.alt_index(i, fp)
            bucket = self._buckets[i]
            if 0 in bucket:
                bucket[bucket.index(0)] = fp
                self.item_count += 1
                self.evictions += 1
                return True

        for i, slot, old in reversed(swaps):
            self._buckets[i][slot] = old
        return False

    def query(self, fp: int, h1: int) -> bool:
        i1, i2 = self.index_pair(h1, fp)
        return fp in self._buckets[i1] or fp in self._buckets[i2]

    def delete(self, fp: int, h1: int) -> bool:
        i1, i2 = self.index_pair(h1, fp)
        for i in (i1, i2):
            bucket = self._buckets[i]
            if fp in bucket:
                bucket[bucket.index(fp)] = 0
                self.item_count -= 1
                return True
        return False

    def bucket(self, index: int) -> tuple[int, ...]:
        return tuple(self._buckets[index])

    def serialize(self) -> bytes:
        """Config header, then the bucket array bit-packed little-endian."""
        cfg = self.config
        header = _HEADER.pack(
            _MAGIC,
            cfg.bucket_count,
            cfg.entries_per_bucket,
            cfg.fingerprint_bits,
            self.item_count,
            cfg.eviction_seed,
            self.evictions,
        )
        slots = np.fromiter(
            (v for bucket in self._buckets for v in bucket), dtype=np.uint32, count=cfg.slot_count
        )
        shifts = np.arange(cfg.fingerprint_bits, dtype=np.uint32)
        bits = ((slots[:, None] >> shifts) & 1).astype(np.uint8)
        return header + np.packbits(bits.ravel(), bitorder="little").tobytes()

    @classmethod
    def deserialize(cls, blob: bytes, *, displacement_limit: int = 500) -> CuckooFilter:
        magic, buckets, entries, fp_bits, items, eviction_seed, evictions = _HEADER.unpack_from(
            blob
        )
        if magic != _MAGIC:
            raise ValueError("not a serialized cuckoo filter")
        cfg = FilterConfig(
            bucket_count=buckets,
            entries_per_bucket=entries,
            fingerprint_bits=fp_bits,
            displacement_limit=displacement_limit,
            eviction_seed=eviction_seed,
        )
        out = cls(cfg)
        packed = np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size)
        bits = np.unpackbits(packed, count=cfg.slot_count * fp_bits, bitorder="little")
        weights = (np.uint64(1) << np.arange(fp_bits, dtype=np.uint64)).astype(np.uint64)
        slots = bits.reshape(-1, fp_bits).astype(np.uint64) @ weights
        flat = [int(v) for v in slots]
        out._buckets = [flat[k : k + entries] for k in range(0, len(flat), entries)]
        out.item_count = items
        out.evictions = evictions
        return out

    def digest(self) -> bytes:
        """h_c: SHA-256 over the canonical serialization."""
        return hashlib.sha256(self.serialize()).digest()
