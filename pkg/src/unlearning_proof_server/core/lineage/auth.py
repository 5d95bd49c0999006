"""Authenticated lineage layer: filter + key list inside, MAC'd stores outside.

The store object lives behind the enclave boundary. It owns the cuckoo filter,
the key list and the enclave's MAC/PRF keys; ``data_store`` and ``model_link``
are untrusted :class:`RecordLog` buffers the host may read and modify freely.

Record payloads::

    data_store : kid u64 | data | dmac[16]          dmac = CMAC(k_mac, kid || data)
    model_link : shard u32 | slice u32 | mac[32] | model bytes
                                                    mac  = SHA-256(model || seed u64)
"""

from __future__ import annotations

import hashlib
import hmac
import logging
import struct
import threading
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import cmac
from cryptography.hazmat.primitives.ciphers import algorithms

from ..dataset import DataPoint
from ..errors import (
    AlreadyDeleted,
    DeletedData,
    DeletedOrForged,
    DuplicateKid,
    FilterFullError,
    InvalidatedSubmodel,
    NotSliceFinal,
    ReplacingAttack,
    RollbackOrRelocationAttack,
    StoreCorrupted,
    Unauthorized,
)
from ..filter.cuckoo import CuckooFilter, FilterConfig, fingerprint
from .key_list import NULL_LINK, KeyEntry, KeyList
from .record_log import RecordLog

logger = logging.getLogger(__name__)

DMAC_SIZE = 16
_KID = struct.Struct("<Q")
_MODEL_HEADER = struct.Struct("<II32s")
MODEL_HEADER_SIZE = _MODEL_HEADER.size


def model_mac(model: bytes, seed: int) -> bytes:
    """m_s_mac = H(model || seed); the secret is the seed, not a key."""
    return hashlib.sha256(model + seed.to_bytes(8, "little")).digest()


def model_record_placement(payload: bytes) -> tuple[int, int]:
    """(shard, slice) from a model_link record header. The header is not secret."""
    shard, slice_index, _ = _MODEL_HEADER.unpack_from(payload)
    return shard, slice_index


@dataclass(frozen=True, slots=True)
class Placement:
    """Where the host puts a committed point in the SISA plan."""

    shard: int
    slice_index: int
    slice_final: bool = False


class LineageStore:
    def __init__(
        self,
        *,
        eid: bytes,
        mac_key: bytes,
        prf_key: bytes,
        fresh_seed: Callable[[], int],
        filter_config: FilterConfig | None = None,
        data_store: RecordLog | None = None,
        model_link: RecordLog | None = None,
        cuckoo: CuckooFilter | None = None,
        key_list: KeyList | None = None,
    ) -> None:
        self.eid = eid
        self._mac_key = mac_key
        self._prf_key = prf_key
        self._fresh_seed = fresh_seed
        self.filter = cuckoo or CuckooFilter(filter_config)
        self.key_list = key_list or KeyList()
        self.data_store = data_store or RecordLog("data_store")
        self.model_link = model_link or RecordLog("model_link")
        self._lock = threading.RLock()
        self._slices: dict[tuple[int, int], list[int]] = {}
        self._finals: dict[tuple[int, int], int] = {}
        for pos, entry in enumerate(self.key_list):
            self._index_entry(pos, entry)

    def __repr__(self) -> str:
        return f"<LineageStore entries={len(self.key_list)} filter={self.filter!r}>"

    def _index_entry(self, pos: int, entry: KeyEntry) -> None:
        key = (entry.shard, entry.slice_index)
        self._slices.setdefault(key, []).append(pos)
        if entry.slice_final:
            self._finals[key] = entry.kid

    # -- MACs and fingerprints ------------------------------------------------

    def _dmac(self, kid: int, data: bytes) -> bytes:
        c = cmac.CMAC(algorithms.AES(self._mac_key))
        c.update(_KID.pack(kid))
        c.update(data)
        return c.finalize()

    def _dmac_ok(self, kid: int, data: bytes, tag: bytes) -> bool:
        c = cmac.CMAC(algorithms.AES(self._mac_key))
        c.update(_KID.pack(kid))
        c.update(data)
        try:
            c.verify(tag)
        except InvalidSignature:
            return False
        return True

    def fingerprint(self, kid: int, data: bytes, owner: str | None) -> int:
        return fingerprint(
            kid,
            data,
            self.eid,
            self._prf_key,
            bits=self.filter.config.fingerprint_bits,
            owner=owner,
        )

    def contains(self, kid: int, data: bytes, owner: str | None) -> bool:
        return self.filter.query(self.fingerprint(kid, data, owner), kid)

    # -- commit path ------------------------------------------------------------

    def append_data(self, kid: int, data: bytes, placement: Placement) -> int:
        """Append a MAC'd record and a live key entry; returns the data link."""
        with self._lock:
            if kid in self.key_list:
                raise DuplicateKid(f"kid {kid:#018x} already committed")
            link = self.data_store.append(_KID.pack(kid) + data + self._dmac(kid, data))
            entry = KeyEntry(
                kid=kid,
                tag=1,
                data_link=link,
                shard=placement.shard,
                slice_index=placement.slice_index,
                slice_final=placement.slice_final,
            )
            pos = self.key_list.append(entry)
            self._index_entry(pos, entry)
            return link

    def commit_add(self, kid: int, data: bytes, owner: str | None, placement: Placement) -> int:
        """Insert the fingerprint, then link the data. Nothing changes on failure."""
        with self._lock:
            if kid in self.key_list:
                raise DuplicateKid(f"kid {kid:#018x} already committed")
            fp = self.fingerprint(kid, data, owner)
            if not self.filter.insert(fp, kid):
                raise FilterFullError(
                    f"displacement limit {self.filter.config.displacement_limit} reached "
                    f"at load {self.filter.load_factor:.3f}"
                )
            return self.append_data(kid, data, placement)

    # -- checked reads ---------------------------------------------------------------

    def fetch_data_checked(self, kid: int) -> bytes:
        entry = self.key_list.get(kid)
        if not entry.live:
            raise DeletedData(f"kid {kid:#018x} is tagged deleted", kid=kid)
        try:
            payload = self.data_store.read(entry.data_link)
        except StoreCorrupted as exc:
            msg = f"data record for {kid:#018x} unreadable: {exc}"
            raise ReplacingAttack(msg, kid=kid) from exc
        if len(payload) < _KID.size + DMAC_SIZE:
            raise ReplacingAttack(f"data record for {kid:#018x} truncated", kid=kid)
        (rec_kid,) = _KID.unpack_from(payload)
        data = payload[_KID.size : -DMAC_SIZE]
        if not self._dmac_ok(rec_kid, data, payload[-DMAC_SIZE:]):
            raise ReplacingAttack(f"dmac mismatch for kid {kid:#018x}", kid=kid)
        if rec_kid != kid:
            raise DeletedOrForged(
                f"record at kid {kid:#018x} was written for kid {rec_kid:#018x}", kid=kid
            )
        try:
            owner = DataPoint.decode(data).owner
        except (ValueError, UnicodeDecodeError, struct.error):
            owner = None
        if not self.contains(kid, data, owner):
            raise DeletedOrForged(f"kid {kid:#018x} not in the committed filter", kid=kid)
        return data

    def iter_live(self, shard: int, upto_slice: int) -> Iterator[int]:
        """Live kids of slices 1..upto_slice of a shard, in key-list order."""
        for sl in range(1, upto_slice + 1):
            for pos in self._slices.get((shard, sl), ()):
                entry = self.key_list.at(pos)
                if entry.live:
                    yield entry.kid

    def slice_kids(self, shard: int, slice_index: int) -> list[int]:
        return [self.key_list.at(p).kid for p in self._slices.get((shard, slice_index), ())]

    # -- submodels ----------------------------------------------------------------------

    def final_kid(self, shard: int, slice_index: int) -> int:
        try:
            return self._finals[(shard, slice_index)]
        except KeyError:
            raise NotSliceFinal(
                f"no slice-final entry for shard {shard} slice {slice_index}"
            ) from None

    @property
    def shards(self) -> list[int]:
        return sorted({s for s, _ in self._finals})

    def n_slices(self, shard: int) -> int:
        return max((sl for s, sl in self._finals if s == shard), default=0)

    def first_invalid(self, shard: int) -> int | None:
        """Lowest slice whose submodel has no valid seed, or None if the chain is whole."""
        for sl in range(1, self.n_slices(shard) + 1):
            if self.key_list.get(self._finals[(shard, sl)]).seed is None:
                return sl
        return None

    def store_submodel(self, kid: int, model: bytes) -> int:
        with self._lock:
            entry = self.key_list.get(kid)
            if not entry.slice_final:
                raise NotSliceFinal(f"kid {kid:#018x} is not the last entry of its slice")
            if entry.model_link != NULL_LINK:
                self.model_link.tombstone(entry.model_link)
            seed = self._fresh_seed()
            header = _MODEL_HEADER.pack(entry.shard, entry.slice_index, model_mac(model, seed))
            link = self.model_link.append(header + model)
            self.key_list.update(kid, model_link=link, seed=seed)
            return link

    def _read_model(self, entry: KeyEntry) -> tuple[bytes, bytes]:
        if entry.seed is None or entry.model_link == NULL_LINK:
            raise InvalidatedSubmodel(
                f"submodel of shard {entry.shard} slice {entry.slice_index} was invalidated",
                kid=entry.kid,
            )
        try:
            payload = self.model_link.read(entry.model_link)
        except StoreCorrupted as exc:
            raise RollbackOrRelocationAttack(str(exc), kid=entry.kid) from exc
        if len(payload) < _MODEL_HEADER.size:
            raise RollbackOrRelocationAttack("model record truncated", kid=entry.kid)
        _, _, mac = _MODEL_HEADER.unpack_from(payload)
        return payload[_MODEL_HEADER.size :], mac

    def restore_submodel_checked(self, kid: int) -> bytes:
        entry = self.key_list.get(kid)
        model, mac = self._read_model(entry)
        assert entry.seed is not None
        if not hmac.compare_digest(model_mac(model, entry.seed), mac):
            raise RollbackOrRelocationAttack(
                f"H(model || seed) mismatch for shard {entry.shard} slice {entry.slice_index}",
                kid=kid,
            )
        return model

    def submodel_mac(self, kid: int) -> bytes:
        """m_s_mac of a verified submodel."""
        model = self.restore_submodel_checked(kid)
        seed = self.key_list.get(kid).seed
        assert seed is not None
        return model_mac(model, seed)

    # -- deletion ----------------------------------------------------------------

    def delete_and_invalidate(self, kid: int) -> list[int]:
        """Remove a point and invalidate its slice's submodel and every later one."""
        with self._lock:
            entry = self.key_list.get(kid)
            if not entry.live:
                raise AlreadyDeleted(f"kid {kid:#018x} was already deleted")
            data = self.fetch_data_checked(kid)
            owner = DataPoint.decode(data).owner
            self.filter.delete(self.fingerprint(kid, data, owner), kid)
            self.data_store.tombstone(entry.data_link)
            self.key_list.update(kid, tag=0, data_link=NULL_LINK)

            last = self.n_slices(entry.shard)
            invalidated = list(range(entry.slice_index, last + 1))
            for sl in invalidated:
                final = self.key_list.get(self._finals[(entry.shard, sl)])
                if final.model_link != NULL_LINK:
                    self.model_link.tombstone(final.model_link)
                self.key_list.update(final.kid, model_link=NULL_LINK, seed=None)
            logger.info(
                "deleted kid in shard %s slice %s; invalidated slices %s",
                entry.shard,
                entry.slice_index,
                invalidated,
            )
            return invalidated

    def delete_batch(
        self, kids: Iterable[int], requester: str | None = None
    ) -> dict[int, tuple[int, ...]]:
        """Delete several kids, foremost key-list position first.

        Every kid is checked before anything changes: it must be known, live,
        listed once and, when ``requester`` is set, owned by the requester.
        """
        kids = list(kids)
        with self._lock:
            seen: set[int] = set()
            for kid in kids:
                if kid in seen:
                    raise DuplicateKid(f"kid {kid:#018x} listed twice in one deletion")
                seen.add(kid)
                if not self.key_list.get(kid).live:
                    raise AlreadyDeleted(f"kid {kid:#018x} was already deleted")
                if requester is not None and self.owner_of(kid) != requester:
                    raise Unauthorized(f"{requester!r} does not own kid {kid:#018x}")
            ordered = sorted(kids, key=self.key_list.position)
            return {kid: tuple(self.delete_and_invalidate(kid)) for kid in ordered}

    def owner_of(self, kid: int) -> str | None:
        return DataPoint.decode(self.fetch_data_checked(kid)).owner
