"""Signed protocol artifacts and their canonical payload encodings.

Every attested payload is ``tag`` followed by length-prefixed fields; the
session id and the relevant program digests are always included so a proof
cannot be replayed into another session or attributed to other code.
Binary fields travel as lowercase hex in the pydantic models.
"""

from __future__ import annotations

import hashlib
import struct
from collections.abc import Sequence
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

_LEN = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")

PROG_K = 1
PROG_C = 2
PROG_T = 3
PROG_P = 4
PROGRAM_NAMES = {PROG_K: "prog_k", PROG_C: "prog_c", PROG_T: "prog_t", PROG_P: "prog_p"}


def canonical(tag: bytes, *fields: bytes) -> bytes:
    out = bytearray(tag)
    for f in fields:
        out += _LEN.pack(len(f))
        out += f
    return bytes(out)


def decode_fields(payload: bytes, tag: bytes) -> list[bytes]:
    if not payload.startswith(tag):
        raise ValueError(f"payload does not start with {tag!r}")
    fields: list[bytes] = []
    off = len(tag)
    while off < len(payload):
        (n,) = _LEN.unpack_from(payload, off)
        off += _LEN.size
        fields.append(payload[off : off + n])
        off += n
    return fields


def challenge_digest(t: np.ndarray) -> bytes:
    """Digest of a challenge vector in its little-endian float32 form."""
    return hashlib.sha256(np.ascontiguousarray(t, dtype="<f4").tobytes()).digest()


def _scores_bytes(scores: Sequence[float]) -> bytes:
    return np.asarray(scores, dtype="<f8").tobytes()


def receipt_payload(
    sid: str,
    c: bytes,
    key_list_digest: bytes,
    item_count: int,
    owner: str | None,
    prog_c: bytes,
    prog_k: bytes,
) -> bytes:
    return canonical(
        b"receipt",
        sid.encode("utf-8"),
        c,
        key_list_digest,
        _U64.pack(item_count),
        (owner or "").encode("utf-8"),
        prog_c,
        prog_k,
    )


def learn_payload(sid: str, c: bytes, h_model: bytes, prog_t: bytes) -> bytes:
    return canonical(b"learn", sid.encode("utf-8"), c, h_model, prog_t)


def predict_payload(
    sid: str,
    label: int,
    scores: Sequence[float],
    t_digest: bytes,
    h_model: bytes,
    prog_p: bytes,
) -> bytes:
    return canonical(
        b"predict",
        sid.encode("utf-8"),
        _U32.pack(label),
        _scores_bytes(scores),
        t_digest,
        h_model,
        prog_p,
    )


def membership_payload(sid: str, kid: int, present: bool, c: bytes, prog_c: bytes) -> bytes:
    return canonical(
        b"membership", sid.encode("utf-8"), _U64.pack(kid), bytes([present]), c, prog_c
    )


def opening_payload(sid: str, c: bytes, key_list_digest: bytes, prog_c: bytes) -> bytes:
    return canonical(b"open", sid.encode("utf-8"), c, key_list_digest, prog_c)


def scrub_payload(
    sid: str, c: bytes, h_model: bytes, data_checked: int, submodels_checked: int, prog_t: bytes
) -> bytes:
    return canonical(
        b"scrub",
        sid.encode("utf-8"),
        c,
        h_model,
        _U64.pack(data_checked),
        _U64.pack(submodels_checked),
        prog_t,
    )


def predict_h_model(payload: bytes) -> bytes:
    """Pull h_model back out of an attested prediction payload."""
    return decode_fields(payload, b"predict")[4]


class _Signed(BaseModel):
    model_config = ConfigDict(frozen=True)

    sid: str
    eid: str
    signature: str = Field(description="Ed25519 signature over eid | program id | H(payload), hex")

    def sig_bytes(self) -> bytes:
        return bytes.fromhex(self.signature)


class Receipt(_Signed):
    """sigma_d over the filter digest c, the key-list digest and prog_c/prog_k."""

    kind: Literal["receipt"] = "receipt"
    c: str
    key_list_digest: str
    item_count: int
    owner: str | None = None


class LearnProof(_Signed):
    """sigma_m over (c, h_model, prog_t)."""

    kind: Literal["learn"] = "learn"
    c: str
    h_model: str


class PredictProof(_Signed):
    """sigma_p over (p, t, h_model, prog_p)."""

    kind: Literal["predict"] = "predict"
    label: int
    scores: list[float]
    test_digest: str
    h_model: str


class MembershipProof(_Signed):
    kind: Literal["membership"] = "membership"
    kid: int
    present: bool
    c: str


class Opening(_Signed):
    """The committed filter and key list, opened against their digests."""

    kind: Literal["opening"] = "opening"
    c: str
    key_list_digest: str
    filter_blob: str
    key_list_blob: str


class ScrubReport(_Signed):
    kind: Literal["scrub"] = "scrub"
    c: str
    h_model: str
    data_checked: int
    submodels_checked: int


class DeletionRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    kids: list[int]
    owner: str | None = None


SignedMessage = Receipt | LearnProof | PredictProof | MembershipProof | Opening | ScrubReport
