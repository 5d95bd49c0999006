"""In-process simulation of an attested enclave.

The boundary is this class: the signing key, the MAC/PRF/seed keys and the
``mem`` structures are only reachable through ``resume`` and the sealing and
key-exchange entry points. Program code and data are not secret.

Attestation wire format (136 bytes)::

    eid[32] | program_id u64 LE | sha256(output)[32] | ed25519 signature[64]

Sealed blob: ``nonce[12] | ciphertext | tag[16]`` under AES-GCM with a key
derived from the platform secret and the eid.
"""

from __future__ import annotations

import hashlib
import inspect
import logging
import os
import struct
import threading
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from typing import Any

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives import hmac as crypto_hmac
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..errors import ChannelError, EnclaveError, UnknownProgram, UnsealError

logger = logging.getLogger(__name__)

EID_SIZE = 32
SIGNATURE_SIZE = 64
_PID = struct.Struct("<Q")
_SECTION = struct.Struct("<HI")
_SEED = struct.Struct("<Q")
_NONCE_SIZE = 12
_CALL = struct.Struct("<Q32sIHH")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _raw_public(pk: Ed25519PublicKey | X25519PublicKey) -> bytes:
    return pk.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


def verify_signature(pk: bytes, signature: bytes, message: bytes) -> bool:
    """Pure Ed25519 check; never raises on malformed input."""
    try:
        Ed25519PublicKey.from_public_bytes(pk).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


@dataclass(frozen=True, slots=True)
class ProgramResult:
    """What a program returns: the bytes to attest and a host-side value."""

    payload: bytes
    value: Any = None


@dataclass(frozen=True, slots=True)
class EnclaveProgram:
    program_id: int
    name: str
    code: bytes
    entry: Callable[[EnclaveContext, Any], ProgramResult] = field(repr=False, compare=False)

    @classmethod
    def from_callable(
        cls, program_id: int, name: str, fn: Callable[[EnclaveContext, Any], ProgramResult]
    ) -> EnclaveProgram:
        """Measure a program by its source text."""
        return cls(program_id, name, inspect.getsource(fn).encode("utf-8"), fn)

    @property
    def digest(self) -> bytes:
        return sha256(self.code)


def measure(programs: Iterable[EnclaveProgram]) -> bytes:
    """eid = SHA-256 over the programs' code in program-id order."""
    h = hashlib.sha256()
    for prog in sorted(programs, key=lambda p: p.program_id):
        h.update(_PID.pack(prog.program_id))
        h.update(_PID.pack(len(prog.code)))
        h.update(prog.code)
    return h.digest()


@dataclass(frozen=True, slots=True)
class Attestation:
    eid: bytes
    program_id: int
    output_hash: bytes
    signature: bytes

    @staticmethod
    def message_for(eid: bytes, program_id: int, output_hash: bytes) -> bytes:
        return eid + _PID.pack(program_id) + output_hash

    @property
    def message(self) -> bytes:
        return self.message_for(self.eid, self.program_id, self.output_hash)

    def to_bytes(self) -> bytes:
        return self.message + self.signature

    @classmethod
    def from_bytes(cls, blob: bytes) -> Attestation:
        if len(blob) != EID_SIZE + _PID.size + 32 + SIGNATURE_SIZE:
            raise ValueError(f"attestation must be 136 bytes, got {len(blob)}")
        (pid,) = _PID.unpack_from(blob, EID_SIZE)
        off = EID_SIZE + _PID.size
        return cls(blob[:EID_SIZE], pid, blob[off : off + 32], blob[off + 32 :])

    def verify(self, pk: bytes) -> bool:
        return verify_signature(pk, self.signature, self.message)

    def covers(self, payload: bytes) -> bool:
        return self.output_hash == sha256(payload)


@dataclass(frozen=True, slots=True)
class Attested:
    value: Any
    payload: bytes
    attestation: Attestation


@dataclass(frozen=True, slots=True)
class CallRecord:
    """One observed program call as forwarded to a monitoring enclave."""

    program_id: int
    input_digest: bytes
    payload: bytes
    attestation: bytes = b""
    error: str = ""

    def to_bytes(self) -> bytes:
        err = self.error.encode("utf-8")
        head = _CALL.pack(
            self.program_id, self.input_digest, len(self.payload), len(self.attestation), len(err)
        )
        return head + self.payload + self.attestation + err

    @classmethod
    def from_bytes(cls, blob: bytes) -> CallRecord:
        pid, digest, n_pay, n_att, n_err = _CALL.unpack_from(blob)
        off = _CALL.size
        payload = blob[off : off + n_pay]
        off += n_pay
        att = blob[off : off + n_att]
        off += n_att
        return cls(pid, digest, payload, att, blob[off : off + n_err].decode("utf-8"))


@dataclass(frozen=True, slots=True)
class KeyShare:
    """One side of the attested X25519 exchange."""

    eid: bytes
    signing_pk: bytes
    ephemeral: bytes
    signature: bytes

    @staticmethod
    def signed_bytes(eid: bytes, ephemeral: bytes) -> bytes:
        return b"poul-kx" + eid + ephemeral


class Channel:
    """HMAC-authenticated, sequence-numbered message stream under a shared key."""

    def __init__(self, key: bytes, local_eid: bytes, peer_eid: bytes) -> None:
        self._key = key
        self.local_eid = local_eid
        self.peer_eid = peer_eid
        self._send_seq = 0
        self._recv_seq = 0

    def _mac(self, seq: int, payload: bytes) -> bytes:
        h = crypto_hmac.HMAC(self._key, hashes.SHA256())
        h.update(_PID.pack(seq))
        h.update(payload)
        return h.finalize()

    def seal(self, payload: bytes) -> tuple[int, bytes, bytes]:
        self._send_seq += 1
        return self._send_seq, payload, self._mac(self._send_seq, payload)

    def open(self, seq: int, payload: bytes, mac: bytes) -> bytes:
        h = crypto_hmac.HMAC(self._key, hashes.SHA256())
        h.update(_PID.pack(seq))
        h.update(payload)
        try:
            h.verify(mac)
        except InvalidSignature:
            raise ChannelError(f"observation {seq} failed authentication") from None
        if seq != self._recv_seq + 1:
            raise ChannelError(
                f"observation sequence {seq} after {self._recv_seq}: replay or gap"
            )
        self._recv_seq = seq
        return payload


@dataclass
class EnclaveContext:
    """What a running program may touch inside the boundary."""

    eid: bytes
    mac_key: bytes
    prf_key: bytes
    fresh_seed: Callable[[], int]
    mem: dict[str, Any]
    programs: Mapping[int, EnclaveProgram]

    def program_digest(self, program_id: int) -> bytes:
        return self.programs[program_id].digest


class EnclaveSimulator:
    """Init / Install / Resume over a software-held key pair."""

    def __init__(self, *, platform_secret: bytes | None = None) -> None:
        self._sk = Ed25519PrivateKey.generate()
        self.pk = _raw_public(self._sk.public_key())
        self._platform_secret = platform_secret or os.urandom(32)
        self._mac_key = os.urandom(16)
        self._prf_key = os.urandom(16)
        self._seed_key = os.urandom(16)
        self._seed_counter = 0
        self._issued: set[int] = set()
        self._programs: dict[int, EnclaveProgram] = {}
        self._eid: bytes | None = None
        self._lock = threading.RLock()
        self._kx_pending: dict[bytes, X25519PrivateKey] = {}
        self.mem: dict[str, Any] = {}
        self._monitor: Channel | None = None
        self._monitored: frozenset[int] = frozenset()
        self._outbox: list[tuple[int, bytes, bytes]] = []

    def __repr__(self) -> str:
        eid = self._eid.hex()[:12] if self._eid else "-"
        return f"<EnclaveSimulator eid={eid} programs={sorted(self._programs)}>"

    @property
    def eid(self) -> bytes:
        if self._eid is None:
            raise EnclaveError("no programs installed")
        return self._eid

    @property
    def programs(self) -> Mapping[int, EnclaveProgram]:
        return dict(self._programs)

    def install(self, programs: Iterable[EnclaveProgram]) -> bytes:
        progs = list(programs)
        if not progs:
            raise EnclaveError("install needs at least one program")
        ids = [p.program_id for p in progs]
        if len(set(ids)) != len(ids):
            raise EnclaveError(f"duplicate program ids {ids}")
        with self._lock:
            self._programs = {p.program_id: p for p in progs}
            self._eid = measure(progs)
        logger.info("installed %s programs, eid=%s", len(progs), self._eid.hex()[:16])
        return self._eid

    def fresh_seed(self) -> int:
        """64-bit seed: AES under the seed key over a monotone counter."""
        with self._lock:
            enc = Cipher(algorithms.AES(self._seed_key), modes.ECB()).encryptor()
            while True:
                self._seed_counter += 1
                block = enc.update(self._seed_counter.to_bytes(16, "little"))
                seed = int.from_bytes(block[:8], "little")
                if seed not in self._issued:
                    self._issued.add(seed)
                    return seed

    @property
    def issued_seeds(self) -> frozenset[int]:
        """Every seed handed out, including those restored from a sealed blob."""
        with self._lock:
            return frozenset(self._issued)

    def context(self) -> EnclaveContext:
        return EnclaveContext(
            eid=self.eid,
            mac_key=self._mac_key,
            prf_key=self._prf_key,
            fresh_seed=self.fresh_seed,
            mem=self.mem,
            programs=self._programs,
        )

    def sign(self, program_id: int, payload: bytes) -> Attestation:
        output_hash = sha256(payload)
        sig = self._sk.sign(Attestation.message_for(self.eid, program_id, output_hash))
        return Attestation(self.eid, program_id, output_hash, sig)

    def resume(self, eid: bytes, program_id: int, inp: Any) -> Attested:
        """Run an installed program and attest its output payload."""
        with self._lock:
            if self._eid is None or eid != self._eid:
                raise UnknownProgram(f"no enclave with eid {eid.hex()[:16]}")
            prog = self._programs.get(program_id)
            if prog is None:
                raise UnknownProgram(f"program {program_id} is not installed")
            digest = sha256(inp.canonical()) if hasattr(inp, "canonical") else sha256(b"")
            try:
                result = prog.entry(self.context(), inp)
            except Exception as exc:
                reason = getattr(exc, "attack_class", type(exc).__name__)
                self._observe(CallRecord(program_id, digest, b"", error=reason))
                raise
            att = self.sign(program_id, result.payload)
            self._observe(CallRecord(program_id, digest, result.payload, att.to_bytes()))
            return Attested(result.value, result.payload, att)

    # -- monitoring ----------------------------------------------------------------

    def attach_monitor(self, channel: Channel, program_ids: Iterable[int]) -> None:
        """Forward every call of the given programs over an established channel."""
        with self._lock:
            self._monitor = channel
            self._monitored = frozenset(program_ids)

    def _observe(self, record: CallRecord) -> None:
        if self._monitor is not None and record.program_id in self._monitored:
            self._outbox.append(self._monitor.seal(record.to_bytes()))

    def drain_observations(self) -> list[tuple[int, bytes, bytes]]:
        with self._lock:
            out, self._outbox = self._outbox, []
        return out

    # -- attested key exchange ---------------------------------------------------

    def key_share(self) -> KeyShare:
        priv = X25519PrivateKey.generate()
        eph = _raw_public(priv.public_key())
        with self._lock:
            self._kx_pending[eph] = priv
        sig = self._sk.sign(KeyShare.signed_bytes(self.eid, eph))
        return KeyShare(self.eid, self.pk, eph, sig)

    def open_channel(
        self, own: KeyShare, peer: KeyShare, *, peer_pk: bytes, peer_eid: bytes
    ) -> Channel:
        """Finish the exchange against a pinned peer key and identity."""
        if peer.eid != peer_eid:
            raise ChannelError("peer eid does not match the expected measurement")
        if peer.signing_pk != peer_pk or not verify_signature(
            peer_pk, peer.signature, KeyShare.signed_bytes(peer.eid, peer.ephemeral)
        ):
            raise ChannelError("peer key share is not signed by the pinned enclave key")
        with self._lock:
            priv = self._kx_pending.pop(own.ephemeral, None)
        if priv is None:
            raise ChannelError("unknown local key share")
        shared = priv.exchange(X25519PublicKey.from_public_bytes(peer.ephemeral))
        eids = sorted((self.eid, peer.eid))
        ephs = sorted((own.ephemeral, peer.ephemeral))
        key = HKDF(
            algorithm=hashes.SHA256(),
            length=32,
            salt=None,
            info=b"poul-channel" + eids[0] + eids[1] + ephs[0] + ephs[1],
        ).derive(shared)
        return Channel(key, self.eid, peer.eid)

    # -- sealing ------------------------------------------------------------------

    def _sealing_key(self, eid: bytes) -> bytes:
        return HKDF(
            algorithm=hashes.SHA256(), length=32, salt=None, info=b"poul-seal" + eid
        ).derive(self._platform_secret)

    def seal_state(self, sections: Mapping[str, bytes]) -> bytes:
        """Seal the enclave secrets plus caller-provided mem sections."""
        secrets = {
            "sk": self._sk.private_bytes(
                serialization.Encoding.Raw,
                serialization.PrivateFormat.Raw,
                serialization.NoEncryption(),
            ),
            "mac_key": self._mac_key,
            "prf_key": self._prf_key,
            "seed_key": self._seed_key,
            "seed_counter": self._seed_counter.to_bytes(8, "little"),
            "issued_seeds": b"".join(_SEED.pack(s) for s in sorted(self._issued)),
        }
        plain = _pack_sections({**secrets, **sections})
        nonce = os.urandom(_NONCE_SIZE)
        return nonce + AESGCM(self._sealing_key(self.eid)).encrypt(nonce, plain, self.eid)

    def unseal_state(self, blob: bytes) -> dict[str, bytes]:
        """Restore secrets from a sealed blob and return the remaining sections."""
        if len(blob) < _NONCE_SIZE + 16:
            raise UnsealError("sealed blob too short")
        nonce, ct = blob[:_NONCE_SIZE], blob[_NONCE_SIZE:]
        try:
            plain = AESGCM(self._sealing_key(self.eid)).decrypt(nonce, ct, self.eid)
        except InvalidTag:
            raise UnsealError("sealed state failed authentication") from None
        sections = _unpack_sections(plain)
        with self._lock:
            self._sk = Ed25519PrivateKey.from_private_bytes(sections.pop("sk"))
            self.pk = _raw_public(self._sk.public_key())
            self._mac_key = sections.pop("mac_key")
            self._prf_key = sections.pop("prf_key")
            self._seed_key = sections.pop("seed_key")
            self._seed_counter = int.from_bytes(sections.pop("seed_counter"), "little")
            self._issued = {s for (s,) in _SEED.iter_unpack(sections.pop("issued_seeds"))}
        return sections


def _pack_sections(sections: Mapping[str, bytes]) -> bytes:
    out = bytearray()
    for name, payload in sections.items():
        raw = name.encode("utf-8")
        out += _SECTION.pack(len(raw), len(payload)) + raw + payload
    return bytes(out)


def _unpack_sections(blob: bytes) -> dict[str, bytes]:
    out: dict[str, bytes] = {}
    off = 0
    while off < len(blob):
        n, size = _SECTION.unpack_from(blob, off)
        off += _SECTION.size
        name = blob[off : off + n].decode("utf-8")
        off += n
        out[name] = blob[off : off + size]
        off += size
    return out
