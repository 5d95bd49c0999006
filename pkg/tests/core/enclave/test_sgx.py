from __future__ import annotations

import pytest

from unlearning_proof_server.core.enclave import (
    Attestation,
    EnclaveContext,
    EnclaveProgram,
    EnclaveSimulator,
    ProgramResult,
    measure,
    sha256,
)
from unlearning_proof_server.core.errors import (
    ChannelError,
    EnclaveError,
    UnknownProgram,
    UnsealError,
)


class Echo:
    def __init__(self, data: bytes) -> None:
        self.data = data

    def canonical(self) -> bytes:
        return self.data


def echo_program(ctx: EnclaveContext, req: Echo) -> ProgramResult:
    return ProgramResult(payload=b"echo:" + req.data, value=len(req.data))


def failing_program(ctx: EnclaveContext, req: Echo) -> ProgramResult:
    raise RuntimeError("boom")


def _enclave(**kwargs) -> EnclaveSimulator:
    enc = EnclaveSimulator(**kwargs)
    enc.install(
        [
            EnclaveProgram.from_callable(1, "echo", echo_program),
            EnclaveProgram.from_callable(2, "fail", failing_program),
        ]
    )
    return enc


def test_eid_is_a_measurement_of_the_code() -> None:
    a, b = _enclave(), _enclave()
    assert a.eid == b.eid
    assert a.pk != b.pk

    other = EnclaveSimulator()
    other.install([EnclaveProgram.from_callable(1, "echo", failing_program)])
    assert other.eid != a.eid
    assert measure(a.programs.values()) == a.eid


def test_resume_attests_output() -> None:
    enc = _enclave()
    out = enc.resume(enc.eid, 1, Echo(b"hi"))

    assert out.value == 2
    assert out.payload == b"echo:hi"
    att = out.attestation
    assert att.verify(enc.pk)
    assert att.covers(b"echo:hi")
    assert not att.covers(b"echo:ho")
    assert not att.verify(_enclave().pk)
    assert Attestation.from_bytes(att.to_bytes()) == att
    assert len(att.to_bytes()) == 136


def test_resume_rejects_unknown_eid_or_program() -> None:
    enc = _enclave()
    with pytest.raises(UnknownProgram):
        enc.resume(b"\x00" * 32, 1, Echo(b""))
    with pytest.raises(UnknownProgram):
        enc.resume(enc.eid, 9, Echo(b""))
    with pytest.raises(EnclaveError):
        _ = EnclaveSimulator().eid


def test_program_errors_propagate_without_attestation() -> None:
    enc = _enclave()
    with pytest.raises(RuntimeError, match="boom"):
        enc.resume(enc.eid, 2, Echo(b""))


def test_fresh_seeds_never_repeat() -> None:
    enc = _enclave()
    seeds = [enc.fresh_seed() for _ in range(1000)]
    assert len(set(seeds)) == 1000


def test_seal_restores_identity_on_same_platform() -> None:
    secret = b"s" * 32
    enc = _enclave(platform_secret=secret)
    for _ in range(3):
        enc.fresh_seed()
    blob = enc.seal_state({"filter": b"table-bytes"})

    again = _enclave(platform_secret=secret)
    sections = again.unseal_state(blob)

    assert sections == {"filter": b"table-bytes"}
    assert again.pk == enc.pk
    assert again.fresh_seed() == enc.fresh_seed()


def test_issued_seeds_survive_sealing() -> None:
    secret = b"s" * 32
    enc = _enclave(platform_secret=secret)
    issued = {enc.fresh_seed() for _ in range(5)}
    assert enc.issued_seeds == issued

    again = _enclave(platform_secret=secret)
    again.unseal_state(enc.seal_state({}))

    assert again.issued_seeds == issued
    assert again.fresh_seed() not in issued
    assert len(again.issued_seeds) == 6


def test_unseal_fails_elsewhere() -> None:
    blob = _enclave(platform_secret=b"a" * 32).seal_state({})
    with pytest.raises(UnsealError):
        _enclave(platform_secret=b"b" * 32).unseal_state(blob)
    with pytest.raises(UnsealError):
        _enclave(platform_secret=b"a" * 32).unseal_state(blob[:-1] + bytes([blob[-1] ^ 1]))


def test_attested_channel_and_monitoring() -> None:
    a, b = _enclave(), _enclave()
    sa, sb = a.key_share(), b.key_share()
    ca = a.open_channel(sa, sb, peer_pk=b.pk, peer_eid=b.eid)
    cb = b.open_channel(sb, sa, peer_pk=a.pk, peer_eid=a.eid)

    a.attach_monitor(ca, {1})
    a.resume(a.eid, 1, Echo(b"x"))
    (envelope,) = a.drain_observations()
    assert cb.open(*envelope).startswith((1).to_bytes(8, "little"))
    with pytest.raises(ChannelError, match="replay"):
        cb.open(*envelope)

    seq, payload, mac = ca.seal(b"next")
    with pytest.raises(ChannelError):
        cb.open(seq, payload + b"!", mac)


def test_channel_rejects_unpinned_peer() -> None:
    a, b, mallory = _enclave(), _enclave(), _enclave()
    sa, sm = a.key_share(), mallory.key_share()
    with pytest.raises(ChannelError):
        a.open_channel(sa, sm, peer_pk=b.pk, peer_eid=b.eid)


def test_sha256_helper() -> None:
    assert sha256(b"") == bytes.fromhex(
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
