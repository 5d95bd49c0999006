"""Simulated attested enclave."""

from .sgx import (
    Attestation,
    Attested,
    CallRecord,
    Channel,
    EnclaveContext,
    EnclaveProgram,
    EnclaveSimulator,
    KeyShare,
    ProgramResult,
    measure,
    sha256,
    verify_signature,
)

__all__ = [
    "Attestation",
    "Attested",
    "CallRecord",
    "Channel",
    "EnclaveContext",
    "EnclaveProgram",
    "EnclaveSimulator",
    "KeyShare",
    "ProgramResult",
    "measure",
    "sha256",
    "verify_signature",
]
