"""Exception hierarchy for the unlearning-proof pipeline.

Integrity errors carry the attack class they detected so that callers (the
CLI, the attack simulator, the auditor) can report it without string parsing.
"""

from __future__ import annotations


class UnlearningProofError(Exception):
    """Root of all package-specific errors."""


class IntegrityError(UnlearningProofError):
    """An integrity check inside the enclave failed; the protocol step halts."""

    attack_class = "integrity"

    def __init__(self, message: str, *, kid: int | None = None) -> None:
        super().__init__(message)
        self.kid = kid


class ReplacingAttack(IntegrityError):
    """A data record's MAC does not verify."""

    attack_class = "replace-data"


class DeletedOrForged(IntegrityError):
    """A fetched data point is not in the committed filter."""

    attack_class = "deleted-or-forged"


class DeletedData(IntegrityError):
    """The key entry is tagged deleted."""

    attack_class = "deleted-data"


class RollbackOrRelocationAttack(IntegrityError):
    """A stored submodel does not match H(model || seed)."""

    attack_class = "rollback-or-relocation"


class InvalidatedSubmodel(IntegrityError):
    """The submodel's seed was cleared by a deletion."""

    attack_class = "invalidated-submodel"


class WrongModel(IntegrityError):
    """The restored model does not match the requested h_model."""

    attack_class = "wrong-model"


class StaleCommitment(IntegrityError):
    """The filter digest supplied by the host is not the enclave's current one."""

    attack_class = "stale-commitment"


class LineageError(UnlearningProofError):
    """Key-list bookkeeping rejected the request."""


class UnknownKid(LineageError, KeyError):
    pass


class DuplicateKid(LineageError):
    pass


class AlreadyDeleted(LineageError):
    pass


class NotSliceFinal(LineageError):
    pass


class Unauthorized(LineageError):
    """A data owner asked to delete a point it does not own."""


class FilterFullError(UnlearningProofError):
    """Cuckoo insertion exhausted the displacement limit."""


class TrainingDivergedError(UnlearningProofError):
    """SGD produced a non-finite loss."""


class StoreCorrupted(UnlearningProofError):
    """A record log could not be framed at the requested offset."""


class EnclaveError(UnlearningProofError):
    pass


class UnknownProgram(EnclaveError):
    pass


class UnsealError(EnclaveError):
    pass


class ChannelError(UnlearningProofError):
    """Authenticated channel setup or message check failed."""
