"""Commit-and-prove protocol: enclave programs, host server, verifier, phases."""

from .messages import (
    PROG_C,
    PROG_K,
    PROG_P,
    PROG_T,
    DeletionRequest,
    LearnProof,
    MembershipProof,
    Opening,
    PredictProof,
    Receipt,
    ScrubReport,
    SignedMessage,
    challenge_digest,
)
from .phases import (
    PhaseResult,
    deletion_phase,
    owners_for,
    pin_owner,
    points_by_owner,
    setup_phase,
)
from .server import UnlearningServer, challenge_bytes, new_sid
from .transcript import (
    Transcript,
    TranscriptRecord,
    TranscriptReport,
    parse_message,
    payload_for,
    read_transcript,
    verify_transcript,
)
from .verifier import DataOwner, Verdict, Verifier

__all__ = [
    "PROG_C",
    "PROG_K",
    "PROG_P",
    "PROG_T",
    "DataOwner",
    "DeletionRequest",
    "LearnProof",
    "MembershipProof",
    "Opening",
    "PhaseResult",
    "PredictProof",
    "Receipt",
    "ScrubReport",
    "SignedMessage",
    "Transcript",
    "TranscriptRecord",
    "TranscriptReport",
    "UnlearningServer",
    "Verdict",
    "Verifier",
    "challenge_bytes",
    "challenge_digest",
    "deletion_phase",
    "new_sid",
    "owners_for",
    "parse_message",
    "payload_for",
    "pin_owner",
    "points_by_owner",
    "read_transcript",
    "setup_phase",
    "verify_transcript",
]
