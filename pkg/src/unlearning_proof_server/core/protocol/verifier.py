"""Data-owner side verification.

A :class:`Verifier` is pinned to one enclave key, one eid and one session id
at setup. Every assertion rebuilds the signed payload from the message fields
and the verifier's own pinned values, so a proof from another session,
enclave instance or program set fails its single signature check. Work per
assertion does not depend on the slice count or on how many submodels were
retrained; the counters make that observable.
"""

from __future__ import annotations

import hashlib
import hmac
import logging
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from ..enclave.sgx import Attestation, sha256, verify_signature
from . import messages as m

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class Verdict:
    accepted: bool
    reason: str = "ok"

    def __bool__(self) -> bool:
        return self.accepted


ACCEPT = Verdict(True)


def _unhex(value: str) -> bytes | None:
    try:
        return bytes.fromhex(value)
    except ValueError:
        return None


class Verifier:
    def __init__(
        self,
        *,
        pk: bytes,
        eid: bytes,
        sid: str,
        program_digests: Mapping[int, bytes],
    ) -> None:
        self.pk = pk
        self.eid = eid
        self.sid = sid
        self.program_digests = dict(program_digests)
        self.signature_checks = 0
        self.equality_checks = 0
        self.latest_c: bytes | None = None
        self.latest_h_model: bytes | None = None

    def __repr__(self) -> str:
        return f"<Verifier sid={self.sid} eid={self.eid.hex()[:12]}>"

    def reset_counters(self) -> None:
        self.signature_checks = 0
        self.equality_checks = 0

    def _signed(self, program_id: int, payload: bytes, signature: str) -> bool:
        self.signature_checks += 1
        sig = _unhex(signature)
        if sig is None:
            return False
        message = Attestation.message_for(self.eid, program_id, sha256(payload))
        return verify_signature(self.pk, sig, message)

    def _equal(self, a: bytes | None, b: bytes | None) -> bool:
        self.equality_checks += 1
        return a is not None and b is not None and hmac.compare_digest(a, b)

    def _reject(self, kind: str, reason: str) -> Verdict:
        logger.warning("%s rejected: %s", kind, reason)
        return Verdict(False, reason)

    def verify_receipt(self, receipt: m.Receipt) -> Verdict:
        c = _unhex(receipt.c)
        kl = _unhex(receipt.key_list_digest)
        if c is None or kl is None:
            return self._reject("receipt", "malformed digest")
        payload = m.receipt_payload(
            self.sid,
            c,
            kl,
            receipt.item_count,
            receipt.owner,
            self.program_digests[m.PROG_C],
            self.program_digests[m.PROG_K],
        )
        if not self._signed(m.PROG_C, payload, receipt.signature):
            return self._reject("receipt", "sigma_d does not verify under the pinned key")
        self.latest_c = c
        return ACCEPT

    def verify_learn(self, proof: m.LearnProof) -> Verdict:
        c = _unhex(proof.c)
        h_model = _unhex(proof.h_model)
        if c is None or h_model is None:
            return self._reject("learn proof", "malformed digest")
        payload = m.learn_payload(self.sid, c, h_model, self.program_digests[m.PROG_T])
        if not self._signed(m.PROG_T, payload, proof.signature):
            return self._reject("learn proof", "sigma_m does not verify under the pinned key")
        if not self._equal(c, self.latest_c):
            return self._reject("learn proof", "c does not match the latest receipt")
        self.latest_h_model = h_model
        return ACCEPT

    def verify_predict(
        self,
        proof: m.PredictProof,
        t: np.ndarray,
        *,
        expected_h_model: bytes | None = None,
    ) -> Verdict:
        """Signature, then t and h_model bindings (h_model defaults to the latest LearnProof)."""
        t_digest = _unhex(proof.test_digest)
        h_model = _unhex(proof.h_model)
        if t_digest is None or h_model is None:
            return self._reject("predict proof", "malformed digest")
        payload = m.predict_payload(
            self.sid,
            proof.label,
            proof.scores,
            t_digest,
            h_model,
            self.program_digests[m.PROG_P],
        )
        if not self._signed(m.PROG_P, payload, proof.signature):
            return self._reject("predict proof", "sigma_p does not verify under the pinned key")
        if not self._equal(t_digest, m.challenge_digest(t)):
            return self._reject("predict proof", "proof is for a different test input")
        expected = expected_h_model if expected_h_model is not None else self.latest_h_model
        if not self._equal(h_model, expected):
            return self._reject("predict proof", "h_model is not the latest learned model")
        return ACCEPT

    def verify_membership(
        self, proof: m.MembershipProof, *, expected_c: bytes | None = None
    ) -> Verdict:
        c = _unhex(proof.c)
        if c is None:
            return self._reject("membership proof", "malformed digest")
        payload = m.membership_payload(
            self.sid, proof.kid, proof.present, c, self.program_digests[m.PROG_C]
        )
        if not self._signed(m.PROG_C, payload, proof.signature):
            return self._reject("membership proof", "signature does not verify")
        if not self._equal(c, expected_c if expected_c is not None else self.latest_c):
            return self._reject("membership proof", "answered against a different filter")
        return ACCEPT

    def verify_opening(self, opening: m.Opening) -> Verdict:
        """Check the opened filter and key list hash to the committed digests."""
        filt = _unhex(opening.filter_blob)
        keys = _unhex(opening.key_list_blob)
        if filt is None or keys is None:
            return self._reject("opening", "malformed blob")
        c = hashlib.sha256(filt).digest()
        kl = hashlib.sha256(keys).digest()
        payload = m.opening_payload(self.sid, c, kl, self.program_digests[m.PROG_C])
        if not self._signed(m.PROG_C, payload, opening.signature):
            return self._reject("opening", "signature does not verify")
        if not self._equal(c, self.latest_c):
            return self._reject("opening", "opened filter is not the latest committed one")
        return ACCEPT

    def verify_scrub(self, report: m.ScrubReport) -> Verdict:
        c = _unhex(report.c)
        h_model = _unhex(report.h_model)
        if c is None or h_model is None:
            return self._reject("scrub report", "malformed digest")
        payload = m.scrub_payload(
            self.sid,
            c,
            h_model,
            report.data_checked,
            report.submodels_checked,
            self.program_digests[m.PROG_T],
        )
        if not self._signed(m.PROG_T, payload, report.signature):
            return self._reject("scrub report", "signature does not verify")
        return ACCEPT


class DataOwner:
    """An owner's view: its pinned verifier plus the challenges it has sent."""

    def __init__(
        self, verifier: Verifier, *, name: str | None = None, seed: int | None = 0
    ) -> None:
        self.verifier = verifier
        self.name = name
        self._rng = np.random.default_rng(seed)

    def challenge(self, dim: int) -> np.ndarray:
        """A fresh binary test vector t."""
        return self._rng.integers(0, 2, size=dim).astype(np.float32)
