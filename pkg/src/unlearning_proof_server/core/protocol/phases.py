"""Setup and deletion phases as one owner-driven exchange each.

Setup: commit every point, learn, send a challenge, get a prediction proof
and check all three assertions. Deletion: commit the removals, relearn,
challenge again and check the new triple against the post-deletion digests.
With owners on the dataset, every owner gets a verifier of its own; each one
checks the receipts issued for its data and the final state.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..dataset import DataPoint, Dataset
from ..sisa.plan import ShardPlan
from . import messages as m
from .server import COMMIT_BATCH, UnlearningServer
from .transcript import Transcript
from .verifier import DataOwner, Verdict, Verifier

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class PhaseResult:
    receipts: list[m.Receipt]
    learn: m.LearnProof
    predict: m.PredictProof
    challenge: np.ndarray
    verdicts: dict[str, Verdict] = field(default_factory=dict)
    memberships: list[m.MembershipProof] = field(default_factory=list)

    @property
    def receipt(self) -> m.Receipt:
        return self.receipts[-1]

    @property
    def accepted(self) -> bool:
        return bool(self.verdicts) and all(self.verdicts.values())

    def failures(self) -> dict[str, str]:
        return {k: v.reason for k, v in self.verdicts.items() if not v}


def pin_owner(
    server: UnlearningServer, *, name: str | None = None, seed: int | None = 0
) -> DataOwner:
    """A data owner pinned to the server's enclave key, eid and session at init."""
    verifier = Verifier(
        pk=server.pk, eid=server.eid, sid=server.sid, program_digests=server.program_digests
    )
    return DataOwner(verifier, name=name, seed=seed)


def _label(owner: DataOwner, what: str) -> str:
    return f"{owner.name}:{what}" if owner.name else what


def _challenge_round(
    server: UnlearningServer,
    owners: Sequence[DataOwner],
    learn: m.LearnProof,
    verdicts: dict[str, Verdict],
    transcript: Transcript | None,
) -> tuple[np.ndarray, m.PredictProof]:
    for owner in owners:
        verdicts[_label(owner, "learn")] = owner.verifier.verify_learn(learn)
    t = owners[0].challenge(server.config.dims.input_dim)
    if transcript is not None:
        transcript.record_challenge(t)
    proof = server.prove_prediction(t, learn.h_model)
    if transcript is not None:
        transcript.record(proof)
    for owner in owners:
        verdicts[_label(owner, "predict")] = owner.verifier.verify_predict(proof, t)
    return t, proof


def setup_phase(
    server: UnlearningServer,
    dataset: Dataset,
    owners: Sequence[DataOwner],
    *,
    plan: ShardPlan | None = None,
    transcript: Transcript | None = None,
    batch: int = COMMIT_BATCH,
) -> PhaseResult:
    cfg = server.config
    if plan is None:
        plan = ShardPlan.build(dataset.kids, cfg.n_shards, cfg.n_slices, cfg.seed)
    points = {p.kid: p for p in dataset}
    by_name = {o.name: o for o in owners}
    verdicts: dict[str, Verdict] = {}

    receipts = server.commit_plan(points, plan, batch=batch)
    for i, receipt in enumerate(receipts):
        if transcript is not None:
            transcript.record(receipt)
        owner = by_name.get(receipt.owner)
        if owner is not None and i < len(receipts) - 1:
            verdicts[_label(owner, f"receipt[{i}]")] = owner.verifier.verify_receipt(receipt)
    for owner in owners:
        verdicts[_label(owner, "receipt")] = owner.verifier.verify_receipt(receipts[-1])

    learn = server.prove_learning(receipts[-1].c)
    if transcript is not None:
        transcript.record(learn)
    t, proof = _challenge_round(server, owners, learn, verdicts, transcript)
    result = PhaseResult(receipts, learn, proof, t, verdicts)
    logger.info("setup phase %s: %s", server.sid, "accepted" if result.accepted else "rejected")
    return result


def deletion_phase(
    server: UnlearningServer,
    owners: Sequence[DataOwner],
    points: Sequence[DataPoint],
    *,
    requester: str | None = None,
    transcript: Transcript | None = None,
    check_membership: bool = True,
) -> PhaseResult:
    """Delete points (one request, so each affected submodel is retrained once)."""
    verdicts: dict[str, Verdict] = {}
    receipt = server.delete([p.kid for p in points], requester=requester)
    if transcript is not None:
        transcript.record(receipt)
    for owner in owners:
        verdicts[_label(owner, "receipt")] = owner.verifier.verify_receipt(receipt)

    memberships: list[m.MembershipProof] = []
    if check_membership:
        checker = owners[0].verifier
        for i, point in enumerate(points):
            proof = server.prove_membership(point)
            if transcript is not None:
                transcript.record(proof)
            memberships.append(proof)
            ok = checker.verify_membership(proof)
            if ok and proof.present:
                ok = Verdict(False, "deleted point still answers present")
            verdicts[f"membership[{i}]"] = ok

    learn = server.prove_learning(receipt.c)
    if transcript is not None:
        transcript.record(learn)
    t, proof = _challenge_round(server, owners, learn, verdicts, transcript)
    result = PhaseResult([receipt], learn, proof, t, verdicts, memberships)
    logger.info(
        "deletion phase %s (%s points): %s",
        server.sid,
        len(points),
        "accepted" if result.accepted else "rejected",
    )
    return result


def owners_for(server: UnlearningServer, dataset: Dataset, *, seed: int = 0) -> list[DataOwner]:
    """One pinned owner per distinct owner tag (a single anonymous owner otherwise)."""
    names: list[str | None] = (
        list(dict.fromkeys(dataset.owners)) if dataset.owners is not None else [None]
    )
    return [pin_owner(server, name=n, seed=seed + i) for i, n in enumerate(names)]


def points_by_owner(dataset: Dataset) -> Mapping[str | None, list[DataPoint]]:
    out: dict[str | None, list[DataPoint]] = {}
    for p in dataset:
        out.setdefault(p.owner, []).append(p)
    return out
