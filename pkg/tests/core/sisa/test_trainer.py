from __future__ import annotations

import numpy as np
import pytest

from unlearning_proof_server.core.errors import AlreadyDeleted, DuplicateKid, UnknownKid
from unlearning_proof_server.core.ml import canonical_bytes
from unlearning_proof_server.core.sisa import (
    DatasetSource,
    MemoryCheckpointer,
    SisaPipeline,
    epochs_for_slice,
    incremental_train,
    initial_model,
    map_shards,
)


@pytest.mark.parametrize(("epochs", "s", "expected"), [(22, 1, 22), (22, 6, 7), (10, 3, 5)])
def test_budget_schedule(epochs: int, s: int, expected: int) -> None:
    assert epochs_for_slice(epochs, s, "budget") == expected
    assert epochs_for_slice(epochs, s) == epochs


def test_unknown_schedule() -> None:
    with pytest.raises(ValueError, match="schedule"):
        epochs_for_slice(3, 2, "sometimes")


def test_incremental_train_stores_every_submodel(tiny_config, toy_dataset) -> None:
    kids = toy_dataset.kids
    slices = [kids[:20], kids[20:40], kids[40:]]
    checkpoints = MemoryCheckpointer()

    chain = incremental_train(
        0,
        slices,
        DatasetSource(toy_dataset),
        tiny_config.hyperparams,
        checkpoints,
        initial=initial_model(tiny_config.dims, 0, 0),
    )

    assert [m.slice_index for m in chain.models] == [1, 2, 3]
    assert sorted(checkpoints.models) == [(0, 1), (0, 2), (0, 3)]
    assert [t.samples for t in chain.timings] == [20, 40, 60]
    assert chain.final is chain.models[-1]


def _pipeline(config, dataset) -> SisaPipeline:
    pipe = SisaPipeline.from_config(dataset, config)
    pipe.train()
    return pipe


def _constituent_bytes(pipe: SisaPipeline) -> list[bytes]:
    return [canonical_bytes(m) for m in pipe.constituents()]


def test_training_is_deterministic(make_config, toy_dataset) -> None:
    config = make_config(shards=2)

    a = _pipeline(config, toy_dataset)
    b = _pipeline(config, toy_dataset)

    assert _constituent_bytes(a) == _constituent_bytes(b)
    assert 0.0 <= a.accuracy(toy_dataset.features, toy_dataset.labels) <= 1.0


def test_unlearning_matches_retraining_without_the_points(make_config, toy_dataset) -> None:
    config = make_config(shards=2)
    pipe = _pipeline(config, toy_dataset)
    gone = [pipe.plan.slice_kids(0, 2)[0], pipe.plan.slice_kids(1, 1)[-1]]

    chains = pipe.unlearn_batch(gone)
    fresh = SisaPipeline.from_config(toy_dataset, config, plan=pipe.plan.without(gone))
    fresh.train()

    assert [(c.shard, c.start) for c in chains] == [(0, 2), (1, 1)]
    assert _constituent_bytes(pipe) == _constituent_bytes(fresh)


def test_unlearn_retrains_from_the_affected_slice(tiny_config, toy_dataset) -> None:
    pipe = _pipeline(tiny_config, toy_dataset)
    kid = pipe.plan.slice_kids(0, 3)[0]
    before = canonical_bytes(pipe.submodel(0, 2))

    chain = pipe.unlearn(kid)

    assert chain.start == 3
    assert canonical_bytes(pipe.submodel(0, 2)) == before
    with pytest.raises(AlreadyDeleted):
        pipe.unlearn(kid)


@pytest.mark.parametrize(
    ("bad", "error"),
    [("deleted", AlreadyDeleted), ("unknown", UnknownKid), ("repeated", DuplicateKid)],
)
def test_rejected_unlearn_batch_keeps_the_model(tiny_config, toy_dataset, bad, error) -> None:
    pipe = _pipeline(tiny_config, toy_dataset)
    first, gone, last = pipe.plan.slice_kids(0, 1)[:2] + pipe.plan.slice_kids(0, 3)[:1]
    pipe.unlearn(gone)
    before = _constituent_bytes(pipe)
    middle = {"deleted": gone, "unknown": 0xFEEDFACECAFEBEEF}.get(bad, first)

    with pytest.raises(error):
        pipe.unlearn_batch([first, middle, last])

    assert pipe.deleted == {gone}
    assert _constituent_bytes(pipe) == before


def test_predict_averages_constituents(make_config, toy_dataset) -> None:
    pipe = _pipeline(make_config(shards=3), toy_dataset)

    pred = pipe.predict(toy_dataset.features[0])

    assert len(pred.scores) == 2
    assert sum(pred.scores) == pytest.approx(1.0, abs=1e-5)
    assert pred.label == int(np.argmax(pred.scores))


def test_map_shards_keeps_order() -> None:
    assert map_shards(lambda j: j * j, range(5), max_workers=3) == [0, 1, 4, 9, 16]
