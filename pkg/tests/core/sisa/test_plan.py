from __future__ import annotations

import pytest

from unlearning_proof_server.core.errors import UnknownKid
from unlearning_proof_server.core.sisa import ShardPlan, shard, slice_shard

KIDS = list(range(1000, 1103))


def test_shards_partition_the_kids() -> None:
    shards = shard(KIDS, 4, seed=3)

    assert sorted(k for s in shards for k in s) == KIDS
    sizes = [len(s) for s in shards]
    assert max(sizes) - min(sizes) <= 1


def test_slicing_is_seeded_and_balanced() -> None:
    a = slice_shard(KIDS, 6, seed=9, shard_id=1)
    b = slice_shard(KIDS, 6, seed=9, shard_id=1)
    c = slice_shard(KIDS, 6, seed=9, shard_id=2)

    assert a == b
    assert a != c
    sizes = [len(sl) for sl in a]
    assert max(sizes) - min(sizes) <= 1


@pytest.mark.parametrize(("n", "s"), [(0, 1), (200, 1), (1, 0), (1, 200)])
def test_layout_bounds(n: int, s: int) -> None:
    with pytest.raises(ValueError):
        ShardPlan.build(KIDS, n, s, seed=0)


def test_duplicate_kids_rejected() -> None:
    with pytest.raises(ValueError, match="duplicate"):
        ShardPlan.build([1, 2, 2, 3], 1, 2, seed=0)


def test_locate_and_affected_submodels() -> None:
    plan = ShardPlan.build(KIDS, 2, 5, seed=1)
    kid = plan.slice_kids(1, 3)[0]

    assert plan.locate(kid) == (1, 3)
    affected = plan.locate_affected(kid)
    assert affected.shard == 1
    assert affected.submodels == (3, 4, 5)
    with pytest.raises(UnknownKid):
        plan.locate(7)


def test_placements_mark_the_last_kid_of_each_slice() -> None:
    plan = ShardPlan.build(KIDS, 2, 3, seed=5)
    placements = list(plan.placements())

    assert [kid for kid, _ in placements] == plan.shard_kids(0) + plan.shard_kids(1)
    finals = [(p.shard, p.slice_index, kid) for kid, p in placements if p.slice_final]
    assert finals == [
        (j, i, plan.slice_kids(j, i)[-1]) for j in range(2) for i in range(1, 4)
    ]


def test_without_keeps_positions() -> None:
    plan = ShardPlan.build(KIDS, 1, 4, seed=2)
    gone = plan.slice_kids(0, 2)

    smaller = plan.without(gone)

    assert smaller.n_slices == 4
    assert smaller.slice_kids(0, 2) == []
    assert smaller.slice_kids(0, 3) == plan.slice_kids(0, 3)
    assert len(smaller) == len(plan) - len(gone)
    assert sum(smaller.shard_sizes()) == len(smaller)
