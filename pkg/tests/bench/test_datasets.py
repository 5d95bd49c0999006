from __future__ import annotations

import numpy as np
import pytest

from unlearning_proof_server.bench import assign_owners, gen_dataset, write_split
from unlearning_proof_server.core.dataset import read_dataset


def test_generation_is_deterministic() -> None:
    a, ta = gen_dataset(50, 10, dim=16, seed=4)
    b, tb = gen_dataset(50, 10, dim=16, seed=4)

    assert np.array_equal(a.features, b.features)
    assert np.array_equal(ta.labels, tb.labels)
    assert a.kids == b.kids


def test_points_are_binary_and_kids_distinct() -> None:
    train, test = gen_dataset(300, 40, dim=24, classes=3, seed=2)

    assert train.features.shape == (300, 24)
    assert len(test) == 40
    assert set(np.unique(train.features)) <= {0.0, 1.0}
    assert set(train.labels.tolist()) <= {0, 1, 2}
    assert len(set(train.kids)) == 300


def test_low_flip_rate_is_learnable_signal() -> None:
    train, _ = gen_dataset(200, 0, dim=64, seed=0, flip=0.05)
    means = [train.features[train.labels == c].mean(axis=0) for c in (0, 1)]

    assert np.abs(means[0] - means[1]).mean() > 0.2


@pytest.mark.parametrize(
    "kwargs",
    [{"n_train": 0, "n_test": 0}, {"n_train": 5, "n_test": -1}],
)
def test_bad_sizes(kwargs) -> None:
    with pytest.raises(ValueError):
        gen_dataset(**kwargs)


@pytest.mark.parametrize("extra", [{"classes": 1}, {"flip": 0.5}])
def test_bad_shape_parameters(extra) -> None:
    with pytest.raises(ValueError):
        gen_dataset(10, 0, **extra)


def test_too_few_distinct_points_for_dimension() -> None:
    with pytest.raises(ValueError, match="distinct"):
        gen_dataset(64, 0, dim=2, seed=0, flip=0.4)


def test_assign_owners_tags_every_point() -> None:
    train, _ = gen_dataset(40, 0, dim=8, seed=1)

    owned = assign_owners(train, 3, seed=5)

    assert len(owned.owners) == 40
    assert set(owned.owners) <= {"owner-0", "owner-1", "owner-2"}
    assert owned.kids != train.kids


@pytest.mark.asyncio
async def test_write_split_round_trips(tmp_path) -> None:
    train, test = gen_dataset(30, 6, dim=8, seed=3)

    train_path, test_path = await write_split(tmp_path / "data", train, test)

    back = await read_dataset(train_path)
    assert back.kids == train.kids
    assert len(await read_dataset(test_path)) == 6
