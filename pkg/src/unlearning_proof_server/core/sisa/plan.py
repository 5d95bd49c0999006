"""Shard and slice assignment.

Kids are shuffled with a seeded permutation, then split contiguously so sizes
differ by at most one. Slices are numbered from 1; slice 0 is reserved for the
initial model M0.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import UnknownKid
from ..lineage.auth import Placement
from ..ml.network import derive_seed

_SHARD_STREAM = 0x5348
_SLICE_STREAM = 0x534C


def _split(items: Sequence[int], parts: int, seed: int) -> list[list[int]]:
    order = np.random.default_rng(seed).permutation(len(items))
    return [[int(items[k]) for k in chunk] for chunk in np.array_split(order, parts)]


def shard(kids: Sequence[int], n: int, seed: int) -> list[list[int]]:
    """Partition kids into n disjoint near-equal shards."""
    if n < 1:
        raise ValueError(f"n_shards must be >= 1 (got {n})")
    if n > len(kids):
        raise ValueError(f"n_shards={n} exceeds dataset size {len(kids)}")
    return _split(kids, n, derive_seed(seed, _SHARD_STREAM))


def slice_shard(
    shard_kids: Sequence[int], s: int, seed: int, *, shard_id: int = 0
) -> list[list[int]]:
    """Partition one shard into s ordered slices d_1..d_s."""
    if s < 1:
        raise ValueError(f"n_slices must be >= 1 (got {s})")
    if s > len(shard_kids):
        raise ValueError(f"n_slices={s} exceeds shard size {len(shard_kids)}")
    return _split(shard_kids, s, derive_seed(seed, _SLICE_STREAM, shard_id))


@dataclass(frozen=True, slots=True)
class Affected:
    shard: int
    slice_index: int
    submodels: tuple[int, ...]


class ShardPlan:
    """kid -> (shard, slice) with the per-slice order used for commit and training."""

    def __init__(self, slices: Sequence[Sequence[Sequence[int]]]) -> None:
        self._slices = [[list(sl) for sl in shard_slices] for shard_slices in slices]
        if not self._slices or any(not s for s in self._slices):
            raise ValueError("a plan needs at least one shard with one slice")
        counts = {len(s) for s in self._slices}
        if len(counts) != 1:
            raise ValueError(f"all shards must have the same slice count, got {sorted(counts)}")
        self.n_shards = len(self._slices)
        self.n_slices = counts.pop()
        self._where: dict[int, tuple[int, int]] = {}
        for j, shard_slices in enumerate(self._slices):
            for i, sl in enumerate(shard_slices, start=1):
                for kid in sl:
                    if kid in self._where:
                        raise ValueError(f"kid {kid:#018x} appears twice in the plan")
                    self._where[kid] = (j, i)

    @classmethod
    def build(cls, kids: Sequence[int], n_shards: int, n_slices: int, seed: int) -> ShardPlan:
        if len(set(kids)) != len(kids):
            raise ValueError("dataset contains duplicate kids")
        shards = shard(kids, n_shards, seed)
        return cls([slice_shard(sk, n_slices, seed, shard_id=j) for j, sk in enumerate(shards)])

    def __len__(self) -> int:
        return len(self._where)

    def __contains__(self, kid: object) -> bool:
        return kid in self._where

    def __repr__(self) -> str:
        return f"<ShardPlan shards={self.n_shards} slices={self.n_slices} points={len(self)}>"

    def locate(self, kid: int) -> tuple[int, int]:
        try:
            return self._where[kid]
        except KeyError:
            raise UnknownKid(f"kid {kid:#018x} is not in the plan") from None

    def locate_affected(self, kid: int) -> Affected:
        j, i = self.locate(kid)
        return Affected(shard=j, slice_index=i, submodels=tuple(range(i, self.n_slices + 1)))

    def slice_kids(self, shard_id: int, slice_index: int) -> list[int]:
        return list(self._slices[shard_id][slice_index - 1])

    def slices(self, shard_id: int) -> list[list[int]]:
        return [list(sl) for sl in self._slices[shard_id]]

    def shard_kids(self, shard_id: int) -> list[int]:
        return [kid for sl in self._slices[shard_id] for kid in sl]

    def shard_sizes(self) -> list[int]:
        return [sum(len(sl) for sl in s) for s in self._slices]

    def without(self, kids: Iterable[int]) -> ShardPlan:
        """Same placement with kids removed (empty slices are kept)."""
        drop = set(kids)
        return ShardPlan(
            [[[k for k in sl if k not in drop] for sl in s] for s in self._slices]
        )

    def placements(self) -> Iterator[tuple[int, Placement]]:
        """Commit order: shard by shard, slice by slice; the last kid owns the submodel."""
        for j, shard_slices in enumerate(self._slices):
            for i, sl in enumerate(shard_slices, start=1):
                for pos, kid in enumerate(sl):
                    yield kid, Placement(j, i, slice_final=pos == len(sl) - 1)
