"""SHA-256 Merkle hash tree, the comparison baseline for the cuckoo filter.

Leaves are padded to a power of two with ``NULL_HASH``. ``hash_count`` counts
internal-node evaluations so benchmarks can check the log2(n) update cost.
"""

from __future__ import annotations

import hashlib
from collections.abc import Sequence
from dataclasses import dataclass

NULL_HASH = bytes(32)


def _h(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def leaf_hash(value: bytes) -> bytes:
    return _h(value)


@dataclass(frozen=True, slots=True)
class PathStep:
    sibling: bytes
    sibling_is_left: bool


class MerkleTree:
    """Array-backed tree: node 1 is the root, leaves live at ``[size, 2*size)``."""

    def __init__(self, leaves: Sequence[bytes]) -> None:
        if not leaves:
            raise ValueError("MerkleTree needs at least one leaf")
        self.leaf_count = len(leaves)
        size = 1
        while size < self.leaf_count:
            size <<= 1
        self.size = size
        self.hash_count = 0
        nodes = [NULL_HASH] * (2 * size)
        for i, value in enumerate(leaves):
            nodes[size + i] = leaf_hash(value)
        self._nodes = nodes
        self.rebuild()

    @classmethod
    def build(cls, leaves: Sequence[bytes]) -> MerkleTree:
        return cls(leaves)

    @property
    def root(self) -> bytes:
        # With one leaf, node 1 is the leaf itself.
        return self._nodes[1]

    @property
    def depth(self) -> int:
        return self.size.bit_length() - 1

    def rebuild(self) -> bytes:
        """Recompute every internal node (n - 1 evaluations)."""
        nodes = self._nodes
        for k in range(self.size - 1, 0, -1):
            nodes[k] = _h(nodes[2 * k] + nodes[2 * k + 1])
            self.hash_count += 1
        return self.root

    def _check(self, index: int) -> None:
        if not 0 <= index < self.leaf_count:
            raise IndexError(f"leaf index {index} out of range [0, {self.leaf_count})")

    def _set_leaf_node(self, index: int, node: bytes) -> bytes:
        k = self.size + index
        self._nodes[k] = node
        k //= 2
        while k >= 1:
            self._nodes[k] = _h(self._nodes[2 * k] + self._nodes[2 * k + 1])
            self.hash_count += 1
            k //= 2
        return self.root

    def update_leaf(self, index: int, value: bytes) -> bytes:
        self._check(index)
        return self._set_leaf_node(index, leaf_hash(value))

    def delete_leaf(self, index: int) -> bytes:
        """Replace the leaf with the null marker and return the new root."""
        self._check(index)
        return self._set_leaf_node(index, NULL_HASH)

    def leaf(self, index: int) -> bytes:
        self._check(index)
        return self._nodes[self.size + index]

    def prove_membership(self, index: int) -> list[PathStep]:
        self._check(index)
        path: list[PathStep] = []
        k = self.size + index
        while k > 1:
            sibling = k ^ 1
            path.append(PathStep(self._nodes[sibling], sibling_is_left=bool(k & 1)))
            k //= 2
        return path


def verify_path(root: bytes, leaf: bytes, path: Sequence[PathStep]) -> bool:
    """Check that ``leaf`` (raw value) hashes up to ``root`` along ``path``."""
    node = leaf_hash(leaf)
    for step in path:
        node = _h(step.sibling + node) if step.sibling_is_left else _h(node + step.sibling)
    return node == root
