"""Synthetic stand-in for the purchase-history dataset.

Each class gets a random binary prototype; a point copies its class prototype
and flips every bit independently with probability ``flip``. The classes are
therefore linearly separable in expectation and the default two-layer net
learns them quickly, while the layout (600 binary features, integer labels)
matches the real data, so the import format accepts either.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..core.dataset import Dataset, write_dataset

logger = logging.getLogger(__name__)

FULL_TRAIN = 280_367
FULL_TEST = 31_152
FEATURE_DIM = 600
TRAIN_FILE = "train.bin"
TEST_FILE = "test.bin"

_MAX_REDRAWS = 32


def _draw(rng: np.random.Generator, prototypes: np.ndarray, labels: np.ndarray, flip: float):
    flips = rng.random((labels.shape[0], prototypes.shape[1])) < flip
    return np.logical_xor(prototypes[labels], flips).astype(np.float32)


def _distinct(
    rng: np.random.Generator, prototypes: np.ndarray, labels: np.ndarray, flip: float
) -> np.ndarray:
    """Rows with no exact (features, label) duplicate, so every kid is unique."""
    rows = _draw(rng, prototypes, labels, flip)
    if rows.shape[0] == 0:
        return rows
    for _ in range(_MAX_REDRAWS):
        keyed = np.concatenate([rows, labels[:, None].astype(np.float32)], axis=1)
        _, first = np.unique(keyed, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(rows.shape[0]), first)
        if dup.size == 0:
            return rows
        rows[dup] = _draw(rng, prototypes, labels[dup], flip)
    raise ValueError(
        f"could not draw {rows.shape[0]} distinct points in {prototypes.shape[1]} dimensions"
    )


def gen_dataset(
    n_train: int,
    n_test: int,
    *,
    dim: int = FEATURE_DIM,
    classes: int = 2,
    seed: int = 0,
    flip: float = 0.4,
) -> tuple[Dataset, Dataset]:
    """Deterministic (train, test) split drawn from the same class prototypes."""
    if n_train < 1 or n_test < 0:
        raise ValueError(f"need n_train >= 1 and n_test >= 0 (got {n_train}, {n_test})")
    if classes < 2:
        raise ValueError(f"classes must be >= 2 (got {classes})")
    if not 0.0 <= flip < 0.5:
        raise ValueError(f"flip must be in [0, 0.5) (got {flip})")
    rng = np.random.default_rng(seed)
    prototypes = rng.integers(0, 2, size=(classes, dim), dtype=np.int8).astype(bool)
    splits = []
    for n in (n_train, n_test):
        labels = rng.integers(0, classes, size=n, dtype=np.int64)
        rows = _distinct(rng, prototypes, labels, flip)
        splits.append(Dataset(rows, labels, classes=classes))
    return splits[0], splits[1]


def assign_owners(dataset: Dataset, n_owners: int, *, seed: int = 0) -> Dataset:
    """Tag points with ``owner-<k>`` drawn uniformly from n_owners owners."""
    if n_owners < 1:
        raise ValueError(f"n_owners must be >= 1 (got {n_owners})")
    picks = np.random.default_rng(seed).integers(0, n_owners, size=len(dataset))
    return dataset.with_owners([f"owner-{k}" for k in picks])


async def write_split(directory: str | Path, train: Dataset, test: Dataset) -> tuple[Path, Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    train_path, test_path = out / TRAIN_FILE, out / TEST_FILE
    await write_dataset(train_path, train)
    await write_dataset(test_path, test)
    logger.info("dataset split written to %s", out)
    return train_path, test_path
