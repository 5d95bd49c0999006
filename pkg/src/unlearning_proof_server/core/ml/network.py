"""Two-layer fully connected classifier trained with mini-batch SGD.

The network is FC(input -> hidden) -> ReLU -> FC(hidden -> classes) with a
softmax cross-entropy loss over one-hot targets. All arithmetic stays in the
parameter dtype (float32 by default) so that a fixed initial model, kid order
and Hyperparams reproduce the trained parameters bit for bit.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from ..errors import TrainingDivergedError

logger = logging.getLogger(__name__)

DTYPE = np.float32
_LE_F32 = np.dtype("<f4")


@dataclass(frozen=True, slots=True)
class ModelDims:
    input_dim: int = 600
    hidden_dim: int = 128
    class_count: int = 2

    def __post_init__(self) -> None:
        for name in ("input_dim", "hidden_dim", "class_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1 (got {getattr(self, name)})")

    @property
    def param_count(self) -> int:
        i, h, c = self.input_dim, self.hidden_dim, self.class_count
        return i * h + h + h * c + c

    @property
    def canonical_size(self) -> int:
        return self.param_count * 4 + 8


@dataclass(frozen=True, slots=True)
class Hyperparams:
    batch_size: int = 1000
    epochs: int = 22
    learning_rate: float = 0.1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1 (got {self.batch_size})")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0 (got {self.epochs})")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0 (got {self.learning_rate})")


@dataclass(frozen=True, slots=True, eq=False)
class ModelParams:
    """Immutable parameter snapshot; arrays are never mutated in place."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    slice_index: int = 0

    @property
    def dims(self) -> ModelDims:
        return ModelDims(self.w1.shape[0], self.w1.shape[1], self.w2.shape[1])

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.w1, self.b1, self.w2, self.b2

    def is_finite(self) -> bool:
        return all(bool(np.isfinite(a).all()) for a in self.arrays())


@dataclass(frozen=True, slots=True, eq=False)
class Gradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True, slots=True)
class Prediction:
    scores: tuple[float, ...]
    label: int


def derive_seed(*parts: int) -> int:
    """Mix integers into one 64-bit seed (stable across runs and platforms)."""
    seq = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    return int(seq.generate_state(1, np.uint64)[0])


def init_model(dims: ModelDims | tuple[int, int, int], seed: int) -> ModelParams:
    """Initial model M0: every tensor uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    if not isinstance(dims, ModelDims):
        dims = ModelDims(*dims)
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    b_in = 1.0 / math.sqrt(dims.input_dim)
    b_hid = 1.0 / math.sqrt(dims.hidden_dim)
    i, h, c = dims.input_dim, dims.hidden_dim, dims.class_count
    return ModelParams(
        w1=rng.uniform(-b_in, b_in, size=(i, h)).astype(DTYPE),
        b1=rng.uniform(-b_in, b_in, size=h).astype(DTYPE),
        w2=rng.uniform(-b_hid, b_hid, size=(h, c)).astype(DTYPE),
        b2=rng.uniform(-b_hid, b_hid, size=c).astype(DTYPE),
        slice_index=0,
    )


def _check_batch(model: ModelParams, features: np.ndarray) -> None:
    if features.ndim != 2 or features.shape[1] != model.w1.shape[0]:
        raise ValueError(
            f"feature dimension mismatch: expected (*, {model.w1.shape[0]}), got {features.shape}"
        )


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(
    model: ModelParams, features: np.ndarray, labels: np.ndarray
) -> tuple[float, Gradients]:
    """Mean softmax cross-entropy and its gradients over one batch."""
    n = features.shape[0]
    if n == 0:
        raise ValueError("batch must be nonempty")
    _check_batch(model, features)
    dtype = model.w1.dtype
    x = features.astype(dtype, copy=False)

    z1 = x @ model.w1 + model.b1
    h = np.maximum(z1, 0)
    z2 = h @ model.w2 + model.b2
    p = _softmax(z2)

    rows = np.arange(n)
    picked = np.clip(p[rows, labels], np.finfo(dtype).tiny, None)
    loss = float(-np.log(picked).mean())

    dz2 = p.copy()
    dz2[rows, labels] -= 1
    dz2 /= dtype.type(n)
    gw2 = h.T @ dz2
    gb2 = dz2.sum(axis=0)
    dz1 = (dz2 @ model.w2.T) * (z1 > 0)
    gw1 = x.T @ dz1
    gb1 = dz1.sum(axis=0)
    return loss, Gradients(w1=gw1, b1=gb1, w2=gw2, b2=gb2)


def sgd_step(model: ModelParams, grads: Gradients, learning_rate: float) -> ModelParams:
    lr = model.w1.dtype.type(learning_rate)
    return replace(
        model,
        w1=model.w1 - lr * grads.w1,
        b1=model.b1 - lr * grads.b1,
        w2=model.w2 - lr * grads.w2,
        b2=model.b2 - lr * grads.b2,
    )


def train_sgd(
    model: ModelParams,
    features: np.ndarray,
    labels: np.ndarray,
    hp: Hyperparams,
    *,
    stream: Sequence[int] = (),
    epochs: int | None = None,
) -> ModelParams:
    """Run mini-batch SGD over rows given in kid order.

    Each epoch visits the rows in a permutation drawn from
    ``derive_seed(hp.rng_seed, *stream, epoch)``, so the batch schedule depends
    only on the seed, the stream tag and the supplied row order. The returned
    model keeps the input's slice_index; callers advance it.
    """
    n_epochs = hp.epochs if epochs is None else epochs
    n = features.shape[0]
    if n == 0 or n_epochs == 0:
        return model
    _check_batch(model, features)
    if labels.shape[0] != n:
        raise ValueError(f"label count {labels.shape[0]} does not match {n} rows")

    batch = min(hp.batch_size, n)
    for epoch in range(n_epochs):
        order = np.random.default_rng(derive_seed(hp.rng_seed, *stream, epoch)).permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss, grads = loss_and_grads(model, features[idx], labels[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch}, batch offset {start} "
                    f"(learning_rate={hp.learning_rate})"
                )
            model = sgd_step(model, grads, hp.learning_rate)
            if not model.is_finite():
                raise TrainingDivergedError(
                    f"non-finite parameters at epoch {epoch}, batch offset {start} "
                    f"(learning_rate={hp.learning_rate})"
                )
        logger.debug("epoch %s/%s loss=%.5f stream=%s", epoch + 1, n_epochs, loss, tuple(stream))
    return model


def scores(model: ModelParams, features: np.ndarray) -> np.ndarray:
    """Softmax class scores for a batch of rows."""
    _check_batch(model, features)
    x = features.astype(model.w1.dtype, copy=False)
    h = np.maximum(x @ model.w1 + model.b1, 0)
    return _softmax(h @ model.w2 + model.b2)


def predict(model: ModelParams, features: np.ndarray) -> Prediction:
    x = np.asarray(features)
    if x.ndim != 1:
        raise ValueError(f"predict expects one feature vector, got shape {x.shape}")
    s = scores(model, x[None, :])[0]
    # np.argmax returns the first maximal index, which is the tie-break rule.
    return Prediction(scores=tuple(float(v) for v in s), label=int(np.argmax(s)))


def accuracy(model: ModelParams, features: np.ndarray, labels: np.ndarray) -> float:
    if features.shape[0] == 0:
        return 0.0
    return float((scores(model, features).argmax(axis=1) == labels).mean())


def canonical_bytes(model: ModelParams) -> bytes:
    """Little-endian float32 w1, b1, w2, b2 (C order), then slice_index as u64."""
    parts = [np.ascontiguousarray(a, dtype=_LE_F32).tobytes() for a in model.arrays()]
    parts.append(int(model.slice_index).to_bytes(8, "little"))
    return b"".join(parts)


def from_canonical_bytes(data: bytes, dims: ModelDims) -> ModelParams:
    if len(data) != dims.canonical_size:
        raise ValueError(f"expected {dims.canonical_size} bytes for {dims}, got {len(data)}")
    i, h, c = dims.input_dim, dims.hidden_dim, dims.class_count
    flat = np.frombuffer(data, dtype=_LE_F32, count=dims.param_count).astype(DTYPE)
    o1 = i * h
    o2 = o1 + h
    o3 = o2 + h * c
    return ModelParams(
        w1=flat[:o1].reshape(i, h),
        b1=flat[o1:o2],
        w2=flat[o2:o3].reshape(h, c),
        b2=flat[o3:],
        slice_index=int.from_bytes(data[-8:], "little"),
    )
