from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from unlearning_proof_server.core.errors import TrainingDivergedError
from unlearning_proof_server.core.ml import (
    Hyperparams,
    ModelDims,
    canonical_bytes,
    derive_seed,
    from_canonical_bytes,
    init_model,
    loss_and_grads,
    predict,
    train_sgd,
)

DIMS = ModelDims(6, 5, 3)


def _batch(n: int = 12, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, DIMS.input_dim)).astype(np.float32)
    y = rng.integers(0, DIMS.class_count, size=n)
    return x, y


def test_init_is_bounded_by_fan_in() -> None:
    model = init_model(DIMS, seed=4)

    assert np.abs(model.w1).max() <= np.float32(1 / np.sqrt(DIMS.input_dim))
    assert np.abs(model.w2).max() <= np.float32(1 / np.sqrt(DIMS.hidden_dim))
    assert model.slice_index == 0
    assert canonical_bytes(init_model(DIMS, seed=4)) == canonical_bytes(model)


def test_gradients_match_finite_differences() -> None:
    model = init_model(DIMS, seed=1)
    wide = {k: getattr(model, k).astype(np.float64) for k in ("w1", "b1", "w2", "b2")}
    model = replace(model, **wide)
    x, y = _batch()
    x = x.astype(np.float64)
    _, grads = loss_and_grads(model, x, y)

    eps = 1e-6
    for name, idx in (("w1", (2, 3)), ("b1", (1,)), ("w2", (4, 0)), ("b2", (2,))):
        plus = getattr(model, name).copy()
        minus = getattr(model, name).copy()
        plus[idx] += eps
        minus[idx] -= eps
        lp, _ = loss_and_grads(replace(model, **{name: plus}), x, y)
        lm, _ = loss_and_grads(replace(model, **{name: minus}), x, y)
        assert getattr(grads, name)[idx] == pytest.approx((lp - lm) / (2 * eps), abs=1e-6)


def test_training_lowers_the_loss() -> None:
    x, y = _batch(64)
    model = init_model(DIMS, seed=2)
    before, _ = loss_and_grads(model, x, y)

    trained = train_sgd(model, x, y, Hyperparams(batch_size=16, epochs=30, learning_rate=0.2))

    after, _ = loss_and_grads(trained, x, y)
    assert after < before
    assert trained.slice_index == model.slice_index


def test_training_depends_only_on_seed_and_stream() -> None:
    x, y = _batch(40)
    model = init_model(DIMS, seed=3)
    hp = Hyperparams(batch_size=8, epochs=3, learning_rate=0.1, rng_seed=11)

    a = train_sgd(model, x, y, hp, stream=(0, 1))
    b = train_sgd(model, x, y, hp, stream=(0, 1))
    c = train_sgd(model, x, y, hp, stream=(0, 2))

    assert canonical_bytes(a) == canonical_bytes(b)
    assert canonical_bytes(a) != canonical_bytes(c)


def test_zero_epochs_return_the_input() -> None:
    x, y = _batch()
    model = init_model(DIMS, seed=0)

    assert train_sgd(model, x, y, Hyperparams(epochs=0)) is model


def test_divergence_is_reported() -> None:
    x, y = _batch()
    x[0, :] = np.nan

    with pytest.raises(TrainingDivergedError, match="non-finite loss"):
        train_sgd(init_model(DIMS, seed=0), x, y, Hyperparams(batch_size=12, epochs=1))


def test_overflowing_step_is_reported() -> None:
    x, y = _batch()
    hp = Hyperparams(batch_size=12, epochs=1, learning_rate=1e40)

    with pytest.raises(TrainingDivergedError, match="non-finite parameters"):
        train_sgd(init_model(DIMS, seed=0), x, y, hp)


def test_canonical_layout() -> None:
    model = replace(init_model(DIMS, seed=5), slice_index=4)

    raw = canonical_bytes(model)
    back = from_canonical_bytes(raw, DIMS)

    assert len(raw) == DIMS.canonical_size == DIMS.param_count * 4 + 8
    assert raw[-8:] == (4).to_bytes(8, "little")
    assert back.slice_index == 4
    assert np.array_equal(back.w1, model.w1)
    with pytest.raises(ValueError):
        from_canonical_bytes(raw[:-1], DIMS)


def test_predict_takes_one_row_and_breaks_ties_low() -> None:
    model = init_model(DIMS, seed=0)
    flat = replace(
        model,
        w2=np.zeros_like(model.w2),
        b2=np.zeros_like(model.b2),
    )

    pred = predict(flat, np.ones(DIMS.input_dim, dtype=np.float32))

    assert pred.label == 0
    assert pred.scores == pytest.approx((1 / 3, 1 / 3, 1 / 3))
    with pytest.raises(ValueError):
        predict(model, np.ones((2, DIMS.input_dim), dtype=np.float32))


def test_derive_seed_is_stable_per_input() -> None:
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)
