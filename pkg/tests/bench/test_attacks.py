from __future__ import annotations

import pytest

from unlearning_proof_server.bench import STRATEGIES, attack_sim, build_arena, run_attack


@pytest.fixture
def arena(make_config, toy_dataset):
    return build_arena(toy_dataset, make_config(), seed=3)


def test_arena_keeps_a_stale_pre_deletion_enclave(arena) -> None:
    assert arena.stale.pk == arena.server.pk
    assert arena.stale.eid == arena.server.eid
    assert arena.stale_h_model != arena.owner.verifier.latest_h_model


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_every_strategy_is_rejected(arena, strategy: str) -> None:
    outcome = run_attack(arena, strategy, trials=5)

    assert outcome.trials == 5
    assert outcome.detection_rate == 1.0, outcome.detected_by


def test_buffers_are_restored_between_trials(arena) -> None:
    before = bytes(arena.server.data_store.raw), bytes(arena.server.model_link.raw)

    run_attack(arena, "replace-data", trials=3)

    assert (bytes(arena.server.data_store.raw), bytes(arena.server.model_link.raw)) == before
    assert arena.server.integrity_scrub().data_checked == 59


def test_storage_attacks_are_named_by_the_enclave(arena) -> None:
    rollback = run_attack(arena, "rollback-submodel", trials=4)
    replace = run_attack(arena, "replace-data", trials=4)

    assert set(rollback.detected_by) == {"rollback-or-relocation"}
    assert set(replace.detected_by) <= {"replace-data", "deleted-or-forged"}


def test_attack_sim_needs_two_submodels(make_config, toy_dataset) -> None:
    with pytest.raises(ValueError, match="two submodels"):
        attack_sim(toy_dataset, make_config(slices=1))


@pytest.mark.slow
def test_attack_sim_rejects_all_hundred_trials(make_config, make_dataset) -> None:
    result = attack_sim(make_dataset(120), make_config(slices=3, epochs=1), trials=100)

    assert result.passed
    assert all(r["rejected"] == 100 for r in result.rows)
