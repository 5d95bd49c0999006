from __future__ import annotations

import random

import pytest

from unlearning_proof_server.core.filter import CuckooFilter, FilterConfig, fingerprint


def _random_items(n: int, seed: int) -> list[tuple[int, int]]:
    rng = random.Random(seed)
    return [(fp, rng.getrandbits(64)) for fp in range(1, n + 1)]


def test_insert_query_delete(small_filter: FilterConfig) -> None:
    f = CuckooFilter(small_filter)

    assert f.insert(0x123, 5)
    assert f.query(0x123, 5)
    assert f.item_count == 1

    assert f.delete(0x123, 5)
    assert not f.query(0x123, 5)
    assert f.item_count == 0
    assert not f.delete(0x123, 5)


def test_alternate_index_is_symmetric(small_filter: FilterConfig) -> None:
    f = CuckooFilter(small_filter)
    for fp in (1, 7, 0xABC, 0xFFF):
        i1, i2 = f.index_pair(1234, fp)
        assert f.alt_index(i1, fp) == i2
        assert f.alt_index(i2, fp) == i1


def test_zero_fingerprint_is_reserved(small_filter: FilterConfig) -> None:
    with pytest.raises(ValueError):
        CuckooFilter(small_filter).insert(0, 1)


def test_failed_insert_leaves_table_unchanged() -> None:
    f = CuckooFilter(FilterConfig(bucket_count=1, entries_per_bucket=1, displacement_limit=5))
    assert f.insert(1, 0)
    before = f.serialize()

    assert not f.insert(2, 0)
    assert f.serialize() == before
    assert f.item_count == 1
    assert f.query(1, 0)


def test_fill_to_high_load(small_filter: FilterConfig) -> None:
    f = CuckooFilter(small_filter)
    target = int(0.9 * small_filter.slot_count)
    inserted = [(fp, fp * 31) for fp in range(1, target + 1) if f.insert(fp, fp * 31)]

    assert len(inserted) >= int(0.8 * small_filter.slot_count)
    assert all(f.query(fp, h1) for fp, h1 in inserted)
    assert f.load_factor == pytest.approx(len(inserted) / small_filter.slot_count)


def test_serialization_is_canonical(small_filter: FilterConfig) -> None:
    f = CuckooFilter(small_filter)
    for fp in range(1, 50):
        f.insert(fp, fp * 7)

    blob = f.serialize()
    g = CuckooFilter.deserialize(blob)

    assert g.digest() == f.digest()
    assert all(g.query(fp, fp * 7) for fp in range(1, 50))
    assert len(blob) == 36 + small_filter.table_bytes


def test_restored_filter_evicts_like_the_original() -> None:
    cfg = FilterConfig(bucket_count=16, entries_per_bucket=2, eviction_seed=0xC0FFEE)
    items = _random_items(39, seed=3)
    f = CuckooFilter(cfg)
    for fp, h1 in items[:24]:
        f.insert(fp, h1)
    assert f.evictions > 0

    g = CuckooFilter.deserialize(f.serialize(), displacement_limit=cfg.displacement_limit)
    assert g.config.eviction_seed == 0xC0FFEE
    assert g.evictions == f.evictions

    for fp, h1 in items[24:]:
        assert g.insert(fp, h1) == f.insert(fp, h1)
    assert g.serialize() == f.serialize()


def test_eviction_seed_changes_the_layout() -> None:
    def filled(seed: int) -> bytes:
        f = CuckooFilter(FilterConfig(bucket_count=16, entries_per_bucket=2, eviction_seed=seed))
        for fp, h1 in _random_items(28, seed=4):
            f.insert(fp, h1)
        return f.serialize()

    assert filled(1) == filled(1)
    assert filled(1)[36:] != filled(2)[36:]


def test_digest_tracks_content(small_filter: FilterConfig) -> None:
    f = CuckooFilter(small_filter)
    empty = f.digest()
    f.insert(9, 9)
    assert f.digest() != empty
    f.delete(9, 9)
    assert f.digest() == empty


def test_table_bytes_formula() -> None:
    assert FilterConfig().table_bytes == (1 << 16) * 4 * 12 // 8
    assert FilterConfig(fingerprint_bits=8).table_bytes == (1 << 16) * 4


@pytest.mark.parametrize(
    "kwargs",
    [
        {"bucket_count": 100},
        {"fingerprint_bits": 0},
        {"fingerprint_bits": 33},
        {"entries_per_bucket": 0},
        {"displacement_limit": -1},
        {"eviction_seed": -1},
        {"eviction_seed": 1 << 64},
    ],
)
def test_config_validation(kwargs: dict) -> None:
    with pytest.raises(ValueError):
        FilterConfig(**kwargs)


def test_fingerprint_is_keyed_and_scoped_to_eid() -> None:
    key = bytes(range(16))
    eid = b"e" * 32
    fp = fingerprint(42, b"data", eid, key, bits=12)

    assert fp == fingerprint(42, b"data", eid, key, bits=12)
    assert 1 <= fp < 1 << 12
    others = {
        fingerprint(42, b"data", b"x" * 32, key, bits=12),
        fingerprint(42, b"data", eid, bytes(16), bits=12),
        fingerprint(43, b"data", eid, key, bits=12),
    }
    # 12-bit tags can collide by chance, but not all three at once.
    assert others != {fp}
