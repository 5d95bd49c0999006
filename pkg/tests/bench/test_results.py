from __future__ import annotations

import csv
import json

import pytest

from unlearning_proof_server.bench import BenchResult, write_result
from unlearning_proof_server.bench.results import summarize_us, time_loop


@pytest.fixture
def result() -> BenchResult:
    r = BenchResult(experiment="demo", params={"items": 10})
    r.add("insert", 1.5, "us", repetitions=5, stdev=0.25)
    r.rows = [{"slices": 1, "accuracy": 0.9}, {"slices": 3, "accuracy": 0.875}]
    r.passed = True
    return r


def test_render_lists_measurements_rows_and_verdict(result: BenchResult) -> None:
    text = result.render()

    assert text.splitlines()[0] == "== demo =="
    assert "items=10" in text
    assert "insert  1.5 ± 0.25 us  (n=5)" in text
    assert "accuracy" in text and "0.875" in text
    assert text.endswith("result: PASS")


def test_value_lookup(result: BenchResult) -> None:
    assert result.value("insert") == 1.5
    with pytest.raises(KeyError, match="query"):
        result.value("query")


@pytest.mark.asyncio
async def test_write_result_json_and_csv(result: BenchResult, tmp_path) -> None:
    path = await write_result(result, tmp_path / "out")

    body = json.loads(path.read_text(encoding="utf-8"))
    assert path.name == "demo.json"
    assert body["measurements"][0]["name"] == "insert"
    with (tmp_path / "out" / "demo.csv").open(encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows == [{"slices": "1", "accuracy": "0.9"}, {"slices": "3", "accuracy": "0.875"}]


@pytest.mark.asyncio
async def test_no_csv_without_rows(tmp_path) -> None:
    await write_result(BenchResult(experiment="bare"), tmp_path)

    assert (tmp_path / "bare.json").exists()
    assert not (tmp_path / "bare.csv").exists()


def test_time_loop_uses_the_clock() -> None:
    ticks = iter([0.0, 2.0])
    calls = []

    mean = time_loop(calls.append, [1, 2, 3, 4], clock=lambda: next(ticks))

    assert calls == [1, 2, 3, 4]
    assert mean == 0.5


def test_summarize_us() -> None:
    mean, sd = summarize_us([1e-6, 3e-6])

    assert mean == pytest.approx(2.0)
    assert sd == pytest.approx(1.0)
    assert summarize_us([5e-6])[1] == 0.0
