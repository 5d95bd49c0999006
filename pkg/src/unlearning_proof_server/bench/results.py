"""Benchmark result records, timing helpers and output files."""

from __future__ import annotations

import csv
import io
import logging
import statistics
import time
from collections.abc import Callable, Sequence
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import aiofiles
from pydantic import BaseModel, Field

UTC = timezone.utc  # datetime.UTC alias (Python 3.11+)

logger = logging.getLogger(__name__)

MIN_TIMING_REPS = 5


class Measurement(BaseModel):
    name: str
    value: float
    unit: str
    repetitions: int = 1
    stdev: float = 0.0


class BenchResult(BaseModel):
    experiment: str
    params: dict[str, Any] = Field(default_factory=dict)
    measurements: list[Measurement] = Field(default_factory=list)
    rows: list[dict[str, Any]] = Field(default_factory=list)
    passed: bool | None = None
    created_at: str = Field(default_factory=lambda: datetime.now(UTC).isoformat())

    def add(
        self, name: str, value: float, unit: str, *, repetitions: int = 1, stdev: float = 0.0
    ) -> Measurement:
        m = Measurement(name=name, value=value, unit=unit, repetitions=repetitions, stdev=stdev)
        self.measurements.append(m)
        return m

    def value(self, name: str) -> float:
        for m in self.measurements:
            if m.name == name:
                return m.value
        raise KeyError(f"{self.experiment} has no measurement {name!r}")

    def render(self) -> str:
        """Plain-text table for stdout."""
        lines = [f"== {self.experiment} =="]
        if self.params:
            lines.append("  " + ", ".join(f"{k}={v}" for k, v in self.params.items()))
        if self.measurements:
            width = max(len(m.name) for m in self.measurements)
            for m in self.measurements:
                spread = f" ± {m.stdev:.4g}" if m.stdev else ""
                reps = f"  (n={m.repetitions})" if m.repetitions > 1 else ""
                lines.append(f"  {m.name:<{width}}  {m.value:.6g}{spread} {m.unit}{reps}")
        if self.rows:
            lines.append(_table(self.rows))
        if self.passed is not None:
            lines.append(f"  result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _fmt(v: Any) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _table(rows: list[dict[str, Any]]) -> str:
    cols = list(dict.fromkeys(k for r in rows for k in r))
    cells = [[_fmt(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    out = ["  " + "  ".join(c.rjust(w) for c, w in zip(cols, widths, strict=True))]
    for row in cells:
        out.append("  " + "  ".join(v.rjust(w) for v, w in zip(row, widths, strict=True)))
    return "\n".join(out)


def time_loop(
    op: Callable[[Any], object],
    items: Sequence[Any],
    *,
    clock: Callable[[], float] = time.perf_counter,
) -> float:
    """Mean wall seconds per call of op over items."""
    t0 = clock()
    for item in items:
        op(item)
    return (clock() - t0) / max(len(items), 1)


def summarize_us(samples_s: list[float]) -> tuple[float, float]:
    """Mean and population stdev of per-op seconds, in microseconds."""
    us = [s * 1e6 for s in samples_s]
    return statistics.fmean(us), statistics.pstdev(us) if len(us) > 1 else 0.0


async def write_result(result: BenchResult, results_dir: str | Path) -> Path:
    """``<experiment>.json`` always; ``<experiment>.csv`` when there are rows."""
    out = Path(results_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{result.experiment}.json"
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write(result.model_dump_json(indent=2))
    if result.rows:
        buf = io.StringIO()
        cols = list(dict.fromkeys(k for r in result.rows for k in r))
        writer = csv.DictWriter(buf, fieldnames=cols)
        writer.writeheader()
        writer.writerows(result.rows)
        async with aiofiles.open(out / f"{result.experiment}.csv", "w", encoding="utf-8") as f:
            await f.write(buf.getvalue())
    logger.info("wrote %s", path)
    return path
