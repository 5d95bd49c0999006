from __future__ import annotations

import json
from pathlib import Path

import pytest

from unlearning_proof_server.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, main

SMALL = ["--points", "60", "--slices", "3", "--epochs", "1", "--batch", "32", "--buckets", "256"]


def _run(argv: list[str]) -> int:
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


def _json(capsys: pytest.CaptureFixture[str]) -> dict:
    return json.loads(capsys.readouterr().out)


def test_gen_dataset_writes_split(tmp_path: Path) -> None:
    code = _run(
        ["gen-dataset", "--train", "20", "--test", "5", "--dim", "8", "--out", str(tmp_path)]
    )

    assert code == EXIT_OK
    assert (tmp_path / "train.bin").stat().st_size == 20 + 20 * (2 + 4 * 8)
    assert (tmp_path / "test.bin").is_file()


def test_session_round_trip(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    ws = ["--workspace", str(tmp_path / "ws")]

    assert _run(["setup", *SMALL, *ws]) == EXIT_OK
    assert _json(capsys)["accepted"] is True

    assert _run(["challenge", *ws]) == EXIT_OK
    capsys.readouterr()

    assert _run(["delete", "0", "4", *ws]) == EXIT_OK
    assert len(_json(capsys)["deleted"]) == 2

    assert _run(["membership", "4", *ws]) == EXIT_OK
    assert _json(capsys)["present"] is False

    assert _run(["audit", "--challenges", "1", *ws]) == EXIT_OK
    assert _json(capsys)["report_accepted"] is True

    assert _run(["verify-transcript", *ws]) == EXIT_OK
    assert _json(capsys)["failures"] == []


def test_missing_session_is_a_protocol_error(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    code = _run(["challenge", "--workspace", str(tmp_path / "none")])

    assert code == EXIT_FAILED
    assert "run setup first" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["setup", "--slices", "0"],
        ["setup", "--buckets", "100"],
        ["bench-storage", "--fp-bits", "64"],
    ],
)
def test_bad_config_exits_2(
    argv: list[str], tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    code = _run([*argv, *(["--workspace", str(tmp_path)] if argv[0] == "setup" else [])])

    assert code == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_bench_storage_writes_results(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    out = tmp_path / "results"

    code = _run(
        [
            "bench-storage",
            "--slices", "2",
            "--hidden", "8",
            "--buckets", "64",
            "--entries", "100",
            "--results-dir", str(out),
        ]
    )

    assert code == EXIT_OK
    assert "== bench-storage ==" in capsys.readouterr().out
    body = json.loads((out / "bench-storage.json").read_text(encoding="utf-8"))
    assert body["passed"] is True


def test_results_dir_from_env(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str]
) -> None:
    monkeypatch.setenv("POUL_RESULTS_DIR", str(tmp_path / "env-results"))

    code = _run(["bench-storage", "--hidden", "8", "--buckets", "64", "--entries", "10"])

    assert code == EXIT_OK
    assert (tmp_path / "env-results" / "bench-storage.json").is_file()


def test_unknown_command_is_a_usage_error() -> None:
    assert _run(["teleport"]) == 2
