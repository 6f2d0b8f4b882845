from datetime import UTC, datetime, timedelta, timezone

import pytest
from lib import THREADS_ENV_VAR
from lib.utils import (
    coerce_float,
    coerce_str,
    ensure_list,
    ensure_mapping,
    format_number,
    normalize_timestamp,
    parse_datetime,
    parse_grid,
    resolve_workers,
)


def test_parse_grid_range_is_end_inclusive() -> None:
    values = parse_grid("2:10:0.5")
    assert len(values) == 17
    assert values[0] == 2.0
    assert values[-1] == pytest.approx(10.0)


def test_parse_grid_comma_list() -> None:
    assert parse_grid("1, 2.5,4") == [1.0, 2.5, 4.0]


@pytest.mark.parametrize(
    ("raw", "message"),
    [
        ("", "Empty grid"),
        ("1:2", "start:end:step"),
        ("1:5:0", "step must be positive"),
        ("5:1:1", "end precedes start"),
        ("1,abc", "Expected number"),
    ],
)
def test_parse_grid_rejects_bad_input(raw: str, message: str) -> None:
    with pytest.raises(ValueError, match=message):
        parse_grid(raw)


def test_coerce_float_and_str() -> None:
    assert coerce_float("  1.5 ", context="x") == 1.5
    assert coerce_float(3, context="x") == 3.0
    assert coerce_str("   ") is None
    with pytest.raises(ValueError, match="Expected number for flag"):
        coerce_float(True, context="flag")


def test_ensure_helpers() -> None:
    assert ensure_mapping({"a": 1}, context="root") == {"a": 1}
    assert ensure_list([1, 2], context="items") == [1, 2]
    with pytest.raises(ValueError, match="Expected mapping for root"):
        ensure_mapping([1], context="root")
    with pytest.raises(ValueError, match="Expected list for items"):
        ensure_list({"a": 1}, context="items")


def test_format_number_keeps_full_precision() -> None:
    assert format_number(None) == ""
    assert float(format_number(0.1 + 0.2)) == 0.1 + 0.2


def test_resolve_workers_respects_env_cap(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv(THREADS_ENV_VAR, "2")
    assert resolve_workers(8) == 2
    assert resolve_workers(1) == 1
    monkeypatch.setenv(THREADS_ENV_VAR, "many")
    with pytest.raises(ValueError, match=THREADS_ENV_VAR):
        resolve_workers(4)
    monkeypatch.delenv(THREADS_ENV_VAR)
    assert resolve_workers(0) == 1


def test_parse_datetime_accepts_datetime() -> None:
    original = datetime(2024, 6, 1, 12, 0, 0, tzinfo=UTC)
    assert parse_datetime(original) is original
    with pytest.raises(ValueError, match="Unsupported timestamp"):
        parse_datetime(12)


def test_normalize_timestamp_converts_offsets() -> None:
    offset = datetime(2024, 6, 1, 14, 0, 0, tzinfo=timezone(timedelta(hours=2)))
    assert normalize_timestamp(offset) == "2024-06-01T12:00:00Z"
    assert normalize_timestamp("2024-06-01T12:00:00") == "2024-06-01T12:00:00Z"
