import math
import os
from datetime import UTC, datetime
from typing import Any, cast

import dateutil.parser

from lib import SIG_DIGITS, THREADS_ENV_VAR


def ensure_mapping(value: object, *, context: str) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise ValueError(f"Expected mapping for {context}.")
    return cast(dict[str, Any], value)


def ensure_list(value: object, *, context: str) -> list[Any]:
    if not isinstance(value, list):
        raise ValueError(f"Expected list for {context}.")
    return [cast(Any, item) for item in cast(list[object], value)]


def coerce_str(value: object | None) -> str | None:
    if value is None:
        return None
    text = str(value).strip()
    return text or None


def coerce_float(value: object, *, context: str) -> float:
    if isinstance(value, bool):
        raise ValueError(f"Expected number for {context}, got {value!r}.")
    if isinstance(value, (int, float)):
        return float(value)
    text = coerce_str(value)
    if text is None:
        raise ValueError(f"Expected number for {context}, got empty value.")
    try:
        return float(text)
    except ValueError as exc:
        raise ValueError(f"Expected number for {context}, got {text!r}.") from exc


def parse_grid(raw: str) -> list[float]:
    """Parse `start:end:step` (end inclusive) or an explicit comma list into floats."""
    text = raw.strip()
    if not text:
        raise ValueError("Empty grid.")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"Grid {raw!r} must look like start:end:step.")
        start, end, step = (coerce_float(p, context=f"grid {raw!r}") for p in parts)
        if step <= 0:
            raise ValueError(f"Grid step must be positive in {raw!r}.")
        if end < start:
            raise ValueError(f"Grid end precedes start in {raw!r}.")
        count = int(math.floor((end - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    values = [coerce_float(p, context=f"grid {raw!r}") for p in text.split(",") if p.strip()]
    if not values:
        raise ValueError(f"Grid {raw!r} has no values.")
    return values


def format_number(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.{SIG_DIGITS}g}"


def resolve_workers(requested: int | None) -> int:
    """Worker count: the request (default cpu count), capped by PS_SOJOURN_THREADS if set."""
    workers = requested if requested is not None else (os.cpu_count() or 1)
    cap_raw = coerce_str(os.environ.get(THREADS_ENV_VAR))
    if cap_raw is not None:
        try:
            cap = int(cap_raw)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {cap_raw!r}.") from exc
        if cap >= 1:
            workers = min(workers, cap)
    return max(1, workers)


def parse_datetime(raw: object) -> datetime:
    if isinstance(raw, datetime):
        return raw
    if isinstance(raw, str):
        try:
            parsed: Any = dateutil.parser.isoparse(raw.strip())
            return cast(datetime, parsed)
        except ValueError as exc:
            raise ValueError(f"Unable to parse timestamp: {raw!r}") from exc
    raise ValueError(f"Unsupported timestamp value: {raw!r}")


def normalize_timestamp(raw: object) -> str:
    dt = parse_datetime(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=UTC)
    else:
        dt = dt.astimezone(UTC)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def utc_now() -> str:
    return normalize_timestamp(datetime.now(UTC))
