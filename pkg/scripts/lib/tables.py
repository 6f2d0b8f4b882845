from __future__ import annotations

import csv
import io
import json
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from lib import __version__
from lib.inversion import DensityValue
from lib.utils import (
    coerce_str,
    ensure_list,
    ensure_mapping,
    format_number,
    normalize_timestamp,
    utc_now,
)

COLUMNS = ("t", "x", "method", "regime", "value", "stderr", "atom")
META_PREFIX = "# meta: "


def _new_seed_list() -> list[int]:
    return []


@dataclass
class ResultRow:
    t: float
    x: float | None
    method: str
    regime: str
    value: float
    stderr: float | None = None
    atom: bool = False
    converged: bool = True


@dataclass
class RunManifest:
    command: str
    params: dict[str, Any]
    argv: list[str]
    version: str = __version__
    seeds: list[int] = field(default_factory=_new_seed_list)
    timestamp: str = field(default_factory=utc_now)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: object) -> RunManifest:
        data = ensure_mapping(raw, context="manifest")
        command = coerce_str(data.get("command"))
        if command is None:
            raise ValueError("Manifest is missing 'command'.")
        argv = [str(item) for item in ensure_list(data.get("argv"), context="manifest argv")]
        raw_seeds = ensure_list(data.get("seeds", []), context="manifest seeds")
        seeds = [int(item) for item in raw_seeds]
        return cls(
            command=command,
            params=ensure_mapping(data.get("params", {}), context="manifest params"),
            argv=argv,
            version=coerce_str(data.get("version")) or __version__,
            seeds=seeds,
            timestamp=normalize_timestamp(data.get("timestamp", utc_now())),
        )


def row_from_density(
    value: DensityValue, method: str, *, stderr: float | None = None
) -> ResultRow:
    return ResultRow(
        t=value.t,
        x=value.x,
        method=method,
        regime=value.regime,
        value=value.value,
        stderr=stderr if stderr is not None else (value.error or None),
        converged=value.converged,
    )


def atom_row(
    t: float, x: float, method: str, mass: float, stderr: float | None = None
) -> ResultRow:
    return ResultRow(t=t, x=x, method=method, regime="atom", value=mass, stderr=stderr, atom=True)


def _csv_cells(row: ResultRow) -> list[str]:
    return [
        format_number(row.t),
        format_number(row.x),
        row.method,
        row.regime,
        format_number(row.value),
        format_number(row.stderr),
        "true" if row.atom else "false",
    ]


def render_csv(rows: Sequence[ResultRow], manifest: RunManifest) -> str:
    buffer = io.StringIO()
    buffer.write(META_PREFIX + json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow(_csv_cells(row))
    return buffer.getvalue()


def render_json(rows: Sequence[ResultRow], manifest: RunManifest) -> str:
    payload = {
        "meta": manifest.to_dict(),
        "rows": [{key: asdict(row)[key] for key in COLUMNS} for row in rows],
    }
    return json.dumps(payload, indent=2, sort_keys=False)


def render(rows: Sequence[ResultRow], manifest: RunManifest, fmt: str) -> str:
    if fmt == "csv":
        return render_csv(rows, manifest)
    if fmt == "json":
        return render_json(rows, manifest)
    raise ValueError(f"Unknown output format {fmt!r}.")


def write_table(path: Path, rows: Sequence[ResultRow], manifest: RunManifest, fmt: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(rows, manifest, fmt), encoding="utf-8")


def _optional_float(text: str) -> float | None:
    return float(text) if text else None


def read_table(path: Path) -> tuple[RunManifest, list[ResultRow]]:
    """Parse a CSV or JSON table written by write_table."""
    text = path.read_text(encoding="utf-8")
    if text.startswith(META_PREFIX):
        header, _, body = text.partition("\n")
        manifest = RunManifest.from_dict(json.loads(header[len(META_PREFIX) :]))
        reader = csv.DictReader(io.StringIO(body))
        rows = [
            ResultRow(
                t=float(rec["t"]),
                x=_optional_float(rec["x"]),
                method=rec["method"],
                regime=rec["regime"],
                value=float(rec["value"]),
                stderr=_optional_float(rec["stderr"]),
                atom=rec["atom"] == "true",
            )
            for rec in reader
        ]
        return manifest, rows
    payload = ensure_mapping(json.loads(text), context=str(path))
    manifest = RunManifest.from_dict(payload.get("meta"))
    rows = []
    for raw in ensure_list(payload.get("rows"), context=f"{path} rows"):
        rec = ensure_mapping(raw, context=f"{path} row")
        rows.append(ResultRow(**{key: rec.get(key) for key in COLUMNS}))
    return manifest, rows


def ordered_map[T, R](fn: Callable[[T], R], items: Iterable[T], workers: int) -> list[R]:
    """Map over items in a process pool; results keep input order whatever the completion order."""
    tasks = list(items)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(item) for item in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
