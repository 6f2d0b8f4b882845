import math
from pathlib import Path

import pytest
from lib.inversion import DensityValue
from lib.tables import (
    META_PREFIX,
    ResultRow,
    RunManifest,
    atom_row,
    ordered_map,
    read_table,
    render,
    row_from_density,
    write_table,
)


def _rows() -> list[ResultRow]:
    return [
        atom_row(1.0, 1.0, "exact", 0.5 * math.exp(-0.5)),
        ResultRow(t=2.0, x=1.0, method="exact", regime="exact", value=0.1 + 0.2),
        ResultRow(t=3.0, x=None, method="tail", regime="T23-r1", value=1e-300, stderr=2.5e-7),
    ]


def _manifest() -> RunManifest:
    return RunManifest(
        command="conditional",
        params={"lam": 0.5, "dist": "exp:mu=1"},
        argv=["conditional", "--dist", "exp:mu=1"],
        seeds=[42],
        timestamp="2026-01-02T03:04:05Z",
    )


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_table_round_trip(tmp_path: Path, fmt: str) -> None:
    path = tmp_path / "nested" / f"table.{fmt}"
    write_table(path, _rows(), _manifest(), fmt)
    manifest, rows = read_table(path)
    assert manifest == _manifest()
    assert rows == _rows()


def test_csv_layout() -> None:
    text = render(_rows(), _manifest(), "csv")
    lines = text.splitlines()
    assert lines[0].startswith(META_PREFIX)
    assert lines[1] == "t,x,method,regime,value,stderr,atom"
    assert lines[2].endswith(",true")
    assert lines[3] == "2,1,exact,exact,0.30000000000000004,,false"
    assert lines[4].startswith("3,,tail,T23-r1,")


def test_render_rejects_unknown_format() -> None:
    with pytest.raises(ValueError, match="Unknown output format"):
        render(_rows(), _manifest(), "xml")


def test_manifest_requires_command() -> None:
    with pytest.raises(ValueError, match="missing 'command'"):
        RunManifest.from_dict({"argv": []})
    with pytest.raises(ValueError, match="Expected list for manifest argv"):
        RunManifest.from_dict({"command": "simulate", "argv": "simulate"})


def test_row_from_density_maps_fields() -> None:
    value = DensityValue(t=4.0, x=None, value=0.25, regime="T24-C1", converged=False)
    row = row_from_density(value, "heavy-T")
    assert row.stderr is None
    assert row.regime == "T24-C1"
    assert not row.converged
    assert row_from_density(value, "heavy-T", stderr=0.01).stderr == 0.01


def test_ordered_map_keeps_input_order() -> None:
    items = [float(n * n) for n in range(1, 9)]
    assert ordered_map(math.sqrt, items, workers=3) == [float(n) for n in range(1, 9)]
    assert ordered_map(math.sqrt, items, workers=1) == [float(n) for n in range(1, 9)]
