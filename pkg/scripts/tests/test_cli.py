import importlib.util
import json
import sys
from pathlib import Path
from types import ModuleType

import pytest
from lib import THREADS_ENV_VAR
from lib.tables import read_table


def _load_module(name: str) -> ModuleType:
    script_path = Path(__file__).resolve().parents[1] / f"{name}.py"
    spec = importlib.util.spec_from_file_location(name.replace("-", "_"), script_path)
    if spec is None or spec.loader is None:
        raise RuntimeError(f"Unable to load module {name}")
    module = importlib.util.module_from_spec(spec)
    sys.modules[spec.name] = module
    spec.loader.exec_module(module)
    return module


@pytest.fixture(autouse=True)
def _single_worker(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv(THREADS_ENV_VAR, "1")


def test_conditional_exact_csv(capsys: pytest.CaptureFixture[str]) -> None:
    cli = _load_module("ps-sojourn")
    code = cli.main(
        ["conditional", "--dist", "exp:mu=1", "--lambda", "0.5", "--x", "1", "--t", "0.5,2,3"]
    )
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# meta: ")
    assert lines[1] == "t,x,method,regime,value,stderr,atom"
    assert lines[2].startswith("1,1,exact,atom,")
    assert lines[3].startswith("0.5,1,exact,below-x,0,")
    assert len(lines) == 6


@pytest.mark.parametrize(
    "argv",
    [
        ["conditional", "--dist", "erlang:k=0,mu=1", "--lambda", "0.5", "--x", "1", "--t", "2"],
        ["conditional", "--dist", "exp:mu=1", "--lambda", "0.5", "--x", "1", "--t", ""],
        ["unconditional", "--dist", "exp:mu=1", "--lambda", "1.5", "--t", "2"],
        ["conditional", "--dist", "exp:mu=1", "--lambda", "0.5", "--t", "2"],
    ],
)
def test_usage_errors_exit_two(argv: list[str], capsys: pytest.CaptureFixture[str]) -> None:
    cli = _load_module("ps-sojourn")
    assert cli.main(argv) == 2
    assert capsys.readouterr().err


def test_validate_appendix(capsys: pytest.CaptureFixture[str]) -> None:
    cli = _load_module("ps-sojourn")
    assert cli.main(["validate", "--suite", "appendix"]) == 0
    out = capsys.readouterr().out
    assert "5/5 checks passed" in out
    assert "[fail]" not in out


def test_validate_missing_config(tmp_path: Path) -> None:
    cli = _load_module("ps-sojourn")
    assert cli.main(["validate", "--config", str(tmp_path / "none.yaml")]) == 2


def test_unconditional_auto_picks_finite_support(tmp_path: Path) -> None:
    cli = _load_module("ps-sojourn")
    target = tmp_path / "uncond.json"
    argv = ["unconditional", "--dist", "uniform:a=2", "--lambda", "0.95", "--t", "800,2000"]
    assert cli.main([*argv, "--format", "json", "--output", str(target)]) == 0
    payload = json.loads(target.read_text(encoding="utf-8"))
    regimes = [row["regime"] for row in payload["rows"]]
    assert regimes == ["T25-C2", "T25-C2-large-T"]
    assert payload["meta"]["command"] == "unconditional"


def test_simulate_records_seed_and_replays(tmp_path: Path) -> None:
    cli = _load_module("ps-sojourn")
    first = tmp_path / "sim.csv"
    argv = [
        "simulate",
        "--dist",
        "exp:mu=1",
        "--lambda",
        "0.5",
        "--x",
        "1",
        "--tagged",
        "300",
        "--warmup",
        "100",
        "--bin-width",
        "0.5",
    ]
    assert cli.main([*argv, "--output", str(first)]) == 0
    manifest, rows = read_table(first)
    assert len(manifest.seeds) == 1
    assert "--seed" in manifest.argv
    assert rows[0].atom
    assert "simulation" in manifest.params

    second = tmp_path / "replay.csv"
    assert cli.main(["replay", "--input", str(first), "--output", str(second)]) == 0
    _, replayed = read_table(second)
    assert replayed == rows


def test_version_flag(capsys: pytest.CaptureFixture[str]) -> None:
    cli = _load_module("ps-sojourn")
    assert cli.main(["--version"]) == 0
    assert "0.1.0" in capsys.readouterr().out
