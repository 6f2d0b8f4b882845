from pathlib import Path

import pytest
from lib.suites import DEFAULT_SUITES_PATH, CheckResult, load_suites, run_suite


def test_default_suite_file_loads() -> None:
    suites = load_suites(DEFAULT_SUITES_PATH)
    assert set(suites) == {"identities", "erlang", "matching", "appendix"}


def test_identities_suite_passes() -> None:
    results = run_suite("identities", load_suites())
    assert results
    failed = [check.name for check in results if not check.passed]
    assert failed == []


def test_matching_suite_passes() -> None:
    results = run_suite("matching", load_suites())
    assert len(results) >= 9 + 5
    assert all(check.passed for check in results)


@pytest.mark.parametrize("name", ["erlang", "appendix"])
def test_closed_form_suites_pass(name: str) -> None:
    results = run_suite(name, load_suites())
    assert results
    failed = [check.name for check in results if not check.passed]
    assert failed == []


def test_unknown_suite_name() -> None:
    with pytest.raises(ValueError, match="Unknown suite"):
        run_suite("speed", load_suites())


def test_load_suites_errors(tmp_path: Path) -> None:
    with pytest.raises(FileNotFoundError):
        load_suites(tmp_path / "missing.yaml")
    extra = tmp_path / "suites.yaml"
    extra.write_text("identities: {}\nbenchmarks: {}\n", encoding="utf-8")
    with pytest.raises(ValueError, match="benchmarks"):
        load_suites(extra)


def test_check_result_rejects_non_finite_residual() -> None:
    assert CheckResult("appendix", "p", 0.0, 1e-8).passed
    assert not CheckResult("appendix", "p", float("nan"), 1e-8).passed
    assert not CheckResult("appendix", "p", 1e-7, 1e-8).passed
