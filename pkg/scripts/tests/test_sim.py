import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
import pytest
from lib.dist import ModelParams, deterministic, erlang, exponential
from lib.inversion import ptx_exact
from lib.sim import (
    ProcessorSharingServer,
    SimConfig,
    SimResult,
    empirical_density,
    export_samples,
    simulate,
)
from scipy import integrate


@pytest.fixture(scope="module")
def mm1_result() -> SimResult:
    params = ModelParams(0.5, exponential(1.0))
    config = SimConfig(params, seed=11, tagged=20_000, warmup=2_000, x=1.0)
    return simulate(config)


def test_server_shares_capacity_equally() -> None:
    server = ProcessorSharingServer()
    server.arrive(1, 1.0)
    server.arrive(2, 2.0)
    assert server.time_to_next_departure() == pytest.approx(2.0)
    server.advance(2.0)
    assert server.depart() == 1
    assert server.time_to_next_departure() == pytest.approx(1.0)
    clone = server.copy()
    clone.advance(1.0)
    assert server.remaining == [pytest.approx(1.0)]
    with pytest.raises(ValueError, match="non-negative"):
        server.arrive(3, -1.0)
    empty = ProcessorSharingServer()
    assert empty.time_to_next_departure() == math.inf
    with pytest.raises(ValueError, match="No customer"):
        empty.depart()


@pytest.mark.parametrize(
    ("kwargs", "message"),
    [
        ({"tagged": 0}, "Tagged customer count"),
        ({"tagged": 10, "warmup": -1}, "Warmup"),
        ({"tagged": 10, "replications": 0}, "Replications"),
        ({"tagged": 10, "x": 0.0}, "requirement must be positive"),
    ],
)
def test_config_validation(kwargs: dict[str, Any], message: str) -> None:
    with pytest.raises(ValueError, match=message):
        SimConfig(ModelParams(0.5, exponential(1.0)), seed=1, **kwargs)


def test_same_seed_same_samples() -> None:
    config = SimConfig(ModelParams(0.5, erlang(2, 1.0)), seed=99, tagged=200, warmup=100)
    first = simulate(config)
    second = simulate(config)
    assert np.array_equal(first.sojourns, second.sojourns)
    assert np.array_equal(first.requirements, second.requirements)


def test_parallel_run_matches_serial() -> None:
    config = SimConfig(ModelParams(0.5, exponential(1.0)), seed=5, tagged=120, warmup=50)
    serial = simulate(config, workers=1)
    parallel = simulate(config, workers=2)
    assert np.array_equal(serial.sojourns, parallel.sojourns)


def test_atom_fraction_matches_theory(mm1_result: SimResult) -> None:
    expected = 0.5 * math.exp(-0.5)
    assert abs(mm1_result.atom_fraction - expected) < 3.0 * mm1_result.atom_stderr()
    atoms = mm1_result.sojourns[mm1_result.alone]
    assert np.allclose(atoms, 1.0)


def test_mean_sojourn_is_linear_in_size(mm1_result: SimResult) -> None:
    mean, stderr = mm1_result.mean_sojourn()
    assert abs(mean - 2.0) < 3.0 * stderr
    assert np.all(mm1_result.sojourns >= 1.0 - 1e-9)


def test_time_average_population(mm1_result: SimResult) -> None:
    mean, _ = mm1_result.mean_in_system()
    assert mean == pytest.approx(1.0, abs=0.1)
    assert len(mm1_result.in_system_means) == 8


def test_light_load_is_all_atom() -> None:
    config = SimConfig(ModelParams(1e-6, deterministic(1.0)), seed=3, tagged=50, warmup=0, x=2.0)
    result = simulate(config)
    assert result.atom_fraction == 1.0
    assert np.allclose(result.sojourns, 2.0)


def test_histogram_mass_and_atom(mm1_result: SimResult) -> None:
    top = float(mm1_result.sojourns.max()) + 1.0
    bins = empirical_density(mm1_result, 0.25, domain=(1.0, top))
    mass = sum(b.density for b in bins) * 0.25
    assert mass + mm1_result.atom_fraction == pytest.approx(1.0)
    assert all(b.stderr >= 0.0 for b in bins)


@pytest.mark.parametrize("t", [2.0, 3.0, 5.0])
def test_histogram_matches_exact_density(mm1_result: SimResult, t: float) -> None:
    width = 0.2
    (bin_,) = empirical_density(mm1_result, width, domain=(t - 0.5 * width, t + 0.5 * width))
    params = ModelParams(0.5, exponential(1.0))
    mass, _ = integrate.quad(
        lambda u: ptx_exact(params, u, 1.0).value, t - 0.5 * width, t + 0.5 * width
    )
    assert abs(bin_.density - mass / width) < 3.0 * bin_.stderr


def test_histogram_reports_sparse_bins(
    mm1_result: SimResult, caplog: pytest.LogCaptureFixture
) -> None:
    with caplog.at_level(logging.WARNING):
        empirical_density(mm1_result, 0.5, domain=(1.0, 80.0))
    assert "fewer than 20 samples" in caplog.text


def test_histogram_needs_enough_samples() -> None:
    config = SimConfig(ModelParams(0.5, exponential(1.0)), seed=1, tagged=20, warmup=10)
    with pytest.raises(ValueError, match="at least 10000 samples"):
        empirical_density(simulate(config), 0.1)


def test_export_samples(tmp_path: Path) -> None:
    config = SimConfig(ModelParams(0.5, exponential(1.0)), seed=2, tagged=30, warmup=10)
    result = simulate(config)
    target = tmp_path / "out" / "samples.txt"
    export_samples(result, target)
    lines = target.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 30
    assert float(lines[0]) == result.sojourns[0]
