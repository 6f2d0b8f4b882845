import math

import numpy as np
import pytest
from lib import DomainError, UnsupportedError
from lib.dist import (
    Kind,
    ModelParams,
    TailSpec,
    analyticity_abscissa,
    density,
    deterministic,
    edge_params,
    erlang,
    expect,
    exponential,
    general,
    lst,
    lst_deriv,
    moment,
    moments,
    parse_dist_spec,
    sample,
    small_y_params,
    tail_spec,
    uniform,
)


def test_exponential_lst_and_moments() -> None:
    dist = exponential(2.0)
    assert lst(dist, 1.0) == pytest.approx(2.0 / 3.0, rel=1e-14)
    assert lst(dist, 1.0 + 1.0j) == pytest.approx(2.0 / (3.0 + 1.0j), rel=1e-14)
    assert moments(dist, 3) == pytest.approx([1.0, 0.5, 0.5, 0.75], rel=1e-12)


def test_erlang_derivatives_match_moments_at_zero() -> None:
    dist = erlang(3, 1.5)
    for order in range(1, 6):
        expected = (-1) ** order * moment(dist, order)
        assert lst_deriv(dist, 0.0, order).real == pytest.approx(expected, rel=1e-12)


def test_erlang_k1_is_exponential_kind() -> None:
    assert erlang(1, 1.0).kind == Kind.EXPONENTIAL
    assert erlang(2, 1.0).kind == Kind.ERLANG
    assert analyticity_abscissa(erlang(2, 1.0)) == 2.0


def test_lst_left_of_abscissa_is_domain_error() -> None:
    with pytest.raises(DomainError, match="analyticity abscissa"):
        lst(exponential(1.0), -1.5)


def test_deterministic_closed_forms() -> None:
    dist = deterministic(2.0)
    assert lst(dist, 1.0).real == pytest.approx(math.exp(-0.5), rel=1e-14)
    assert lst_deriv(dist, 0.0, 2).real == pytest.approx(0.25, rel=1e-14)
    assert moment(dist, 3) == pytest.approx(0.125)
    assert expect(dist, lambda y: y * y) == pytest.approx(0.25)
    with pytest.raises(UnsupportedError):
        density(dist, 0.5)


def test_uniform_lst_small_and_large_argument_agree() -> None:
    dist = uniform(2.0)
    tau = 1e-3 / 2.0
    series = lst(dist, tau).real
    closed = (1.0 - math.exp(-2.0 * tau)) / (2.0 * tau)
    assert series == pytest.approx(closed, rel=1e-12)
    assert lst(dist, 1.0).real == pytest.approx((1.0 - math.exp(-2.0)) / 2.0, rel=1e-14)
    assert edge_params(dist) == (2.0, 0.5, 1.0)
    assert dist.mu == pytest.approx(1.0)


def test_general_density_lst_by_quadrature() -> None:
    dist = general(lambda y: math.exp(-y), abscissa=1.0, small_alpha=1.0, small_nu=1.0)
    assert dist.kind == Kind.GENERAL
    assert dist.mu == pytest.approx(1.0, rel=1e-8)
    assert lst(dist, 0.5).real == pytest.approx(1.0 / 1.5, rel=1e-8)
    assert lst_deriv(dist, 0.5, 2).real == pytest.approx(2.0 / 1.5**3, rel=1e-7)
    assert moment(dist, 2) == pytest.approx(2.0, rel=1e-8)


def test_general_rejects_unnormalised_density() -> None:
    with pytest.raises(ValueError, match="integrates to"):
        general(lambda y: 2.0 * math.exp(-y), abscissa=1.0)


def test_small_y_and_tail_metadata() -> None:
    alpha, nu = small_y_params(erlang(2, 1.0))
    assert (alpha, nu) == (4.0, 2.0)
    tail = tail_spec(erlang(2, 1.0))
    assert (tail.M, tail.N, tail.q, tail.r) == (4.0, 2.0, 1.0, 1.0)
    with pytest.raises(UnsupportedError):
        tail_spec(uniform(1.0))


def test_tail_spec_validates_exponent() -> None:
    with pytest.raises(ValueError, match="Tail r"):
        TailSpec(M=1.0, N=1.0, q=0.0, r=3.0)


def test_model_params_rejects_saturated_load() -> None:
    with pytest.raises(DomainError, match="rho"):
        ModelParams(1.0, exponential(1.0))
    params = ModelParams(0.25, erlang(2, 0.5))
    assert params.rho == pytest.approx(0.5)
    assert params.eps == pytest.approx(0.5)


def test_parse_dist_spec_kinds() -> None:
    assert parse_dist_spec("exp:mu=1").kind == Kind.EXPONENTIAL
    assert parse_dist_spec("erlang:k=3,mu=2").k == 3
    assert parse_dist_spec("det:mu=0.5").kind == Kind.DETERMINISTIC
    assert parse_dist_spec("uniform:a=2").support == 2.0
    with_tail = parse_dist_spec("uniform:a=2;tail:M=1,N=1,q=0,r=1.5")
    assert with_tail.tail == TailSpec(1.0, 1.0, 0.0, 1.5)


@pytest.mark.parametrize(
    ("text", "message"),
    [
        ("erlang:k=0,mu=1", "'k'"),
        ("gamma:mu=1", "Unknown distribution kind"),
        ("exp:lam=1", "Unexpected field"),
        ("exp:mu=abc", "field 'mu'"),
        ("erlang:mu=1", "Missing field 'k'"),
        ("exp:mu=1;det:mu=1", "Second base kind"),
    ],
)
def test_parse_dist_spec_errors_name_the_field(text: str, message: str) -> None:
    with pytest.raises(ValueError, match=message):
        parse_dist_spec(text)


def test_sampling_matches_mean() -> None:
    rng = np.random.default_rng(7)
    draws = sample(erlang(2, 1.0), rng, 200_000)
    assert float(np.mean(draws)) == pytest.approx(1.0, abs=0.01)
    assert np.all(sample(deterministic(4.0), rng, 5) == 0.25)
