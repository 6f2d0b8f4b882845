import math

import pytest
from lib import DomainError, NoRootError, UnsupportedError
from lib.dist import ModelParams, erlang, exponential, uniform
from lib.inversion import scaled_denominator
from lib.roots import (
    critical_pair,
    erlang_critical_pair,
    erlang_decay_rate,
    erlang_Q_roots,
    erlang_saddle,
    omega,
    pole_tau,
    s_c,
    saddle,
    spectral_roots,
    spectral_v,
    v1_derivatives,
    v1_prime_implicit,
    xhat,
)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("lam", [0.3, 0.5, 0.8])
def test_critical_pair_matches_erlang_closed_form(k: int, lam: float) -> None:
    pair = critical_pair(ModelParams(lam, erlang(k, 1.0)))
    s0, tau0 = erlang_critical_pair(k, 1.0, lam)
    assert pair.s0 == pytest.approx(s0, rel=1e-10)
    assert pair.tau0 == pytest.approx(tau0, rel=1e-10)
    assert pair.b2 > 0.0


def test_mm1_critical_rate() -> None:
    pair = critical_pair(ModelParams(0.5, exponential(1.0)))
    assert pair.s0 == pytest.approx(-((1.0 - math.sqrt(0.5)) ** 2), rel=1e-10)


def test_saddle_matches_erlang_closed_form() -> None:
    params = ModelParams(0.5, erlang(2, 1.0))
    point = saddle(params, 3.0)
    s_star, tau_star = erlang_saddle(2, 1.0, 0.5, 3.0)
    assert point.s_star == pytest.approx(s_star, rel=1e-9)
    assert point.tau_star == pytest.approx(tau_star, rel=1e-9)
    with pytest.raises(DomainError):
        saddle(params, 1.0)


def test_pole_tau_is_kernel_root() -> None:
    params = ModelParams(0.5, erlang(2, 1.0))
    pair = critical_pair(params)
    tau = pole_tau(params, 0.2, pair)
    assert tau - 0.2 - 0.5 * (1.0 - (2.0 / (2.0 + tau)) ** 2) == pytest.approx(0.0, abs=1e-12)
    assert pole_tau(params, pair.s0, pair) == pair.tau0
    with pytest.raises(NoRootError):
        pole_tau(params, pair.s0 - 0.1, pair)


def test_decay_rate_is_zero_of_denominator() -> None:
    params = ModelParams(0.5, exponential(1.0))
    rate = s_c(params, 2.0)
    assert rate.s_c < 0.0
    residual = scaled_denominator(params.dist, 0.5, 0.5, rate.s_c, 2.0).scaled.real
    assert residual == pytest.approx(0.0, abs=1e-9)
    assert rate.J == pytest.approx(1.0 / rate.F_s)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("x", [1.0, 2.0, 8.0])
def test_erlang_decay_rate_matches_scan(k: int, x: float) -> None:
    params = ModelParams(0.5, erlang(k, 1.0))
    scanned = s_c(params, x)
    closed = erlang_decay_rate(k, 1.0, 0.5, x)
    assert closed.s_c < erlang_critical_pair(k, 1.0, 0.5)[0]
    assert closed.s_c == pytest.approx(scanned.s_c, rel=1e-10)
    assert closed.F_s == pytest.approx(scanned.F_s, rel=1e-8)
    with pytest.raises(DomainError):
        erlang_decay_rate(k, 1.0, 0.5, 0.0)


@pytest.mark.parametrize(
    ("k", "mu", "expected"),
    [
        (1, 1.0, []),
        (2, 1.0, [complex(-3.0, 0.0)]),
        (3, 1.0, [complex(-4.0, -math.sqrt(2.0)), complex(-4.0, math.sqrt(2.0))]),
    ],
)
def test_erlang_q_roots(k: int, mu: float, expected: list[complex]) -> None:
    found = erlang_Q_roots(k, mu)
    assert len(found) == len(expected)
    for got, want in zip(found, expected, strict=True):
        assert abs(got - want) < 1e-9


def test_spectral_roots_solve_their_equation() -> None:
    c, X = 2.0, 1.5
    for n in (1, 2, 10):
        v = spectral_v(c, X, n)
        assert (n - 1) * math.pi * c / X < v < n * math.pi * c / X
        assert X * v / c + 2.0 * math.atan(v) == pytest.approx(n * math.pi, rel=1e-13)
    roots = spectral_roots(erlang(1, 1.0), X, 5, with_d1=True)
    assert [root.n for root in roots] == [1, 2, 3, 4, 5]
    assert all(root.B1 < 0.0 and root.D1 is not None for root in roots)


def test_first_spectral_root_derivative() -> None:
    dist = erlang(2, 1.0)
    _, slope, _ = v1_derivatives(dist, 1.2)
    assert slope == pytest.approx(v1_prime_implicit(dist, 1.2), rel=1e-7)


def test_xhat_inverts_omega() -> None:
    dist = erlang(2, 1.0)
    for sigma in (0.5, 3.0, 40.0):
        assert omega(dist, xhat(dist, sigma)) == pytest.approx(sigma, rel=1e-10)
    with pytest.raises(DomainError):
        xhat(dist, 0.0)


def test_omega_needs_tail() -> None:
    with pytest.raises(UnsupportedError):
        omega(uniform(2.0), 1.0)


def test_spectral_roots_limiting_forms() -> None:
    c = 2.0
    large = 50.0
    expected_large = (c / large - 2.0 * c**2 / large**2 + 4.0 * c**3 / large**3) * math.pi
    assert spectral_v(c, large, 1) == pytest.approx(expected_large, rel=1e-3)

    small = 0.02
    expected_v1 = (
        math.sqrt(2.0 * c / small)
        - math.sqrt(2.0) / (12.0 * math.sqrt(c)) * math.sqrt(small)
        + 11.0 * math.sqrt(2.0) / (1440.0 * c**1.5) * small**1.5
    )
    assert spectral_v(c, small, 1) == pytest.approx(expected_v1, rel=1e-3)
    for n in (2, 3):
        m = n - 1
        head = m * math.pi * c / small + 2.0 / (m * math.pi)
        expected = head - 4.0 * small / ((m * math.pi) ** 3 * c)
        assert spectral_v(c, small, n) == pytest.approx(expected, rel=1e-3)
