import math
from typing import Any

import numpy as np
import pytest
from lib import ContourError, DomainError, UnsupportedError, inversion
from lib.dist import (
    ModelParams,
    ServiceDistribution,
    deterministic,
    erlang,
    exponential,
    uniform,
)
from lib.inversion import (
    ContourSpec,
    F_denominator,
    atom_mass,
    denominator_h,
    deterministic_lst_closed_form,
    erlang_q_star,
    pt_exact,
    ptx_exact,
    q_star,
    sojourn_lst,
    talbot,
    verify_deterministic_identity,
)
from lib.roots import critical_pair
from scipy import integrate


def test_talbot_inverts_shifted_pole() -> None:
    assert talbot(lambda s: 1.0 / (s + 1.0), 2.0) == pytest.approx(math.exp(-2.0), rel=1e-9)
    with pytest.raises(DomainError):
        talbot(lambda s: 1.0 / s, 0.0)


def test_contour_spec_validation() -> None:
    with pytest.raises(ValueError, match="even and >= 64"):
        ContourSpec(nodes=63)
    with pytest.raises(ValueError, match="deformation"):
        ContourSpec(deformation="spiral")
    with pytest.raises(ContourError):
        ContourSpec(shift=-0.1)


def test_sojourn_lst_gives_processor_sharing_mean() -> None:
    params = ModelParams(0.5, erlang(2, 1.0))
    x = 1.5
    assert sojourn_lst(params, 0.0, x).real == pytest.approx(1.0)
    h = 1e-4
    mean = (1.0 - sojourn_lst(params, h, x).real) / h
    assert mean == pytest.approx(x / (1.0 - params.rho), rel=1e-3)


def test_deterministic_lst_matches_closed_form() -> None:
    params = ModelParams(0.5, deterministic(1.0))
    for s in (0.3, 1.0 + 0.5j):
        numeric = sojourn_lst(params, s, 1.0)
        closed = deterministic_lst_closed_form(0.5, 1.0, s)
        assert abs(numeric - closed) <= 1e-7 * abs(closed)


@pytest.mark.parametrize("s", [0.3 + 0.0j, 0.0j, 1e-6 + 0.0j, -0.1 + 0.8j, 2.0 + 3.0j])
def test_deterministic_identity_residual(s: complex) -> None:
    assert verify_deterministic_identity(0.5, 1.0, s) < 1e-8
    with pytest.raises(DomainError):
        verify_deterministic_identity(1.0, 1.0, s)


def test_deterministic_identity_detects_wrong_inner_integral(
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    exact = inversion.denominator_h

    def skewed(*args: Any, **kwargs: Any) -> complex:
        return exact(*args, **kwargs) * (1.0 + 1e-6)

    monkeypatch.setattr(inversion, "denominator_h", skewed)
    assert verify_deterministic_identity(0.5, 1.0, 0.0j) > 1e-7


def test_erlang_q_star_matches_moment_form() -> None:
    for k in (1, 2, 3):
        dist = erlang(k, 1.3)
        for x in (0.5, 2.0):
            assert erlang_q_star(k, 1.3, x) == pytest.approx(q_star(dist, x), rel=1e-10)


def test_ptx_exact_rejects_bad_arguments() -> None:
    params = ModelParams(0.5, exponential(1.0))
    with pytest.raises(DomainError, match="t > x > 0"):
        ptx_exact(params, 1.0, 1.0)
    with pytest.raises(UnsupportedError):
        ptx_exact(params, 2.0, 1.0, contour=ContourSpec(deformation="left-indented"))


def test_ptx_exact_residue_and_quadrature_agree() -> None:
    params = ModelParams(0.5, erlang(2, 1.0))
    residue = ptx_exact(params, 3.0, 1.0, method="residue")
    quadrature = ptx_exact(params, 3.0, 1.0, method="quadrature")
    assert residue.converged and quadrature.converged
    assert residue.value > 0.0
    assert residue.value == pytest.approx(quadrature.value, rel=1e-5)


@pytest.mark.parametrize(
    ("dist", "lam", "x"),
    [
        (exponential(1.0), 0.2, 1.0),
        (exponential(1.0), 0.5, 2.0),
        (erlang(2, 1.0), 0.5, 1.0),
        (erlang(3, 1.0), 0.3, 0.5),
        (deterministic(1.0), 0.5, 1.0),
        (deterministic(1.0), 0.3, 0.6),
    ],
)
def test_conditional_density_carries_full_mass(
    dist: ServiceDistribution, lam: float, x: float
) -> None:
    params = ModelParams(lam, dist)
    atom = atom_mass(params, x)
    assert atom == pytest.approx((1.0 - lam) * math.exp(-lam * x))
    upper = x + 25.0 / abs(critical_pair(params).s0)

    def integrand(t: float) -> float:
        return ptx_exact(params, t, x).value

    head, _ = integrate.quad(integrand, x, x + 5.0, limit=200)
    tail, _ = integrate.quad(integrand, x + 5.0, upper, limit=200)
    assert head + tail + atom == pytest.approx(1.0, abs=1e-4)


def test_outer_contour_shift_leaves_density_unchanged() -> None:
    params = ModelParams(0.5, exponential(1.0))
    t, x = 3.0, 1.0
    base = ptx_exact(params, t, x).value
    for factor in (0.8, 1.25):
        contour = ContourSpec(shift=factor * 22.0 / (2.0 * (t - x)))
        assert ptx_exact(params, t, x, contour=contour).value == pytest.approx(base, rel=1e-7)


def test_inner_contour_shift_leaves_denominator_unchanged() -> None:
    params = ModelParams(0.5, uniform(2.0))
    s = 0.5 + 1.0j
    near, far = (
        F_denominator(params, s, 1.5, method="quadrature", tau_shift=c) for c in (2.0, 3.0)
    )
    assert abs(near - far) < 1e-7 * abs(near)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_inner_integral_residue_matches_quadrature(k: int) -> None:
    dist = erlang(k, 1.0)
    s = 0.4 + 0.7j
    for x in (0.5, 3.0):
        residue = denominator_h(dist, 0.5, s, x, method="residue")
        quadrature = denominator_h(dist, 0.5, s, x, method="quadrature")
        assert abs(residue - quadrature) < 1e-8 * abs(residue)


@pytest.mark.parametrize(
    "dist", [exponential(1.0), erlang(2, 1.0), deterministic(1.0), uniform(2.0)]
)
def test_denominator_at_zero_is_idle_probability(dist: ServiceDistribution) -> None:
    params = ModelParams(0.4, dist)
    for x in (0.5, 2.0):
        assert F_denominator(params, 0.0, x) == pytest.approx(0.6 + 0.0j, rel=1e-12)
        near = F_denominator(params, 1e-6, x)
        assert abs(near - (0.6 + 1e-6 * x)) < 1e-8


def test_pt_exact_deterministic_below_service_time() -> None:
    params = ModelParams(0.5, deterministic(1.0))
    result = pt_exact(params, 0.5)
    assert result.value == 0.0
    assert result.atom == pytest.approx(0.5 * math.exp(-0.5))
    above = pt_exact(params, 2.0)
    assert above.x is None
    assert np.isfinite(above.value) and above.value > 0.0
