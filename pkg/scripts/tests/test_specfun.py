import math

import numpy as np
import pytest
from lib import PCFOverflowError, PoleError
from lib.specfun import (
    erfc,
    gamma_fn,
    hyper_0Fk,
    pcf_D,
    pcf_D_quad,
    pcf_D_scaled_table,
)
from scipy import special


def test_gamma_pole_is_reported() -> None:
    assert gamma_fn(5.0) == pytest.approx(24.0)
    with pytest.raises(PoleError):
        gamma_fn(-2.0)


def test_hyper_0f1_matches_scipy() -> None:
    for b, z in [(0.5, 2.0), (1.5, -3.0), (2.0, 10.0)]:
        assert hyper_0Fk(1, [b], z) == pytest.approx(float(special.hyp0f1(b, z)), rel=1e-13)


def test_hyper_0f1_cosh_identity() -> None:
    z = 1.7
    assert hyper_0Fk(1, [0.5], z * z / 4.0) == pytest.approx(math.cosh(z), rel=1e-14)


def test_hyper_rejects_bad_parameters() -> None:
    with pytest.raises(ValueError, match="lower parameters"):
        hyper_0Fk(2, [1.0], 1.0)
    with pytest.raises(PoleError):
        hyper_0Fk(1, [-1.0], 1.0)


def test_pcf_order_minus_one_closed_form() -> None:
    z = 0.8
    expected = math.exp(z * z / 4.0) * math.sqrt(math.pi / 2.0) * erfc(z / math.sqrt(2.0))
    assert pcf_D(-1, z) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize(("order", "z"), [(-2, 1.0), (-5, -2.0), (-12, 3.5), (-30, 0.5)])
def test_pcf_matches_scipy_and_quadrature(order: int, z: float) -> None:
    value = pcf_D(order, z)
    assert value == pytest.approx(float(special.pbdv(order, z)[0]), rel=1e-8)
    assert value == pytest.approx(pcf_D_quad(order, z), rel=1e-9)


def test_pcf_scaled_table_is_consistent() -> None:
    table = pcf_D_scaled_table(10, 2.0)
    assert table[0] == 1.0
    for n in (3, 7, 10):
        assert table[n] * math.exp(-1.0) == pytest.approx(pcf_D(-n, 2.0), rel=1e-13)


def test_pcf_order_outside_range() -> None:
    with pytest.raises(ValueError, match="integer in"):
        pcf_D(1, 0.0)
    with pytest.raises(ValueError, match="integer in"):
        pcf_D(-61, 0.0)


def test_pcf_overflow_on_large_negative_argument() -> None:
    with pytest.raises(PCFOverflowError):
        pcf_D(-3, -60.0)


def test_pcf_satisfies_three_term_recurrence() -> None:
    rng = np.random.default_rng(7)
    for z in rng.uniform(-3.0, 3.0, size=50):
        for nu in range(-1, -11, -1):
            up, mid, down = pcf_D(nu + 1, z), pcf_D(nu, z), pcf_D(nu - 1, z)
            scale = max(abs(up), abs(z * mid), abs(nu * down))
            assert abs(up - z * mid + nu * down) < 1e-8 * scale
