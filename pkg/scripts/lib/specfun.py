"""Special functions used by the closed-form expansions."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np
from scipy import integrate, special

from lib import ConvergenceError, PCFOverflowError, PoleError

logger = logging.getLogger(__name__)

SERIES_RTOL = 1e-15
SERIES_MAX_TERMS = 1_000_000
PCF_MIN_ORDER = -60
PCF_LOSS_LIMIT = 1e-6
_EXP_LIMIT = 700.0


def gamma_fn(x: float) -> float:
    if x <= 0 and float(x).is_integer():
        raise PoleError(f"Gamma has a pole at {x}.")
    return float(special.gamma(x))


def erfc(z: float) -> float:
    return float(special.erfc(z))


def hyper_0Fk(k: int, lower: Sequence[float], z: float) -> float:
    """0F_k([]; lower; z) by direct summation of its power series."""
    if k < 1 or len(lower) != k:
        raise ValueError(f"Expected {k} lower parameters, got {len(lower)}.")
    for b in lower:
        if b <= 0 and float(b).is_integer():
            raise PoleError(f"Lower parameter {b} is a nonpositive integer.")
    total = 1.0
    term = 1.0
    for m in range(SERIES_MAX_TERMS):
        denom = float(m + 1)
        for b in lower:
            denom *= b + m
        next_term = term * z / denom
        total += next_term
        if next_term == 0.0 or (
            abs(next_term) < SERIES_RTOL * abs(total) and abs(next_term) <= abs(term)
        ):
            return total
        term = next_term
    raise ConvergenceError(f"0F{k} series did not converge in {SERIES_MAX_TERMS} terms (z={z}).")


def _check_order(order: int) -> int:
    if order > 0 or order < PCF_MIN_ORDER or int(order) != order:
        raise ValueError(f"Parabolic cylinder order must be an integer in [-60, 0], got {order}.")
    return -int(order)


def pcf_D_quad_scaled(n: int, z: float) -> float:
    """e^{z^2/4} D_{-n}(z) from its integral representation (n >= 1)."""
    if n == 0:
        return 1.0

    def integrand(t: float) -> float:
        return math.exp((n - 1) * math.log(t) - z * t - 0.5 * t * t) if t > 0 else 0.0

    peak = max(1.0, 0.5 * (-z + math.sqrt(z * z + 4.0 * (n - 1))))
    head, _ = integrate.quad(integrand, 0.0, peak, epsabs=0.0, epsrel=1e-12, limit=200)
    tail, _ = integrate.quad(integrand, peak, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return (head + tail) / math.gamma(n)


def pcf_D_scaled_table(n_max: int, z: float) -> np.ndarray:
    """Scaled values e^{z^2/4} D_{-n}(z) for n = 0..n_max.

    The descending recurrence D_{-n-1} = (D_{-n+1} - z D_{-n}) / n is run with a running error
    bound; orders whose estimated relative error exceeds PCF_LOSS_LIMIT are recomputed from the
    integral representation, and the recurrence restarts from those values.
    """
    if n_max < 0 or n_max > -PCF_MIN_ORDER:
        raise ValueError(f"n_max must be in 0..{-PCF_MIN_ORDER}, got {n_max}.")
    values = np.zeros(n_max + 1)
    errors = np.zeros(n_max + 1)
    values[0] = 1.0
    if n_max == 0:
        return values
    values[1] = math.sqrt(math.pi / 2.0) * float(special.erfcx(z / math.sqrt(2.0)))
    errors[1] = 4e-16 * abs(values[1])
    eps = np.finfo(float).eps
    for n in range(1, n_max):
        prev, cur = values[n - 1], values[n]
        new = (prev - z * cur) / n
        err = (errors[n - 1] + abs(z) * errors[n]) / n + eps * (abs(prev) + abs(z * cur)) / n
        if new == 0.0 or err > PCF_LOSS_LIMIT * abs(new):
            new = pcf_D_quad_scaled(n + 1, z)
            err = 1e-12 * abs(new)
        values[n + 1] = new
        errors[n + 1] = err
    return values


def _unscale(value: float, z: float) -> float:
    if z * z / 4.0 > _EXP_LIMIT and z < 0:
        raise PCFOverflowError(f"D(z) overflows for z={z}.")
    return value * math.exp(-z * z / 4.0)


def pcf_D(order: int, z: float) -> float:
    """Parabolic cylinder function D_order(z) for integer order in [-60, 0]."""
    n = _check_order(order)
    if n == 0:
        return math.exp(-z * z / 4.0)
    if z < 0 and z * z / 4.0 > _EXP_LIMIT:
        raise PCFOverflowError(f"D_{order}({z}) overflows.")
    scaled = pcf_D_scaled_table(n, z)[n]
    return _unscale(float(scaled), z)


def pcf_D_quad(order: int, z: float) -> float:
    """Integral-representation value of D_order(z); independent of the recurrence."""
    n = _check_order(order)
    return _unscale(pcf_D_quad_scaled(n, z), z)
