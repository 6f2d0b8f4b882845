"""Root solvers feeding the asymptotic formulas: poles, saddles, decay rates, spectral roots."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from lib import DomainError, NoRootError
from lib.dist import (
    ModelParams,
    ServiceDistribution,
    analyticity_abscissa,
    lst,
    lst_deriv,
    moment,
    tail_spec,
)
from lib.inversion import _erlang_roots, scaled_denominator

logger = logging.getLogger(__name__)

XTOL = 1e-15
RTOL = 4.5e-16
MAX_ITER = 200
DEGENERATE_TOL = 1e-6
SCAN_START = -1e-9
SCAN_GROWTH = 1.05


@dataclass(frozen=True)
class SaddlePoint:
    s_star: float
    tau_star: float
    phi2: float
    regime: str = "interior"


@dataclass(frozen=True)
class CriticalPair:
    s0: float
    tau0: float
    b2: float
    b3: float
    b4: float


@dataclass(frozen=True)
class SpectralRoot:
    n: int
    X: float
    v: float
    B1: float
    C1: float
    G: float
    D1: float | None = None


@dataclass(frozen=True)
class DecayRate:
    """Maximal real zero s_c(x) of F(s, x) and the slope F_s there; J = 1/F_s."""

    s_c: float
    F_s: float
    extended: bool = False

    @property
    def J(self) -> float:
        return 1.0 / self.F_s


def _brent(fn: Callable[[float], float], lo: float, hi: float, what: str) -> float:
    try:
        root = optimize.brentq(fn, lo, hi, xtol=XTOL, rtol=RTOL, maxiter=MAX_ITER)
    except ValueError as exc:
        raise NoRootError(f"Could not bracket {what} in [{lo}, {hi}].") from exc
    return float(root)


def _b1(dist: ServiceDistribution, tau: float) -> float:
    return lst_deriv(dist, tau, 1).real


def _lower_bracket(dist: ServiceDistribution, fn: Callable[[float], float], what: str) -> float:
    """Walk left from 0 toward -epsilon_0 until fn changes sign (fn(0) > 0 assumed)."""
    eps0 = analyticity_abscissa(dist)
    scale = 1.0 / dist.mean
    for j in range(1, 80):
        lo = -eps0 * (1.0 - 0.5**j) if math.isfinite(eps0) else -scale * 2.0 ** (j - 3)
        try:
            if fn(lo) < 0.0:
                return lo
        except DomainError:
            break
    raise DomainError(f"{what} lies left of the analyticity abscissa for {dist.label!r}.")


def _upper_bracket(fn: Callable[[float], float], start: float) -> float:
    hi = max(start, 1.0)
    for _ in range(200):
        if fn(hi) < 0.0:
            return hi
        hi *= 2.0
    raise NoRootError("No upper bracket found.")


def _solve_slope(dist: ServiceDistribution, lam: float, target: float) -> float:
    """tau with -lam b'(tau) = target; the left side decreases in tau."""

    def h(tau: float) -> float:
        return -lam * _b1(dist, tau) - target

    h0 = h(0.0)
    if h0 == 0.0:
        return 0.0
    if h0 > 0.0:
        return _brent(h, 0.0, _upper_bracket(h, 1.0 / dist.mean), "saddle tau")
    lo = _lower_bracket(dist, lambda tau: -h(tau), "saddle tau")
    return _brent(h, lo, 0.0, "saddle tau")


def _s_of_tau(dist: ServiceDistribution, lam: float, tau: float) -> float:
    return tau - lam * (1.0 - lst(dist, tau).real)


def critical_pair(params: ModelParams) -> CriticalPair:
    """(s0, tau0) with lam b'(tau0) = -1, plus b-hat derivatives up to order 4 at tau0."""
    dist, lam = params.dist, params.lam

    def h(tau: float) -> float:
        return 1.0 + lam * _b1(dist, tau)

    lo = _lower_bracket(dist, h, "tau0")
    tau0 = _brent(h, lo, 0.0, "tau0")
    derivs = [lst_deriv(dist, tau0, order).real for order in (2, 3, 4)]
    return CriticalPair(_s_of_tau(dist, lam, tau0), tau0, *derivs)


def pole_tau(params: ModelParams, s: float, pair: CriticalPair | None = None) -> float:
    """Largest real root of tau - s - lam(1 - b(tau)) = 0; exists for s >= s0."""
    dist, lam = params.dist, params.lam
    pair = pair or critical_pair(params)
    if s < pair.s0:
        raise NoRootError(f"No real pole for s={s} below s0={pair.s0}.")
    if s == pair.s0:
        return pair.tau0

    def d(tau: float) -> float:
        return tau - s - lam * (1.0 - lst(dist, tau).real)

    hi = max(s + lam, pair.tau0 + 1e-12)
    while d(hi) <= 0.0:
        hi = pair.tau0 + 2.0 * (hi - pair.tau0)
    return _brent(d, pair.tau0, hi, "pole tau(s)")


def saddle(params: ModelParams, ratio: float) -> SaddlePoint:
    """(s*, tau*) for t/x = ratio: -b'(tau*) = (t - x)/(lam t), s* = tau* - lam(1 - b(tau*))."""
    if ratio <= 1.0:
        raise DomainError(f"Saddle needs t/x > 1, got {ratio}.")
    dist, lam = params.dist, params.lam
    if abs(ratio * params.eps - 1.0) < DEGENERATE_TOL:
        phi2 = lam * moment(dist, 2) * ratio**3
        return SaddlePoint(0.0, 0.0, phi2, "degenerate")
    tau = _solve_slope(dist, lam, 1.0 - 1.0 / ratio)
    phi2 = lam * lst_deriv(dist, tau, 2).real * ratio**3
    return SaddlePoint(_s_of_tau(dist, lam, tau), tau, phi2)


def heavy_saddle(dist: ServiceDistribution, ratio: float) -> SaddlePoint:
    """Hatted saddle at lam = mu: 1 + mu b'(tau) = X/T."""
    if ratio <= 1.0:
        raise DomainError(f"Saddle needs T/X > 1, got {ratio}.")
    mu = dist.mu
    tau = _solve_slope(dist, mu, 1.0 - 1.0 / ratio)
    phi2 = mu * lst_deriv(dist, tau, 2).real * ratio**3
    return SaddlePoint(_s_of_tau(dist, mu, tau), tau, phi2)


def erlang_critical_pair(k: int, mu: float, lam: float) -> tuple[float, float]:
    root = (lam * mu**k) ** (1.0 / (k + 1))
    return (k + 1) * root - (k * mu + lam), k * root - k * mu


def erlang_saddle(k: int, mu: float, lam: float, ratio: float) -> tuple[float, float]:
    """(s*, tau*) in closed form for Erlang(k) service."""
    inv = 1.0 / ratio
    rho = lam / mu
    s_star = (lam * mu**k) ** (1.0 / (k + 1)) * (1.0 / (1.0 - inv)) ** (1.0 / (k + 1)) * (
        k + 1 - inv
    ) - lam - mu * k
    tau_star = k * mu * ((rho / (1.0 - inv)) ** (1.0 / (k + 1)) - 1.0)
    return s_star, tau_star


# Decay rate s_c(x)


def erlang_decay_rate(k: int, mu: float, lam: float, x: float) -> DecayRate:
    """s_c(x) and F_s for Erlang(k) service from the pole residues of the kernel.

    F(s, x) = s^2 sum_i e^{tau_i x} / (tau_i^2 D'(tau_i)) over the k + 1 zeros of
    D(tau) = tau - s - lam + lam (k mu)^k / (tau + k mu)^k; the polynomial part of the tau = 0
    residue cancels gap + s x exactly. F_s follows from d tau_i/ds = 1/D'(tau_i). The scan
    starts just below s0, where two of the zeros merge, with steps growing geometrically.
    """
    if x <= 0:
        raise DomainError(f"x must be positive, got {x}.")
    km = k * mu
    base = lam * km**k

    def parts(s: float) -> tuple[float, float]:
        roots, _ = _erlang_roots(k, mu, lam, s)
        d1 = 1.0 - k * base / (roots + km) ** (k + 1)
        d2 = k * (k + 1) * base / (roots + km) ** (k + 2)
        grow = np.exp(roots * x)
        total = np.sum(grow / (roots**2 * d1))
        slope = np.sum(
            grow * (x / roots**2 - 2.0 / roots**3) / d1**2 - grow * d2 / (roots**2 * d1**3)
        )
        return float((s * s * total).real), float((2.0 * s * total + s * s * slope).real)

    s0, _ = erlang_critical_pair(k, mu, lam)
    floor = min(20.0 * s0, -40.0 / x)
    step = 1e-4 * abs(s0)
    upper = s0 - step
    f_upper = parts(upper)[0]
    while True:
        lower = upper - step
        if lower < floor:
            raise NoRootError(f"No zero of the Erlang F(s, {x}) found down to s={floor:g}.")
        f_lower = parts(lower)[0]
        if f_lower == 0.0 or (f_lower < 0.0) != (f_upper < 0.0):
            break
        upper, f_upper = lower, f_lower
        step *= 1.1
    root = lower if f_lower == 0.0 else _brent(lambda s: parts(s)[0], lower, upper, "Erlang s_c")
    return DecayRate(root, parts(root)[1])


def s_c(params: ModelParams, x: float, pair: CriticalPair | None = None) -> DecayRate:
    """Scan F(s, x) downward from 0 for its first sign change, then refine by Brent."""
    if x <= 0:
        raise DomainError(f"x must be positive, got {x}.")
    dist, lam, gap = params.dist, params.lam, params.eps
    pair = pair or critical_pair(params)

    def g(s: float) -> float:
        return scaled_denominator(dist, lam, gap, s, x).scaled.real

    primary = 11.0 * pair.s0
    floor = min(primary, -20.0 / x)
    step = abs(pair.s0) / 200.0
    upper, g_upper = SCAN_START, g(SCAN_START)
    extended = False
    while True:
        lower = upper - step
        if lower < floor:
            raise NoRootError(f"No sign change of F(s, {x}) found down to s={floor:g}.")
        if lower < primary and not extended:
            extended = True
            logger.warning("s_c scan for x=%g passed 11*s0; using the extended range.", x)
        g_lower = g(lower)
        if g_lower == 0.0 or (g_lower < 0.0) != (g_upper < 0.0):
            break
        upper, g_upper = lower, g_lower
        step *= SCAN_GROWTH
    root = lower if g_lower == 0.0 else _brent(g, lower, upper, "s_c")
    h = 1e-4 * max(abs(root), 1e-3)
    slope = (8.0 * (g(root + h) - g(root - h)) - g(root + 2.0 * h) + g(root - 2.0 * h)) / (12.0 * h)
    return DecayRate(root, slope * math.exp(root * x), extended)


def s_c_prime(params: ModelParams, x: float, rel_step: float = 1e-4) -> float:
    h = rel_step * x
    pair = critical_pair(params)
    return (s_c(params, x + h, pair).s_c - s_c(params, x - h, pair).s_c) / (2.0 * h)


# Heavy-traffic spectral roots


def spectral_scale(dist: ServiceDistribution) -> float:
    """c = mu m2."""
    return dist.mu * moment(dist, 2)


def spectral_v(c: float, X: float, n: int) -> float:
    """n-th positive root of X v / c + 2 arctan v = n pi."""
    if X <= 0:
        raise DomainError(f"X must be positive, got {X}.")

    def fn(v: float) -> float:
        return X * v / c + 2.0 * math.atan(v) - n * math.pi

    return _brent(fn, (n - 1) * math.pi * c / X, n * math.pi * c / X, f"v_{n}")


def spectral_B1(v: float, c: float) -> float:
    return -(1.0 + v * v) / (2.0 * c)


def spectral_C1(v: float, X: float, mu: float, m2: float, m3: float) -> float:
    c = mu * m2
    w = v * v + 1.0
    head = w / (6.0 * mu**2 * m2**3 * (w * X + 2.0 * c))
    body = 2.0 * c * (m3 - 3.0 * mu * m2**2) + (
        3.0 * mu * m2**2 * v * v - 3.0 * m3 * v * v - 3.0 * mu * m2**2 + m3
    ) * X
    return head * body


def spectral_G(v: float, X: float, c: float) -> float:
    theta = v * X / c
    denom = (v * v - 1.0) * X * math.cos(theta) + (2.0 * v * X + (v * v + 1.0) * c / v) * math.sin(
        theta
    )
    return 2.0 * v * v * math.exp(X / c) / denom


def d_coefficients(
    v: float, mu: float, m2: float, m3: float, m4: float
) -> tuple[float, float, float, float]:
    v2 = v * v
    d0 = (
        24 * mu**3 * m2**3
        * (-12 * mu**2 * m2**4 + 8 * mu * m2**2 * m3 + (v2 + 1) * m2 * m4 - (v2 + 3) * m3**2)
    )
    d1 = (
        4 * mu**2 * m2**2
        * (
            36 * mu**2 * (v2 - 3) * m2**4
            - 24 * mu * (4 * v2 - 3) * m2**2 * m3
            + 3 * (3 * v2**2 - 2 * v2 + 3) * m2 * m4
            - (11 * v2**2 - 42 * v2 + 27) * m3**2
        )
    )
    d2 = (
        2 * mu * m2
        * (
            -36 * mu**2 * (v2 + 3) * m2**4
            - 24 * mu * (v2**2 + 2 * v2 - 3) * m2**2 * m3
            + 3 * (3 * v2**3 - 7 * v2**2 - 7 * v2 + 3) * m2 * m4
            - (13 * v2**3 - 27 * v2**2 - 45 * v2 + 27) * m3**2
        )
    )
    d3 = (v2 + 1) ** 2 * (
        -36 * mu**2 * m2**4
        + 24 * mu * m2**2 * m3
        - 3 * (v2**2 - 6 * v2 + 1) * m2 * m4
        - (5 * v2**2 - 18 * v2 + 9) * m3**2
    )
    return d0, d1, d2, d3


def spectral_D1(v: float, X: float, mu: float, m2: float, m3: float, m4: float) -> float:
    d0, d1, d2, d3 = d_coefficients(v, mu, m2, m3, m4)
    w = v * v + 1.0
    poly = d0 + d1 * X + d2 * X**2 + d3 * X**3
    return w * poly / (72.0 * mu**3 * m2**5 * (X * w + 2.0 * mu * m2) ** 3)


def spectral_roots(
    dist: ServiceDistribution, X: float, n_max: int = 20, *, with_d1: bool = False
) -> list[SpectralRoot]:
    mu = dist.mu
    m2, m3 = moment(dist, 2), moment(dist, 3)
    m4 = moment(dist, 4) if with_d1 else 0.0
    c = mu * m2
    roots: list[SpectralRoot] = []
    for n in range(1, n_max + 1):
        v = spectral_v(c, X, n)
        roots.append(
            SpectralRoot(
                n=n,
                X=X,
                v=v,
                B1=spectral_B1(v, c),
                C1=spectral_C1(v, X, mu, m2, m3),
                G=spectral_G(v, X, c),
                D1=spectral_D1(v, X, mu, m2, m3, m4) if with_d1 else None,
            )
        )
    return roots


def v1(dist: ServiceDistribution, X: float) -> float:
    return spectral_v(spectral_scale(dist), X, 1)


def v1_prime_implicit(dist: ServiceDistribution, X: float) -> float:
    c = spectral_scale(dist)
    v = spectral_v(c, X, 1)
    return -v * (1.0 + v * v) / (X * (1.0 + v * v) + 2.0 * c)


def v1_derivatives(
    dist: ServiceDistribution, X: float, rel_step: float = 1e-4
) -> tuple[float, float, float]:
    """(v1, v1', v1'') with Richardson-extrapolated central differences."""
    c = spectral_scale(dist)
    h = rel_step * X
    v0 = spectral_v(c, X, 1)

    def diffs(step: float) -> tuple[float, float]:
        up, down = spectral_v(c, X + step, 1), spectral_v(c, X - step, 1)
        return (up - down) / (2.0 * step), (up - 2.0 * v0 + down) / step**2

    d1_h, d2_h = diffs(h)
    d1_half, d2_half = diffs(h / 2.0)
    return v0, (4.0 * d1_half - d1_h) / 3.0, (4.0 * d2_half - d2_h) / 3.0


def omega(dist: ServiceDistribution, X: float) -> float:
    """Omega(X) = N r X^(r-1) [c X (v1^2 + 1) + 2 c^2] / (v1^2 (v1^2 + 1))."""
    tail = tail_spec(dist)
    c = spectral_scale(dist)
    v = spectral_v(c, X, 1)
    w = v * v + 1.0
    return tail.N * tail.r * X ** (tail.r - 1.0) * (c * X * w + 2.0 * c * c) / (v * v * w)


def xhat(dist: ServiceDistribution, sigma: float) -> float:
    """Unique X > 0 with Omega(X) = sigma; Omega increases from 0 to infinity."""
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}.")

    def fn(X: float) -> float:
        return math.log(omega(dist, X)) - math.log(sigma)

    lo, hi = 1e-3, 1.0
    while fn(lo) > 0.0:
        lo /= 10.0
        if lo < 1e-300:
            raise NoRootError(f"No lower bracket for X-hat at sigma={sigma}.")
    while fn(hi) < 0.0:
        hi *= 2.0
        if hi > 1e300:
            raise NoRootError(f"No upper bracket for X-hat at sigma={sigma}.")
    return _brent(fn, lo, hi, "X-hat")


# Erlang polynomial roots


def erlang_Q_roots(k: int, mu: float) -> list[complex]:
    """Nonzero roots of (Q - mu)(Q + k mu)^k + mu (k mu)^k; Q = 0 is a double root."""
    km = k * mu
    poly = np.polymul([1.0, -mu], np.poly(np.full(k, -km)))
    poly[-1] += mu * km**k
    quotient, _ = np.polydiv(poly, [1.0, 0.0, 0.0])
    if len(quotient) < 2:
        return []
    found = np.roots(quotient)
    dpoly = np.polyder(poly)
    for _ in range(3):
        found = found - np.polyval(poly, found) / np.polyval(dpoly, found)
    return sorted((complex(q) for q in found), key=lambda q: (q.real, q.imag))
