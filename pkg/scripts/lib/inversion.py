"""Exact evaluation path: transform kernel, denominator F(s, x), sojourn LST and inversion.

The denominator F(s, x) is the inverse transform in tau of the kernel f(tau; s). Writing
D(tau) = tau - s - lam (1 - b(tau)) and gap = 1 - rho,

    F(s, x) = gap + s x + s^2 H(s, x),   H = L^-1[1 / (tau^2 D(tau))](x).

H is computed by residues for Erlang service, by a finite geometric-series sum for
deterministic service, and by Fourier quadrature along a vertical contour otherwise. All
internal paths carry the scaled value e^{-s x} F so large abscissae never overflow.
"""

from __future__ import annotations

import cmath
import logging
import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from lib import ContourError, DomainError, PoleError, UnsupportedError
from lib.dist import (
    Kind,
    ModelParams,
    ServiceDistribution,
    analyticity_abscissa,
    density,
    lst,
    moment,
)

logger = logging.getLogger(__name__)

SMALL_TAU = 1e-4
SMALL_S = 1e-8
POLE_TOL = 1e-12
QAWF_EPSABS = 1e-13
ROOT_COLLISION = 1e-6
EULER_TERMS = 11
DEFAULT_A = 22.0
INVERSION_RTOL = 1e-6
DEFAULT_NODES = 64
MAX_NODES = 16384
TALBOT_DEGREE = 32

DEFORMATIONS = ("vertical-line", "left-indented", "right-indented")


@dataclass(frozen=True)
class ContourSpec:
    """Outer (s-plane) inversion contour.

    shift is the absolute abscissa Re(s) of the vertical line; when unset it is A/(2u) with
    u = t - x and A = 22, which puts the discretisation error near e^{-A}. half_width, when
    set, bounds the truncation of the line at |Im s| <= half_width.
    """

    shift: float | None = None
    nodes: int = DEFAULT_NODES
    half_width: float | None = None
    deformation: str = "vertical-line"

    def __post_init__(self) -> None:
        if self.nodes < 64 or self.nodes % 2:
            raise ValueError(f"Contour node count must be even and >= 64, got {self.nodes}.")
        if self.deformation not in DEFORMATIONS:
            raise ValueError(f"Unknown contour deformation {self.deformation!r}.")
        if self.shift is not None and self.shift <= 0:
            raise ContourError(f"Contour shift {self.shift} must lie right of Re(s) = 0.")


@dataclass
class DensityValue:
    t: float
    x: float | None
    value: float
    atom: float | None = None
    regime: str = "exact"
    error: float = 0.0
    converged: bool = True
    notes: list[str] = field(default_factory=lambda: [])
    terms: dict[str, float] = field(default_factory=lambda: {})


@dataclass(frozen=True)
class Denominator:
    scaled: complex
    error: float
    method: str
    s: complex
    x: float

    @property
    def value(self) -> complex:
        return self.scaled * cmath.exp(self.s * self.x)


# Kernel


def _d(dist: ServiceDistribution, lam: float, s: complex, tau: complex) -> complex:
    return tau - s - lam * (1.0 - lst(dist, tau))


def f_kernel(params: ModelParams, s: complex, tau: complex) -> complex:
    """f(tau; s), the transform in x of the sojourn LST denominator."""
    lam, gap, dist = params.lam, params.eps, params.dist
    s, tau = complex(s), complex(tau)
    denom = _d(dist, lam, s, tau)
    if abs(denom) < POLE_TOL:
        raise PoleError(f"tau={tau} is a root of the kernel denominator at s={s}.")
    if abs(tau) < SMALL_TAU * params.mu:
        c2, c3, c4 = (lam * moment(dist, j) / math.factorial(j) for j in (2, 3, 4))
        numer = (gap * gap + s * c2) + (gap * c2 - s * c3) * tau + (s * c4 - gap * c3) * tau**2
        return numer / denom
    return (gap * tau + s) / tau**2 + s * s / (tau**2 * denom)


# Inner integral H


def _phi2_scaled(a: complex, s: complex, x: float) -> complex:
    """e^{-s x} (e^{a x} - 1 - a x) / a^2."""
    z = a * x
    if abs(z) < 0.1:
        series = sum(z**j / math.factorial(j + 2) for j in range(14))
        return cmath.exp(-s * x) * x * x * series
    return (cmath.exp(z - s * x) - cmath.exp(-s * x) * (1.0 + z)) / (a * a)


def _h_term(level: int, a: complex, u: float, s: complex, x: float) -> complex:
    """e^{-s x} L^-1[1 / (tau^2 (tau - a)^(level + 1))](u)."""
    if u <= 0.0:
        return 0j
    au = a * u
    if abs(au) < max(1.0, (level + 2) / 2.0):
        lead = u ** (level + 2) / math.factorial(level)
        power = 1.0 + 0j
        total = 0j
        for j in range(400):
            if j:
                power *= au / j
            contrib = lead * power / ((level + j + 1) * (level + j + 2))
            total += contrib
            if j > 4 and abs(contrib) < 1e-17 * abs(total):
                break
        return cmath.exp(-s * x) * total
    pole_zero = (-a) ** (-level - 1) * (u + (level + 1) / a) * cmath.exp(-s * x)
    pole_a = sum(
        (-1) ** i * (i + 1) * u ** (level - i) / (math.factorial(level - i) * a ** (i + 2))
        for i in range(level + 1)
    )
    return pole_zero + cmath.exp(a * u - s * x) * pole_a


def _h_deterministic(dist: ServiceDistribution, lam: float, s: complex, x: float) -> complex:
    """Scaled H for b(y) = delta(y - 1/mu): geometric series, finite in L."""
    a = s + lam
    total = 0j
    for level in range(int(math.floor(dist.mu * x + 1e-12)) + 1):
        total += (-lam) ** level * _h_term(level, a, x - level / dist.mu, s, x)
    return total


def _erlang_roots(k: int, mu: float, lam: float, s: complex) -> tuple[np.ndarray, np.ndarray]:
    """Roots of P(tau) = (tau - s - lam)(tau + k mu)^k + lam (k mu)^k and P'(roots)."""
    km = k * mu
    poly = np.polymul([1.0, -(s + lam)], np.poly(np.full(k, -km)))
    poly = poly.astype(complex)
    poly[-1] += lam * km**k
    roots = np.roots(poly)
    dpoly = np.polyder(poly)
    for _ in range(3):
        step = np.polyval(poly, roots) / np.polyval(dpoly, roots)
        roots = roots - step
    return roots, np.polyval(dpoly, roots)


def _roots_collide(roots: np.ndarray, scale: float) -> bool:
    if len(roots) < 2:
        return False
    diff = np.abs(roots[:, None] - roots[None, :]) + np.eye(len(roots)) * 1e300
    return bool(diff.min() < ROOT_COLLISION * scale)


def _contour_abscissa(dist: ServiceDistribution, lam: float, a_re: float) -> float:
    """Smallest u with u - lam b(u) >= a_re; D has no zeros right of it."""
    eps0 = analyticity_abscissa(dist)

    def g(u: float) -> float:
        return u - lam * lst(dist, u).real - a_re

    lo = a_re
    if lo <= -eps0:
        lo = -eps0 * (1.0 - 1e-9)
    if g(lo) >= 0.0:
        return lo
    hi = max(a_re + lam, lo + 1.0)
    while g(hi) < 0.0:
        hi = lo + 2.0 * (hi - lo)
    return float(optimize.brentq(g, lo, hi, xtol=1e-12))


def _h_quadrature(
    dist: ServiceDistribution,
    lam: float,
    s: complex,
    x: float,
    tau_shift: float | None = None,
) -> tuple[complex, float]:
    """Scaled H by QUADPACK Fourier quadrature on Re(tau) = c."""
    a = s + lam
    u_max = _contour_abscissa(dist, lam, a.real)
    floor = max(u_max, 0.0, a.real)
    if tau_shift is None:
        c = floor + 1.0 / max(x, 1.0)
    else:
        if tau_shift <= floor + 1e-8:
            raise ContourError(
                f"tau contour at {tau_shift} is not right of the singularities at {floor}."
            )
        c = tau_shift

    def g(tau: complex) -> complex:
        b = lst(dist, tau)
        denom = tau - a + lam * b
        return -lam * b / (tau * tau * denom * (tau - a))

    def quad(fn: Callable[[float], float], weight: str) -> tuple[float, float]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            value, err = integrate.quad(
                fn, 0.0, np.inf, weight=weight, wvar=x, epsabs=QAWF_EPSABS, limlst=200, limit=400
            )
        return float(value), float(err)

    if s.imag == 0.0:
        re_cos, e1 = quad(lambda y: g(complex(c, y)).real, "cos")
        im_sin, e2 = quad(lambda y: g(complex(c, y)).imag, "sin")
        integral = complex(2.0 * (re_cos - im_sin), 0.0)
        err = 2.0 * (e1 + e2)
    else:

        def p_part(y: float) -> complex:
            return g(complex(c, y)) + g(complex(c, -y))

        def q_part(y: float) -> complex:
            return 1j * (g(complex(c, y)) - g(complex(c, -y)))

        pr, e1 = quad(lambda y: p_part(y).real, "cos")
        pi_, e2 = quad(lambda y: p_part(y).imag, "cos")
        qr, e3 = quad(lambda y: q_part(y).real, "sin")
        qi, e4 = quad(lambda y: q_part(y).imag, "sin")
        integral = complex(pr + qr, pi_ + qi)
        err = e1 + e2 + e3 + e4
    factor = cmath.exp((c - s) * x) / (2.0 * math.pi)
    return _phi2_scaled(a, s, x) + factor * integral, abs(factor) * err


def _h_scaled(
    dist: ServiceDistribution,
    lam: float,
    s: complex,
    x: float,
    method: str,
    tau_shift: float | None = None,
) -> tuple[complex, float, str]:
    if method == "series":
        if dist.kind != Kind.DETERMINISTIC:
            raise UnsupportedError("The series path only applies to deterministic service.")
        return _h_deterministic(dist, lam, s, x), 0.0, "series"
    if method == "residue":
        if not dist.is_erlang:
            raise UnsupportedError("The residue path only applies to Erlang service.")
        if abs(s) < SMALL_S:
            raise UnsupportedError("The residue path for H needs s != 0.")
        k, mu = dist.k, dist.mu
        roots, dp = _erlang_roots(k, mu, lam, s)
        if _roots_collide(roots, k * mu + abs(s) + lam):
            value, err = _h_quadrature(dist, lam, s, x, tau_shift)
            return value, err, "quadrature"
        residues = (roots + k * mu) ** k * np.exp((roots - s) * x) / (roots**2 * dp)
        zero = (-x / s - (1.0 - lam / mu) / (s * s)) * cmath.exp(-s * x)
        return complex(np.sum(residues)) + zero, 0.0, "residue"
    value, err = _h_quadrature(dist, lam, s, x, tau_shift)
    return value, err, "quadrature"


def _auto_method(dist: ServiceDistribution) -> str:
    if dist.is_erlang:
        return "residue"
    if dist.kind == Kind.DETERMINISTIC:
        return "series"
    return "quadrature"


def denominator_h(
    dist: ServiceDistribution,
    lam: float,
    s: complex,
    x: float,
    *,
    method: str = "auto",
    tau_shift: float | None = None,
) -> complex:
    """H(s, x) = (1/2 pi i) int e^{tau x} / (tau^2 [tau - s - lam(1 - b(tau))]) d tau."""
    if x <= 0:
        raise DomainError(f"x must be positive, got {x}.")
    s = complex(s)
    chosen = _auto_method(dist) if method == "auto" else method
    if chosen == "residue" and abs(s) < SMALL_S:
        if abs(lam - dist.mu) < 1e-12:
            return complex(erlang_h_at_zero(dist.k, dist.mu, x))
        chosen = "quadrature"
    scaled, _, _ = _h_scaled(dist, lam, s, x, chosen, tau_shift)
    return scaled * cmath.exp(s * x)


def scaled_denominator(
    dist: ServiceDistribution,
    lam: float,
    gap: float,
    s: complex,
    x: float,
    *,
    method: str = "auto",
    tau_shift: float | None = None,
) -> Denominator:
    """e^{-s x} (gap + s x + s^2 H); gap = 1 - lam/mu for every caller."""
    if x <= 0:
        raise DomainError(f"x must be positive, got {x}.")
    s = complex(s)
    if abs(s) < SMALL_S:
        return Denominator(cmath.exp(-s * x) * (gap + s * x), 0.0, "small-s", s, x)
    chosen = _auto_method(dist) if method == "auto" else method
    if chosen == "residue" and dist.is_erlang:
        k, mu = dist.k, dist.mu
        roots, dp = _erlang_roots(k, mu, lam, s)
        if not _roots_collide(roots, k * mu + abs(s) + lam):
            weights = s * s * (roots + k * mu) ** k / (roots**2 * dp)
            scaled = complex(np.sum(weights * np.exp((roots - s) * x)))
            return Denominator(scaled, 0.0, "residue", s, x)
        chosen = "quadrature"
    h, err, used = _h_scaled(dist, lam, s, x, chosen, tau_shift)
    scaled = cmath.exp(-s * x) * (gap + s * x) + s * s * h
    return Denominator(scaled, abs(s * s) * err, used, s, x)


def F_denominator(
    params: ModelParams,
    s: complex,
    x: float,
    *,
    method: str = "auto",
    tau_shift: float | None = None,
) -> complex:
    den = scaled_denominator(
        params.dist, params.lam, params.eps, s, x, method=method, tau_shift=tau_shift
    )
    return den.value


def erlang_residue_weights(params: ModelParams, s: complex) -> tuple[np.ndarray, np.ndarray]:
    """Poles tau_i(s) of f and residues R_i(s), so that F = sum R_i e^{tau_i x}."""
    dist = params.dist
    if not dist.is_erlang:
        raise UnsupportedError("Residue weights exist only for Erlang service.")
    k, mu = dist.k, dist.mu
    roots, dp = _erlang_roots(k, mu, params.lam, complex(s))
    return roots, s * s * (roots + k * mu) ** k / (roots**2 * dp)


def q_star(dist: ServiceDistribution, x: float) -> float:
    """Residue at tau = 0 of e^{tau x} / (tau^2 [tau - mu(1 - b(tau))])."""
    mu = dist.mu
    m2, m3, m4, m5 = (moment(dist, j) for j in (2, 3, 4, 5))
    poly = (
        90 * m2**3 * x**3
        + 90 * m2**2 * m3 * x**2
        + 15 * m2 * (4 * m3**2 - 3 * m2 * m4) * x
        + (9 * m2**2 * m5 + 20 * m3**3 - 30 * m2 * m3 * m4)
    )
    return poly / (270 * mu * m2**4)


def erlang_q_star(k: int, mu: float, x: float) -> float:
    km = k * mu
    poly = (
        90 * km**3 * x**3
        + 90 * (k + 2) * km**2 * x**2
        + 15 * km * (k * k + k - 2) * x
        - (k**3 + 9 * k * k + 6 * k - 16)
    )
    return poly / (270 * (k + 1) * k * k * mu * mu)


def erlang_h_at_zero(k: int, mu: float, x: float) -> float:
    """H_mu(0, x) for Erlang service: Q*(x) plus the finite sum over the roots Q_j."""
    from lib.roots import erlang_Q_roots

    total = erlang_q_star(k, mu, x)
    for q in erlang_Q_roots(k, mu):
        total += ((q + k * mu) / ((k + 1) * q**3) * cmath.exp(q * x)).real
    return float(total)


# Sojourn LST and inversion


def sojourn_lst(params: ModelParams, s: complex, x: float, *, method: str = "auto") -> complex:
    den = scaled_denominator(params.dist, params.lam, params.eps, s, x, method=method)
    return params.eps * cmath.exp(-complex(s) * x) / den.scaled


def deterministic_lst_closed_form(lam: float, mu: float, s: complex) -> complex:
    """E[exp(-s V(1/mu))] for deterministic service, in closed form."""
    rho = lam / mu
    e = cmath.exp(-rho - s / mu)
    return (1 - rho) * (lam + s) ** 2 * e / (s * s + lam * (s + (1 - rho) * (lam + s)) * e)


def atom_mass(params: ModelParams, x: float) -> float:
    """Probability that a customer of size x is alone for its whole service."""
    return params.eps * math.exp(-params.lam * x)


def _euler_inversion(
    transform: Callable[[complex], complex],
    u: float,
    contour: ContourSpec,
) -> tuple[float, float, bool, int]:
    """Euler-accelerated trapezoid on Re(s) = shift; doubles the node count until stable."""
    shift = contour.shift if contour.shift is not None else DEFAULT_A / (2.0 * u)
    big_a = 2.0 * shift * u
    h = math.pi / u
    max_nodes = MAX_NODES
    if contour.half_width is not None:
        max_nodes = max(contour.nodes, int(contour.half_width / h) - EULER_TERMS)
    terms: list[float] = [0.5 * transform(complex(shift, 0.0)).real]

    def extend(count: int) -> None:
        while len(terms) <= count:
            j = len(terms)
            terms.append((-1) ** j * transform(complex(shift, j * h)).real)

    weights = special.comb(EULER_TERMS, np.arange(EULER_TERMS + 1)) / 2.0**EULER_TERMS

    def estimate(n: int) -> float:
        extend(n + EULER_TERMS)
        partial = np.cumsum(terms[: n + EULER_TERMS + 1])[n:]
        return math.exp(big_a / 2.0) / u * float(np.dot(weights, partial))

    nodes = contour.nodes
    current = estimate(nodes)
    while True:
        if 2 * nodes > max_nodes:
            return current, math.inf, False, nodes
        nodes *= 2
        refined = estimate(nodes)
        change = abs(refined - current)
        current = refined
        if change <= INVERSION_RTOL * max(abs(refined), 1e-300):
            return current, change / max(abs(refined), 1e-300), True, nodes


def ptx_exact(
    params: ModelParams,
    t: float,
    x: float,
    *,
    contour: ContourSpec | None = None,
    method: str = "auto",
) -> DensityValue:
    """Continuous part of p(t|x) by double inversion; atom (1 - rho) e^{-lam x} reported apart."""
    if not t > x > 0:
        raise DomainError(f"Need t > x > 0, got t={t}, x={x}.")
    contour = contour or ContourSpec()
    if contour.deformation != "vertical-line":
        raise UnsupportedError("The s-plane inversion only uses a vertical line.")
    atom = atom_mass(params, x)
    dist, lam, gap = params.dist, params.lam, params.eps

    def transform(s: complex) -> complex:
        den = scaled_denominator(dist, lam, gap, s, x, method=method)
        return gap / den.scaled - atom

    value, error, converged, nodes = _euler_inversion(transform, t - x, contour)
    result = DensityValue(t=t, x=x, value=value, atom=atom, error=error, converged=converged)
    if not converged:
        result.notes.append(f"inversion not converged after {nodes} nodes")
        logger.warning("Inversion at t=%g x=%g did not converge (%d nodes).", t, x, nodes)
    return result


def pt_exact(params: ModelParams, t: float, *, contour: ContourSpec | None = None) -> DensityValue:
    """p(t) = int_0^t b(x) p(t|x) dx, including the atom line b(t)(1 - rho) e^{-lam t}."""
    if t <= 0:
        raise DomainError(f"t must be positive, got {t}.")
    dist = params.dist
    if dist.kind == Kind.DETERMINISTIC:
        size = 1.0 / dist.mu
        if t <= size:
            return DensityValue(t=t, x=None, value=0.0, atom=atom_mass(params, size))
        inner = ptx_exact(params, t, size, contour=contour)
        inner.x = None
        return inner

    upper = t if dist.support is None else min(t, dist.support)
    flags: list[bool] = []

    def integrand(x: float) -> float:
        if x >= t:
            return 0.0
        value = ptx_exact(params, t, x, contour=contour)
        flags.append(value.converged)
        return density(dist, x) * value.value

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        cont, err = integrate.quad(integrand, 0.0, upper, epsabs=1e-9, epsrel=1e-6, limit=50)
    line = density(dist, t) * atom_mass(params, t) if t <= upper else 0.0
    return DensityValue(
        t=t,
        x=None,
        value=cont + line,
        error=err / max(abs(cont + line), 1e-300),
        converged=all(flags),
    )


# Deterministic-service identity


def _phi2_closed(w: complex) -> complex:
    """(e^w - w - 1) / w^2, with its Taylor series near w = 0."""
    if abs(w) < 1e-3:
        return complex(sum(w**j / math.factorial(j + 2) for j in range(10)))
    return (cmath.exp(w) - w - 1.0) / (w * w)


def verify_deterministic_identity(lam: float, mu: float, s: complex) -> float:
    """Largest relative residual among the deterministic-service identities at s.

    Checks the closed form of F(s, 1/mu), mu^2 H(s, 1/mu) = (e^w - w - 1)/w^2 with
    w = rho + s/mu, the summed level series at x = 1/mu (levels >= 1 vanish there) and the
    summed series against quadrature at x = 2.5/mu, where three levels contribute.
    """
    rho = lam / mu
    if rho >= 1:
        raise DomainError(f"Need rho < 1, got {rho}.")
    s = complex(s)
    x = 1.0 / mu
    dist = ServiceDistribution(Kind.DETERMINISTIC, mu=mu, label=f"det:mu={mu:g}")
    closed = _phi2_closed(rho + s / mu)
    h = denominator_h(dist, lam, s, x, method="quadrature")
    lhs = 1 - rho + s / mu + s * s * h
    rhs = (s * s * cmath.exp(rho + s / mu) + lam * (s + (1 - rho) * (lam + s))) / (lam + s) ** 2
    residuals = [
        abs(lhs - rhs) / max(1.0, abs(rhs)),
        abs(mu * mu * h - closed) / max(1.0, abs(closed)),
    ]
    series = _h_deterministic(dist, lam, s, x) * cmath.exp(s * x)
    residuals.append(abs(mu * mu * series - closed) / max(1.0, abs(closed)))
    wide = 2.5 / mu
    quad, _ = _h_quadrature(dist, lam, s, wide)
    levels = _h_deterministic(dist, lam, s, wide)
    residuals.append(abs(levels - quad) / max(1.0, abs(quad)))
    return max(residuals)


# Fixed Talbot


def talbot(fn: Callable[[np.ndarray], np.ndarray], t: float, degree: int = TALBOT_DEGREE) -> float:
    """Fixed-Talbot inverse of a vectorised transform fn at time t."""
    if t <= 0:
        raise DomainError(f"Talbot inversion needs t > 0, got {t}.")
    r = 2.0 * degree / 5.0
    theta = np.arange(degree) * math.pi / degree
    cot = np.zeros(degree)
    cot[1:] = 1.0 / np.tan(theta[1:])
    nodes = (r / t) * theta * (cot + 1j)
    nodes[0] = r / t
    gamma = np.exp(t * nodes) * (1 + 1j * theta * (1 + cot**2) - 1j * cot)
    gamma[0] = 0.5 * math.exp(r)
    values = fn(nodes.astype(complex))
    return float((r / (degree * t)) * np.dot(gamma, values).real)
