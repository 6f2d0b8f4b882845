"""Service-time distributions: density, Laplace-Stieltjes transform, moments, tail metadata.

Built-in kinds carry closed forms. A general-analytic kind is described by a density callback,
a declared analyticity abscissa and (optionally) small-y, tail and edge data, since none of
those can be inferred reliably from the density alone.
"""

from __future__ import annotations

import logging
import math
import re
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from enum import StrEnum

import numpy as np
from scipy import integrate, special

from lib import DomainError, UnsupportedError
from lib.utils import coerce_float

logger = logging.getLogger(__name__)

QUAD_EPSABS = 1e-10
MAX_DERIV_ORDER = 5


class Kind(StrEnum):
    EXPONENTIAL = "exponential"
    ERLANG = "erlang"
    DETERMINISTIC = "deterministic"
    FINITE_SUPPORT = "finite-support"
    GENERAL = "general-analytic"


@dataclass(frozen=True)
class TailSpec:
    """Tail law b(y) ~ M y^q exp(-N y^r) as y -> infinity."""

    M: float
    N: float
    q: float
    r: float

    def __post_init__(self) -> None:
        if self.M <= 0:
            raise ValueError(f"Tail M must be positive, got {self.M}.")
        if self.N <= 0:
            raise ValueError(f"Tail N must be positive, got {self.N}.")
        if not 1.0 <= self.r <= 2.0:
            raise ValueError(f"Tail r must lie in [1, 2], got {self.r}.")


@dataclass(frozen=True)
class ServiceDistribution:
    kind: Kind
    mu: float
    k: int = 1
    support: float | None = None
    edge_alpha: float | None = None
    edge_nu: float | None = None
    small_alpha: float | None = None
    small_nu: float | None = None
    tail: TailSpec | None = None
    abscissa: float | None = None
    label: str = ""
    density_fn: Callable[[float], float] | None = field(default=None, compare=False, repr=False)

    @property
    def is_erlang(self) -> bool:
        return self.kind in (Kind.EXPONENTIAL, Kind.ERLANG)

    @property
    def mean(self) -> float:
        return 1.0 / self.mu


@dataclass(frozen=True)
class ModelParams:
    lam: float
    dist: ServiceDistribution

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise DomainError(f"Arrival rate must be positive, got {self.lam}.")
        if self.rho >= 1.0:
            raise DomainError(f"Traffic intensity must be below 1, got rho={self.rho}.")

    @property
    def mu(self) -> float:
        return self.dist.mu

    @property
    def rho(self) -> float:
        return self.lam / self.dist.mu

    @property
    def eps(self) -> float:
        return 1.0 - self.rho


# Constructors


def exponential(mu: float) -> ServiceDistribution:
    if mu <= 0:
        raise ValueError(f"Field 'mu' must be positive, got {mu}.")
    return ServiceDistribution(Kind.EXPONENTIAL, mu=mu, k=1, label=f"exp:mu={mu:g}")


def erlang(k: int, mu: float) -> ServiceDistribution:
    if k < 1:
        raise ValueError(f"Field 'k' must be a positive integer, got {k}.")
    if mu <= 0:
        raise ValueError(f"Field 'mu' must be positive, got {mu}.")
    kind = Kind.EXPONENTIAL if k == 1 else Kind.ERLANG
    return ServiceDistribution(kind, mu=mu, k=k, label=f"erlang:k={k},mu={mu:g}")


def deterministic(mu: float) -> ServiceDistribution:
    if mu <= 0:
        raise ValueError(f"Field 'mu' must be positive, got {mu}.")
    return ServiceDistribution(Kind.DETERMINISTIC, mu=mu, label=f"det:mu={mu:g}")


def uniform(a: float) -> ServiceDistribution:
    """Uniform density on [0, a]; edge law alpha*=1/a, nu*=1."""
    if a <= 0:
        raise ValueError(f"Field 'a' must be positive, got {a}.")
    return ServiceDistribution(
        Kind.FINITE_SUPPORT,
        mu=2.0 / a,
        support=a,
        edge_alpha=1.0 / a,
        edge_nu=1.0,
        small_alpha=1.0 / a,
        small_nu=1.0,
        label=f"uniform:a={a:g}",
    )


def general(
    density: Callable[[float], float],
    *,
    abscissa: float,
    support: float | None = None,
    small_alpha: float | None = None,
    small_nu: float | None = None,
    edge_alpha: float | None = None,
    edge_nu: float | None = None,
    tail: TailSpec | None = None,
    label: str = "general",
) -> ServiceDistribution:
    """Wrap a user density on [0, inf) (or [0, support]) with declared analytic metadata."""
    upper = np.inf if support is None else support
    mass, _ = integrate.quad(density, 0.0, upper, epsabs=QUAD_EPSABS, limit=200)
    if abs(mass - 1.0) > 1e-8:
        raise ValueError(f"Density integrates to {mass}, expected 1.")
    m1, _ = integrate.quad(lambda y: y * density(y), 0.0, upper, epsabs=QUAD_EPSABS, limit=200)
    kind = Kind.GENERAL if support is None else Kind.FINITE_SUPPORT
    if support is not None and (edge_alpha is None or edge_nu is None):
        raise ValueError("Finite-support densities need edge_alpha and edge_nu.")
    return ServiceDistribution(
        kind,
        mu=1.0 / m1,
        support=support,
        edge_alpha=edge_alpha,
        edge_nu=edge_nu,
        small_alpha=small_alpha,
        small_nu=small_nu,
        tail=tail,
        abscissa=abscissa if support is None else math.inf,
        label=label,
        density_fn=density,
    )


def with_tail(dist: ServiceDistribution, tail: TailSpec) -> ServiceDistribution:
    label = f"{dist.label};tail:M={tail.M:g},N={tail.N:g},q={tail.q:g},r={tail.r:g}"
    return replace(dist, tail=tail, label=label)


# Analytic properties


def analyticity_abscissa(dist: ServiceDistribution) -> float:
    """epsilon_0: b-hat is analytic for Re(tau) > -epsilon_0."""
    if dist.is_erlang:
        return dist.k * dist.mu
    if dist.kind in (Kind.DETERMINISTIC, Kind.FINITE_SUPPORT):
        return math.inf
    return math.inf if dist.abscissa is None else dist.abscissa


def _check_domain(dist: ServiceDistribution, tau: complex) -> None:
    eps0 = analyticity_abscissa(dist)
    if complex(tau).real <= -eps0:
        raise DomainError(f"tau={tau} lies left of the analyticity abscissa -{eps0:g}.")


def _upper(dist: ServiceDistribution) -> float:
    return np.inf if dist.support is None else dist.support


def density(dist: ServiceDistribution, y: float) -> float:
    if y < 0:
        return 0.0
    if dist.is_erlang:
        k, mu = dist.k, dist.mu
        return float((k * mu) ** k * y ** (k - 1) * math.exp(-k * mu * y) / math.factorial(k - 1))
    if dist.kind == Kind.DETERMINISTIC:
        raise UnsupportedError("Deterministic service has no density.")
    if dist.density_fn is not None:
        return float(dist.density_fn(y))
    assert dist.support is not None
    return 1.0 / dist.support if y <= dist.support else 0.0


def _moment_integral(dist: ServiceDistribution, tau: complex, order: int) -> complex:
    """int_0^inf (-y)^order e^{-tau y} b(y) dy by adaptive quadrature."""
    tau = complex(tau)
    sign = -1.0 if order % 2 else 1.0

    def part(y: float, use_imag: bool) -> float:
        value = sign * y**order * np.exp(-tau * y) * density(dist, y)
        return float(value.imag if use_imag else value.real)

    upper = _upper(dist)
    real, _ = integrate.quad(part, 0.0, upper, args=(False,), epsabs=QUAD_EPSABS, limit=200)
    if tau.imag == 0.0:
        return complex(real, 0.0)
    imag, _ = integrate.quad(part, 0.0, upper, args=(True,), epsabs=QUAD_EPSABS, limit=200)
    return complex(real, imag)


def lst(dist: ServiceDistribution, tau: complex) -> complex:
    _check_domain(dist, tau)
    tau = complex(tau)
    if dist.is_erlang:
        km = dist.k * dist.mu
        return (km / (km + tau)) ** dist.k
    if dist.kind == Kind.DETERMINISTIC:
        return complex(np.exp(-tau / dist.mu))
    if dist.kind == Kind.FINITE_SUPPORT and dist.density_fn is None:
        assert dist.support is not None
        z = dist.support * tau
        if abs(z) < 1e-3:
            return sum(((-z) ** n / math.factorial(n + 1) for n in range(7)), 0j)
        return complex((1.0 - np.exp(-z)) / z)
    return _moment_integral(dist, tau, 0)


def lst_deriv(dist: ServiceDistribution, tau: complex, order: int) -> complex:
    if not 1 <= order <= MAX_DERIV_ORDER:
        raise ValueError(f"Derivative order must be in 1..{MAX_DERIV_ORDER}, got {order}.")
    _check_domain(dist, tau)
    tau = complex(tau)
    if dist.is_erlang:
        k, km = dist.k, dist.k * dist.mu
        return km**k * (-1) ** order * float(special.poch(k, order)) * (km + tau) ** (-k - order)
    if dist.kind == Kind.DETERMINISTIC:
        return (-1.0 / dist.mu) ** order * complex(np.exp(-tau / dist.mu))
    return _moment_integral(dist, tau, order)


def moment(dist: ServiceDistribution, k: int) -> float:
    if k < 0:
        raise ValueError(f"Moment order must be nonnegative, got {k}.")
    if k == 0:
        return 1.0
    if dist.is_erlang:
        shape = dist.k
        return float(special.gamma(shape + k) / (special.gamma(shape) * (shape * dist.mu) ** k))
    if dist.kind == Kind.DETERMINISTIC:
        return dist.mu ** (-k)
    if dist.kind == Kind.FINITE_SUPPORT and dist.density_fn is None:
        assert dist.support is not None
        return dist.support**k / (k + 1)
    return ((-1) ** k * _moment_integral(dist, 0.0, k)).real


def moments(dist: ServiceDistribution, up_to: int = 5) -> list[float]:
    return [moment(dist, j) for j in range(up_to + 1)]


def small_y_params(dist: ServiceDistribution) -> tuple[float, float]:
    """(alpha, nu) with b(y) ~ alpha y^(nu-1) as y -> 0."""
    if dist.is_erlang:
        k = dist.k
        return (k * dist.mu) ** k / math.factorial(k - 1), float(k)
    if dist.kind == Kind.DETERMINISTIC:
        raise UnsupportedError("Deterministic service has no density near y=0.")
    if dist.small_alpha is None or dist.small_nu is None:
        raise UnsupportedError(f"Small-y behaviour was not declared for {dist.label!r}.")
    return dist.small_alpha, dist.small_nu


def tail_spec(dist: ServiceDistribution) -> TailSpec:
    if dist.tail is not None:
        return dist.tail
    if dist.is_erlang:
        k, mu = dist.k, dist.mu
        return TailSpec(M=(k * mu) ** k / math.factorial(k - 1), N=k * mu, q=k - 1.0, r=1.0)
    raise UnsupportedError(f"No exponential tail declared for {dist.label!r}.")


def edge_params(dist: ServiceDistribution) -> tuple[float, float, float]:
    """(A, alpha*, nu*) for finite-support kinds."""
    if dist.kind != Kind.FINITE_SUPPORT:
        raise UnsupportedError(f"{dist.label!r} does not have finite support.")
    assert dist.support is not None and dist.edge_alpha is not None and dist.edge_nu is not None
    return dist.support, dist.edge_alpha, dist.edge_nu


def expect(dist: ServiceDistribution, fn: Callable[[float], float]) -> float:
    """E[fn(Y)] for a service time Y."""
    if dist.kind == Kind.DETERMINISTIC:
        return fn(1.0 / dist.mu)
    value, _ = integrate.quad(
        lambda y: fn(y) * density(dist, y), 0.0, _upper(dist), epsabs=QUAD_EPSABS, limit=400
    )
    return float(value)


def sample(dist: ServiceDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    if dist.is_erlang:
        return rng.gamma(dist.k, 1.0 / (dist.k * dist.mu), size)
    if dist.kind == Kind.DETERMINISTIC:
        return np.full(size, 1.0 / dist.mu)
    if dist.kind == Kind.FINITE_SUPPORT and dist.density_fn is None:
        assert dist.support is not None
        return rng.uniform(0.0, dist.support, size)
    grid, cdf = _cdf_table(dist)
    return np.interp(rng.random(size), cdf, grid)


def _cdf_table(dist: ServiceDistribution) -> tuple[np.ndarray, np.ndarray]:
    upper = dist.support
    if upper is None:
        upper = 10.0 / dist.mu
        while integrate.quad(lambda y: density(dist, y), upper, np.inf)[0] > 1e-10:
            upper *= 2.0
    grid = np.linspace(0.0, upper, 8193)
    values = np.array([density(dist, float(y)) for y in grid])
    cdf = integrate.cumulative_trapezoid(values, grid, initial=0.0)
    return grid, cdf / cdf[-1]


# Spec-string parsing

_FIELDS: dict[str, tuple[str, ...]] = {
    "exp": ("mu",),
    "erlang": ("k", "mu"),
    "det": ("mu",),
    "uniform": ("a",),
    "tail": ("M", "N", "q", "r"),
}

_SEGMENT = re.compile(r"[;+]")


def _parse_segment(segment: str, offset: int) -> tuple[str, dict[str, float]]:
    name, sep, rest = segment.partition(":")
    name = name.strip()
    if name not in _FIELDS:
        raise ValueError(f"Unknown distribution kind {name!r} at position {offset}.")
    if not sep:
        raise ValueError(f"Missing ':' after {name!r} at position {offset + len(segment)}.")
    values: dict[str, float] = {}
    pos = offset + len(name) + 1
    for item in rest.split(","):
        key, eq, raw = item.partition("=")
        key = key.strip()
        if not eq or key not in _FIELDS[name]:
            raise ValueError(f"Unexpected field {key!r} for {name!r} at position {pos}.")
        values[key] = coerce_float(raw, context=f"field {key!r} at position {pos + len(key) + 1}")
        pos += len(item) + 1
    missing = [key for key in _FIELDS[name] if key not in values]
    if missing:
        raise ValueError(f"Missing field {missing[0]!r} for {name!r} at position {offset}.")
    return name, values


def parse_dist_spec(text: str) -> ServiceDistribution:
    """Parse `exp:mu=1`, `erlang:k=2,mu=1`, `det:mu=1`, `uniform:a=2` with optional `;tail:...`."""
    segments: list[tuple[str, int]] = []
    start = 0
    for match in _SEGMENT.finditer(text):
        segments.append((text[start : match.start()], start))
        start = match.end()
    segments.append((text[start:], start))

    base: ServiceDistribution | None = None
    tail: TailSpec | None = None
    for segment, offset in segments:
        name, values = _parse_segment(segment, offset)
        if name == "tail":
            try:
                tail = TailSpec(**values)
            except ValueError as exc:
                raise ValueError(f"{exc} (tail at position {offset})") from exc
            continue
        if base is not None:
            raise ValueError(f"Second base kind {name!r} at position {offset}.")
        if name == "erlang":
            k = values["k"]
            if k != int(k) or k < 1:
                raise ValueError(f"Field 'k' must be a positive integer at position {offset}.")
            base = erlang(int(k), values["mu"])
        elif name == "exp":
            base = exponential(values["mu"])
        elif name == "det":
            base = deterministic(values["mu"])
        else:
            base = uniform(values["a"])
    if base is None:
        raise ValueError("Distribution spec names no base kind.")
    return with_tail(base, tail) if tail is not None else base
