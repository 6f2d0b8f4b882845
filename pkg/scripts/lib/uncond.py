"""Unconditional sojourn density p(t): thin-tail, heavy-traffic and finite-support expansions."""

from __future__ import annotations

import logging
import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass, field
from fractions import Fraction

from scipy import integrate, optimize

from lib import UnsupportedError
from lib.asymptotic import HEAVY_EPS, matching_coeffs
from lib.dist import (
    ModelParams,
    ServiceDistribution,
    density,
    edge_params,
    expect,
    moment,
    tail_spec,
)
from lib.inversion import DensityValue, denominator_h
from lib.roots import (
    CriticalPair,
    critical_pair,
    erlang_critical_pair,
    s_c,
    s_c_prime,
    spectral_B1,
    spectral_C1,
    spectral_D1,
    spectral_G,
    spectral_v,
    v1_derivatives,
    xhat,
)

logger = logging.getLogger(__name__)

LARGE_T = 50.0
LARGE_T_OVER_A = 30.0
_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class TailExpansion:
    """prefactor * t^power * exp(sum coef * t^p - phi(t)).

    rates maps an exponent power p to its coefficient; phi carries the part of the exponent that
    has no fixed power form (the minimised phi(xi*(t), t) for 1 < r < 2).
    """

    prefactor: float
    rates: dict[float, float]
    power: float
    regime: str
    phi: Callable[[float], float] | None = field(default=None, compare=False, repr=False)
    phi_slope: Callable[[float], float] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.rates.get(1.0, -1.0) >= 0.0:
            raise ValueError("Leading tail rate must be negative.")

    def log_value(self, t: float) -> float:
        total = math.log(self.prefactor) + self.power * math.log(t)
        total += sum(coef * t**p for p, coef in self.rates.items())
        if self.phi is not None:
            total -= self.phi(t)
        return total

    def value(self, t: float) -> float:
        return math.exp(self.log_value(t))

    def log_slope(self, t: float) -> float:
        slope = self.power / t + sum(coef * p * t ** (p - 1.0) for p, coef in self.rates.items())
        if self.phi_slope is not None:
            slope -= self.phi_slope(t)
        return slope


def subexponential_power(r: Fraction) -> Fraction:
    """Power of t in the subexponential correction of the tail: r/(r+2)."""
    return r / (r + 2)


# Fixed rho, thin tails


def _tail_r1(params: ModelParams, pair: CriticalPair) -> TailExpansion:
    tail = tail_spec(params.dist)
    M, N, q = tail.M, tail.N, tail.q
    lam, s0, tau0, b2, b3 = params.lam, pair.s0, pair.tau0, pair.b2, pair.b3
    kappa = lam * b2
    gap = N + tau0
    alpha = (
        M * params.eps * tau0**2 / (math.sqrt(6.0) * s0**2 * gap ** ((q - 1.0) / 3.0))
        * math.pi ** ((4.0 * q + 5.0) / 6.0)
        * kappa ** ((2.0 * q + 7.0) / 6.0)
        * math.exp(-gap * (6.0 * b2 + tau0 * b3) / (3.0 * tau0 * b2))
    )
    gamma = 1.5 * gap ** (2.0 / 3.0) * (math.pi**2 * kappa) ** (1.0 / 3.0)
    return TailExpansion(alpha, {1.0: s0, 1.0 / 3.0: -gamma}, (2.0 * q - 5.0) / 6.0, "T23-r1")


def _xi_seed(
    r: float, N: float, kappa_pi: float, tau0: float, b2: float, b3: float, t: float
) -> float:
    nr = N * r
    seed = (kappa_pi / nr) ** (1.0 / (r + 2.0))
    seed += (
        tau0 * kappa_pi ** ((2.0 - r) / (r + 2.0))
        / ((r + 2.0) * nr ** (4.0 / (r + 2.0)))
        * t ** ((1.0 - r) / (r + 2.0))
    )
    if r <= 1.5:
        seed += (
            (5.0 - r) * tau0**2 * kappa_pi ** ((3.0 - 2.0 * r) / (r + 2.0))
            / (2.0 * (r + 2.0) ** 2 * nr ** (7.0 / (r + 2.0)))
            * t ** (2.0 * (1.0 - r) / (r + 2.0))
        )
    else:
        seed += (6.0 * b2 + tau0 * b3) / ((r + 2.0) * tau0 * b2) * t ** (-1.0 / (r + 2.0))
    return seed


@dataclass(frozen=True)
class _XiProblem:
    """phi(xi, t) and its xi-derivatives for tails with 1 < r < 2."""

    N: float
    r: float
    B: float
    C: float
    tau0: float
    kappa_pi: float
    b2: float
    b3: float

    @property
    def powers(self) -> tuple[float, float, float]:
        r = self.r
        return r / (r + 2.0), 1.0 / (r + 2.0), (r - 1.0) / (r + 2.0)

    def phi(self, xi: float, t: float) -> float:
        p1, p2, p3 = self.powers
        return (
            (self.N * xi**self.r - self.B / xi**2) * t**p1
            + self.tau0 * xi * t**p2
            - self.C / xi**3 * t**p3
        )

    def phi_xi(self, xi: float, t: float) -> float:
        p1, p2, p3 = self.powers
        return (
            (self.N * self.r * xi ** (self.r - 1.0) + 2.0 * self.B / xi**3) * t**p1
            + self.tau0 * t**p2
            + 3.0 * self.C / xi**4 * t**p3
        )

    def phi_xixi(self, xi: float, t: float) -> float:
        p1, _, p3 = self.powers
        return (
            self.N * self.r * (self.r - 1.0) * xi ** (self.r - 2.0) - 6.0 * self.B / xi**4
        ) * t**p1 - 12.0 * self.C / xi**5 * t**p3

    def phi_t(self, xi: float, t: float) -> float:
        p1, p2, p3 = self.powers
        return (
            p1 * (self.N * xi**self.r - self.B / xi**2) * t ** (p1 - 1.0)
            + p2 * self.tau0 * xi * t ** (p2 - 1.0)
            - p3 * self.C / xi**3 * t ** (p3 - 1.0)
        )

    def seed(self, t: float) -> float:
        return _xi_seed(self.r, self.N, self.kappa_pi, self.tau0, self.b2, self.b3, t)

    def xi_star(self, t: float) -> float:
        xi = self.seed(t)
        for _ in range(50):
            step = self.phi_xi(xi, t) / self.phi_xixi(xi, t)
            if xi - step <= 0.0:
                break
            xi -= step
            if abs(step) < 1e-14 * xi:
                return xi
        lo, hi = 0.5 * xi, 2.0 * xi
        while self.phi_xi(lo, t) > 0.0:
            lo *= 0.5
        while self.phi_xi(hi, t) < 0.0:
            hi *= 2.0
        return float(optimize.brentq(self.phi_xi, lo, hi, args=(t,), xtol=1e-15))


def _xi_problem(params: ModelParams, pair: CriticalPair) -> _XiProblem:
    tail = tail_spec(params.dist)
    coeffs = matching_coeffs(params, pair)
    return _XiProblem(
        N=tail.N,
        r=tail.r,
        B=coeffs.B,
        C=coeffs.C,
        tau0=pair.tau0,
        kappa_pi=math.pi**2 * params.lam * pair.b2,
        b2=pair.b2,
        b3=pair.b3,
    )


def _tail_r12(params: ModelParams, pair: CriticalPair) -> TailExpansion:
    tail = tail_spec(params.dist)
    M, N, q, r = tail.M, tail.N, tail.q, tail.r
    problem = _xi_problem(params, pair)
    kappa = params.lam * pair.b2
    alpha = (
        params.eps * M * pair.tau0**2 / (math.sqrt(2.0 * (r + 2.0)) * pair.s0**2)
        * (N * r) ** ((1.0 - q) / (r + 2.0))
        * math.pi ** (1.5 + 2.0 * (q - 1.0) / (r + 2.0))
        * kappa ** (1.5 + (q - 1.0) / (r + 2.0))
    )
    return TailExpansion(
        alpha,
        {1.0: pair.s0},
        (2.0 * q - r - 4.0) / (2.0 * (r + 2.0)),
        "T23-r12",
        phi=lambda t: problem.phi(problem.xi_star(t), t),
        phi_slope=lambda t: problem.phi_t(problem.xi_star(t), t),
    )


def xi_star_residual(params: ModelParams, t: float) -> tuple[float, float, float]:
    """(xi*, phi_xi(xi*), phi_xixi(xi*) xi*) at time t for 1 < r < 2."""
    problem = _xi_problem(params, critical_pair(params))
    xi = problem.xi_star(t)
    return xi, problem.phi_xi(xi, t), problem.phi_xixi(xi, t) * xi


def _tail_r2(params: ModelParams, pair: CriticalPair) -> TailExpansion:
    tail = tail_spec(params.dist)
    M, N, q = tail.M, tail.N, tail.q
    tau0, s0 = pair.tau0, pair.s0
    coeffs = matching_coeffs(params, pair)
    B, C = coeffs.B, coeffs.C
    D = coeffs.D if coeffs.D is not None else 0.0
    kappa = params.lam * pair.b2
    alpha = (
        params.eps * M * math.pi ** (q / 2.0 + 1.0) * tau0**2 * kappa ** ((q + 5.0) / 4.0)
        / (2.0 ** ((q + 5.0) / 4.0) * s0**2 * N ** ((q - 1.0) / 4.0))
        * math.exp((3.0 * N * C - tau0 * B) ** 2 / (16.0 * N * B**2) - N * D / B)
    )
    gamma = math.pi * math.sqrt(2.0 * N * kappa)
    delta = -(N * C + tau0 * B) / (N**0.25 * abs(B) ** 0.75)
    return TailExpansion(
        alpha, {1.0: s0, 0.5: -gamma, 0.25: -delta}, (q - 3.0) / 4.0, "T23-r2"
    )


def tail_expansion(params: ModelParams) -> TailExpansion:
    tail = tail_spec(params.dist)
    pair = critical_pair(params)
    if tail.r == 1.0:
        return _tail_r1(params, pair)
    if 1.0 < tail.r < 2.0:
        return _tail_r12(params, pair)
    if tail.r == 2.0:
        return _tail_r2(params, pair)
    raise UnsupportedError(f"Tail exponent r={tail.r} is outside [1, 2].")


def erlang_tail_constants(k: int, mu: float, lam: float) -> tuple[float, float, float]:
    """(alpha1, gamma1, s0) for Erlang(k) service in closed form."""
    rho = lam / mu
    w = rho ** (1.0 / (k + 1))
    bracket = rho - (k + 1) * w + k
    alpha = (
        math.pi ** ((4 * k + 1) / 6.0)
        * k ** ((2 * k + 11) / 6.0)
        * (k + 1) ** ((2 * k + 5) / 6.0)
        * mu ** ((2 * k - 1) / 6.0)
        * (1.0 - rho)
        * (1.0 - w) ** 2
        / (
            math.sqrt(6.0) * math.factorial(k - 1)
            * rho ** ((4 * k + 1) / (6 * k + 6)) * bracket**2
        )
        * math.exp((k + 2 - (k - 4) * w) / (3.0 * (1.0 - w)))
    )
    gamma = 1.5 * math.pi ** (2.0 / 3.0) * (k * (k + 1)) ** (1.0 / 3.0) * (
        mu**k * lam
    ) ** (1.0 / (3 * (k + 1)))
    s0, _ = erlang_critical_pair(k, mu, lam)
    return alpha, gamma, s0


def pt_tail_fixed(params: ModelParams, t: float) -> DensityValue:
    """Large-t expansion of p(t) at fixed rho for b(y) ~ M y^q exp(-N y^r)."""
    expansion = tail_expansion(params)
    s0 = expansion.rates[1.0]
    out = DensityValue(t=t, x=None, value=expansion.value(t), regime=expansion.regime)
    if t * abs(s0) < LARGE_T:
        out.notes.append("t |s0| < 50: expansion may be inaccurate")
        logger.warning("Tail expansion used at t=%g with t|s0|=%g < %g.", t, t * abs(s0), LARGE_T)
    return out


# Heavy traffic


def _h_mu0(dist: ServiceDistribution, x: float, method: str) -> float:
    return denominator_h(dist, dist.mu, 0.0, x, method=method).real


def heavy_leading(dist: ServiceDistribution, eps: float, T: float) -> float:
    """eps E[e^{-T/x}/x] over the service distribution."""

    def kernel(x: float) -> float:
        if x <= 0.0 or T / x > _EXP_LIMIT:
            return 0.0
        return math.exp(-T / x) / x

    return eps * expect(dist, kernel)


def heavy_correction(dist: ServiceDistribution, T: float, method: str = "auto") -> float:
    """S(T) = -E[(T - 2x) e^{-T/x} / x^4 H_mu(0, x)]."""

    def kernel(x: float) -> float:
        if x <= 0.0 or T / x > _EXP_LIMIT:
            return 0.0
        return (T - 2.0 * x) * math.exp(-T / x) / x**4 * _h_mu0(dist, x, method)

    return -expect(dist, kernel)


def pt_heavy_T(params: ModelParams, t: float, *, method: str = "auto") -> DensityValue:
    """p(t) for t = T/eps: leading eps-integral plus the eps^2 S(T) correction."""
    eps = params.eps
    T = eps * t
    dist = params.dist
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        leading = heavy_leading(dist, eps, T)
        correction = heavy_correction(dist, T, method)
    out = DensityValue(
        t=t,
        x=None,
        value=leading + eps**2 * correction,
        regime="T24-C1",
        converged=not caught,
        terms={"T": T, "leading": leading, "S": correction},
    )
    if caught:
        out.notes.append("quadrature reported an integration warning")
    return out


def _omega_curvature(dist: ServiceDistribution, X: float, sigma: float) -> tuple[float, ...]:
    c = dist.mu * moment(dist, 2)
    v, dv, d2v = v1_derivatives(dist, X)
    return c, v, dv, d2v, sigma * (dv * dv + v * d2v)


def _c1_of_x(dist: ServiceDistribution, X: float) -> float:
    mu = dist.mu
    m2, m3 = moment(dist, 2), moment(dist, 3)
    v = spectral_v(mu * m2, X, 1)
    return spectral_C1(v, X, mu, m2, m3)


def pt_heavy_deep(params: ModelParams, t: float) -> DensityValue:
    """p(t) for t = sigma / eps^(r+2): Laplace evaluation at the minimiser X-hat."""
    dist, eps = params.dist, params.eps
    tail = tail_spec(dist)
    M, N, q, r = tail.M, tail.N, tail.q, tail.r
    sigma = t * eps ** (r + 2.0)
    X = xhat(dist, sigma)
    mu = dist.mu
    m2, m3 = moment(dist, 2), moment(dist, 3)
    c, v, _, _, curv = _omega_curvature(dist, X, sigma)
    psi0 = N * X**r - spectral_B1(v, c) * sigma
    c1 = spectral_C1(v, X, mu, m2, m3)
    g = spectral_G(v, X, c)
    terms = {"sigma": sigma, "X_hat": X, "v1": v, "psi0": psi0, "C1": c1}
    if r < 2.0:
        denom = curv + r * (r - 1.0) * c * N * X ** (r - 2.0)
        log_value = (
            0.5 * math.log(2.0 * math.pi * c) + math.log(M) + q * math.log(X) + math.log(g)
            + (1.0 + r / 2.0 - q) * math.log(eps) - 0.5 * math.log(denom)
            - psi0 * eps**-r + c1 * sigma * eps ** (1.0 - r)
        )
        regime = "T24-C2"
    else:
        m4 = moment(dist, 4)
        h = 1e-4 * X
        c1_slope = (_c1_of_x(dist, X + h) - _c1_of_x(dist, X - h)) / (2.0 * h)
        d1 = spectral_D1(v, X, mu, m2, m3, m4)
        denom = curv + 2.0 * c * N
        extra = c * (c1_slope * sigma) ** 2 / (4.0 * c * N + 2.0 * curv)
        log_value = (
            0.5 * math.log(2.0 * math.pi * c) + math.log(M) + q * math.log(X) + math.log(g)
            + (2.0 - q) * math.log(eps) - 0.5 * math.log(denom)
            - psi0 * eps**-2 + c1 * sigma / eps + d1 * sigma + extra
        )
        terms.update({"D1": d1, "C1_slope": c1_slope})
        regime = "T24-C3"
    return DensityValue(t=t, x=None, value=math.exp(log_value), regime=regime, terms=terms)


def pt_heavy_deep_integral(params: ModelParams, t: float) -> float:
    """Direct quadrature over X of M (X/eps)^q e^{-N (X/eps)^r} eps e^{s_d Theta} G(v1(X))."""
    dist, eps = params.dist, params.eps
    tail = tail_spec(dist)
    M, N, q, r = tail.M, tail.N, tail.q, tail.r
    mu = dist.mu
    m2, m3 = moment(dist, 2), moment(dist, 3)
    c = mu * m2
    theta = eps * eps * t
    sigma = t * eps ** (r + 2.0)
    centre = xhat(dist, sigma)
    scale = math.exp(-(N * centre**r - spectral_B1(spectral_v(c, centre, 1), c) * sigma) / eps**r)

    def integrand(X: float) -> float:
        v = spectral_v(c, X, 1)
        rate = spectral_B1(v, c) + eps * spectral_C1(v, X, mu, m2, m3)
        log_body = -N * (X / eps) ** r + rate * theta
        body = math.exp(log_body) / scale
        return M * (X / eps) ** q * eps * body * spectral_G(v, X, c)

    value, _ = integrate.quad(integrand, centre * 0.2, centre * 3.0, epsabs=0.0, epsrel=1e-9)
    return value * scale


# Finite support


def pt_finite_support(
    params: ModelParams, t: float, *, heavy: bool | None = None
) -> DensityValue:
    """Edge-controlled p(t) for densities vanishing beyond A."""
    dist, eps = params.dist, params.eps
    A, alpha, nu = edge_params(dist)
    heavy = eps <= HEAVY_EPS if heavy is None else heavy
    if not heavy:
        rate = s_c(params, A)
        slope = s_c_prime(params, A)
        value = (
            eps * alpha * math.gamma(nu) * rate.J * math.exp(rate.s_c * t) / (slope * t) ** nu
        )
        out = DensityValue(
            t=t,
            x=None,
            value=value,
            regime="T25-C1",
            terms={"s_c": rate.s_c, "s_c_prime": slope, "J": rate.J},
        )
        if rate.extended:
            out.notes.append("s_c found in the extended scan range")
        return out
    T = eps * t
    if T / A > LARGE_T_OVER_A:
        value = finite_support_large_t(params, t)
        return DensityValue(t=t, x=None, value=value, regime="T25-C2-large-T", terms={"T": T})

    def kernel(x: float) -> float:
        if x <= 0.0 or T / x > _EXP_LIMIT:
            return 0.0
        return density(dist, x) * math.exp(-T / x) / x

    value, err = integrate.quad(kernel, 0.0, A, epsabs=1e-14, limit=200)
    return DensityValue(
        t=t, x=None, value=eps * value, regime="T25-C2", error=err, terms={"T": T}
    )


def finite_support_large_t(params: ModelParams, t: float) -> float:
    A, alpha, nu = edge_params(params.dist)
    T = params.eps * t
    return params.eps * alpha * math.gamma(nu) * A ** (2.0 * nu - 1.0) * T**-nu * math.exp(-T / A)

