"""Asymptotic expansions of the conditional sojourn density p(t|x).

Fixed-load cases are tagged T21-*, heavy-traffic cases (rho = 1 - eps, X = eps x, T = eps t,
Theta = eps T, Z = X / sqrt(eps)) are tagged T22-*. Every evaluator computes out of regime
too; it only records a note and logs a warning. The Erlang evaluators reach the same values
through closed forms and serve as an independent path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from lib import UnsupportedError
from lib.dist import (
    ModelParams,
    ServiceDistribution,
    lst_deriv,
    moment,
    small_y_params,
)
from lib.inversion import (
    ContourSpec,
    DensityValue,
    _erlang_roots,
    _euler_inversion,
    atom_mass,
    denominator_h,
    erlang_h_at_zero,
    scaled_denominator,
    talbot,
)
from lib.roots import (
    CriticalPair,
    critical_pair,
    erlang_critical_pair,
    erlang_decay_rate,
    erlang_Q_roots,
    erlang_saddle,
    heavy_saddle,
    s_c,
    saddle,
    spectral_B1,
    spectral_C1,
    spectral_G,
    spectral_v,
)
from lib.specfun import hyper_0Fk, pcf_D_scaled_table

logger = logging.getLogger(__name__)

SERIES_RTOL = 1e-14
SERIES_CAP = 10_000
HEAVY_EPS = 0.1
SOFT_EPS_LIMIT = 0.2
LONGTIME_THETA = 3.0
SPECTRAL_THETA = 0.2
DEFAULT_ROOTS = 20
PCF_TERMS = 29

T21_CASES = ("1", "2", "3", "4", "match")
T22_CASES = ("1", "2", "3", "4", "5", "6a", "6b", "6c")


@dataclass
class RegimeSelection:
    regime: str
    rationale: str
    scales: dict[str, float] = field(default_factory=lambda: {})
    variant: str | None = None


@dataclass(frozen=True)
class MatchingCoeffs:
    B: float
    C: float
    D: float | None = None


def heavy_scales(params: ModelParams, t: float, x: float) -> dict[str, float]:
    eps = params.eps
    return {
        "eps": eps,
        "X": eps * x,
        "T": eps * t,
        "Theta": eps * eps * t,
        "Z": eps * x / math.sqrt(eps),
    }


# Regime selection


def select_regime(params: ModelParams, t: float, x: float) -> RegimeSelection:
    if not t > x > 0:
        raise ValueError(f"Need t > x > 0, got t={t}, x={x}.")
    eps = params.eps
    if eps > HEAVY_EPS:
        ratio = t / x
        scales = {"ratio": ratio, "t/x^2": t / x**2, "t/x^3": t / x**3}
        try:
            _, nu = small_y_params(params.dist)
        except UnsupportedError:
            nu = None
        if nu is not None:
            scales["x(t-x)^nu"] = x * (t - x) ** nu
            if scales["x(t-x)^nu"] <= 10.0:
                return RegimeSelection("T21-C1", "x (t - x)^nu <= 10", scales)
        if ratio <= 20.0:
            return RegimeSelection("T21-C2", "t/x <= 20", scales)
        if scales["t/x^2"] <= 10.0:
            return RegimeSelection("T21-C3", "t/x^2 <= 10", scales)
        if scales["t/x^3"] <= 10.0:
            return RegimeSelection("T21-match", "t/x^3 <= 10", scales)
        return RegimeSelection("T21-C4", "x fixed, t large", scales)

    scales = heavy_scales(params, t, x)
    X, T, theta, Z = scales["X"], scales["T"], scales["Theta"], scales["Z"]
    if theta >= LONGTIME_THETA:
        return RegimeSelection("T22-C6", "Theta >= 3: first spectral term", scales, "longtime")
    if theta >= SPECTRAL_THETA:
        return RegimeSelection("T22-C6", "Theta >= 0.2: spectral sum", scales, "6c")
    if X <= 10.0 * eps and T <= 10.0 * eps:
        return RegimeSelection("T22-C1", "x and t of order one", scales)
    if X <= 10.0 * eps:
        return RegimeSelection("T22-C2", "x of order one, T of order one", scales)
    try:
        _, nu = small_y_params(params.dist)
        if T - X <= 10.0 * eps ** (1.0 + 1.0 / nu):
            return RegimeSelection("T22-C3", "T - X = O(eps^(1+1/nu))", scales)
    except UnsupportedError:
        pass
    if Z <= 3.0:
        return RegimeSelection("T22-C5", "X = O(sqrt(eps))", scales)
    return RegimeSelection("T22-C4", "X, T of order one with T/X > 1", scales)


def _check_regime(params: ModelParams, t: float, x: float, tag: str, out: DensityValue) -> None:
    auto = select_regime(params, t, x)
    if not tag.startswith(auto.regime):
        out.notes.append(f"outside regime: auto-selected {auto.regime}")
        logger.warning("%s evaluated at t=%g x=%g; auto-selected %s.", tag, t, x, auto.regime)


# Shared series


def _log_power_series(log_a: float, log_u: float, nu: float) -> tuple[float, bool]:
    """log of sum_{m>=1} a^m u^(nu m - 1) / (m! Gamma(nu m))."""
    logs: list[float] = []
    best = -math.inf
    for m in range(1, SERIES_CAP + 1):
        term = m * log_a + (nu * m - 1.0) * log_u - math.lgamma(m + 1) - math.lgamma(nu * m)
        logs.append(term)
        best = max(best, term)
        if m > 2 and term < logs[-2] and term - best < math.log(SERIES_RTOL):
            return float(special.logsumexp(logs)), True
    return float(special.logsumexp(logs)), False


def theta_sum(b: float) -> float:
    """S(b) = sum_{n>=0} e^{-(2n+1)^2 b} (2 (2n+1)^2 b - 1), Poisson-dual form for b < 1."""
    total = 0.0
    if b >= 1.0:
        for n in range(SERIES_CAP):
            odd = (2 * n + 1) ** 2
            term = math.exp(-odd * b) * (2.0 * odd * b - 1.0)
            total += term
            if abs(term) < SERIES_RTOL * abs(total):
                break
        return total
    for k in range(1, SERIES_CAP):
        term = (-1) ** (k + 1) * k * k * math.exp(-math.pi**2 * k * k / (4.0 * b))
        total += term
        if abs(term) < SERIES_RTOL * abs(total):
            break
    return math.pi**2.5 / (4.0 * b**1.5) * total


def theta_sum_direct(b: float) -> float:
    total = 0.0
    for n in range(SERIES_CAP):
        odd = (2 * n + 1) ** 2
        term = math.exp(-odd * b) * (2.0 * odd * b - 1.0)
        total += term
        if n > 0 and abs(term) < SERIES_RTOL * abs(total):
            break
    return total


# Fixed load


def matching_coeffs(params: ModelParams, pair: CriticalPair | None = None) -> MatchingCoeffs:
    pair = pair or critical_pair(params)
    lam, tau0 = params.lam, pair.tau0
    b2, b3, b4 = pair.b2, pair.b3, pair.b4
    pi2 = math.pi**2
    B = -pi2 * lam * b2 / 2.0
    C = -pi2 * lam * (6.0 * b2 + tau0 * b3) / (3.0 * tau0)
    D = (pi2 * lam / (72.0 * tau0**2 * b2)) * (
        (3.0 * pi2 * b2 * b4 - (5.0 * pi2 + 12.0) * b3**2) * tau0**2
        - 144.0 * b2 * b3 * tau0
        - 432.0 * b2**2
    )
    return MatchingCoeffs(B, C, D)


def erlang_matching_coeffs(k: int, mu: float, lam: float) -> MatchingCoeffs:
    w = (lam / mu) ** (1.0 / (k + 1))
    pi2 = math.pi**2
    B = -pi2 * (k + 1) / (2.0 * k * mu * w)
    C = pi2 * (k + 1) * ((k - 4) * w - (k + 2)) / (3.0 * k * k * mu * mu * w * w * (w - 1.0))
    return MatchingCoeffs(B, C)


def _t21_case1(params: ModelParams, t: float, x: float) -> DensityValue:
    alpha, nu = small_y_params(params.dist)
    a = params.lam * alpha * math.gamma(nu) * x
    log_sum, ok = _log_power_series(math.log(a), math.log(t - x), nu)
    atom = atom_mass(params, x)
    value = params.eps * math.exp(-params.lam * x + log_sum)
    return DensityValue(t=t, x=x, value=value, atom=atom, regime="T21-C1", converged=ok)


def _t21_case2(params: ModelParams, t: float, x: float) -> DensityValue:
    point = saddle(params, t / x)
    lam, dist = params.lam, params.dist
    out = DensityValue(t=t, x=x, value=0.0, regime="T21-C2")
    if point.regime == "degenerate" or abs(point.s_star) < 1e-12:
        ratio_sq = 1.0 / params.eps**2
        b2 = moment(dist, 2)
        exponent = -(params.eps**3) * (t - x / params.eps) ** 2 / (2.0 * lam * b2 * x)
        out.notes.append("degenerate saddle: Gaussian limit")
    else:
        ratio_sq = (point.tau_star / point.s_star) ** 2
        b2 = lst_deriv(dist, point.tau_star, 2).real
        exponent = point.s_star * t - point.tau_star * x
    out.value = (
        params.eps * ratio_sq * (x / t) ** 2.5 / math.sqrt(2.0 * math.pi * x * lam * b2)
    ) * math.exp(exponent)
    out.terms = {"s_star": point.s_star, "tau_star": point.tau_star}
    return out


def _t21_case3(
    params: ModelParams, t: float, x: float, pair: CriticalPair | None = None
) -> DensityValue:
    pair = pair or critical_pair(params)
    kappa = params.lam * pair.b2
    b = x * x / (2.0 * kappa * t)
    pref = params.eps * pair.tau0**2 * math.sqrt(kappa) / (
        2.0**1.5 * math.sqrt(math.pi) * pair.s0**2 * t**2.5
    )
    value = pref * 2.0 * t * theta_sum(b) * math.exp(pair.s0 * t - pair.tau0 * x)
    return DensityValue(
        t=t, x=x, value=value, regime="T21-C3", terms={"b": b, "s0": pair.s0, "tau0": pair.tau0}
    )


def _t21_case4(params: ModelParams, t: float, x: float) -> DensityValue:
    rate = s_c(params, x)
    out = DensityValue(
        t=t,
        x=x,
        value=params.eps * rate.J * math.exp(rate.s_c * t),
        regime="T21-C4",
        terms={"s_c": rate.s_c, "J": rate.J},
    )
    if rate.extended:
        out.notes.append("s_c found in the extended scan range")
    return out


def _t21_match(
    params: ModelParams, t: float, x: float, *, with_d: bool = False
) -> DensityValue:
    pair = critical_pair(params)
    coeffs = matching_coeffs(params, pair)
    kappa = params.lam * pair.b2
    pref = params.eps * math.pi**2 * kappa**2 * pair.tau0**2 / (2.0 * pair.s0**2 * x**3)
    exponent = -pair.tau0 * x + pair.s0 * t + coeffs.B * t / x**2 + coeffs.C * t / x**3
    if with_d and coeffs.D is not None:
        exponent += coeffs.D * t / x**4
    return DensityValue(
        t=t,
        x=x,
        value=pref * math.exp(exponent),
        regime="T21-match",
        terms={"B": coeffs.B, "C": coeffs.C},
    )


def ptx_t21(
    params: ModelParams, t: float, x: float, case: str | int, *, with_d: bool = False
) -> DensityValue:
    """Fixed-load expansion of p(t|x) in the named case (1, 2, 3, 4 or match)."""
    key = str(case)
    if key not in T21_CASES:
        raise ValueError(f"Unknown fixed-load case {case!r}; expected one of {T21_CASES}.")
    if not t > x > 0:
        raise ValueError(f"Need t > x > 0, got t={t}, x={x}.")
    if key == "1":
        out = _t21_case1(params, t, x)
    elif key == "2":
        out = _t21_case2(params, t, x)
    elif key == "3":
        out = _t21_case3(params, t, x)
    elif key == "4":
        out = _t21_case4(params, t, x)
    else:
        out = _t21_match(params, t, x, with_d=with_d)
    _check_regime(params, t, x, out.regime, out)
    return out


def _erlang_kw(dist: ServiceDistribution) -> tuple[int, float]:
    if not dist.is_erlang:
        raise UnsupportedError(f"Closed forms need Erlang service, got {dist.label!r}.")
    return dist.k, dist.mu


def _erlang_b2(k: int, mu: float, tau: float) -> float:
    km = k * mu
    return k * (k + 1) * km**k / (km + tau) ** (k + 2)


def ptx_t21_erlang(params: ModelParams, t: float, x: float, case: str | int) -> DensityValue:
    """Erlang(k) closed-form counterpart of ptx_t21."""
    k, mu = _erlang_kw(params.dist)
    lam, eps = params.lam, params.eps
    rho = params.rho
    key = str(case)
    w = rho ** (1.0 / (k + 1))
    bracket = rho - (k + 1) * w + k
    out = DensityValue(t=t, x=x, value=0.0, regime=f"T21-{'C' + key if key != 'match' else key}")
    if key == "1":
        u = t - x
        lower = [1.0 + j / k for j in range(1, k)] + [2.0]
        series = hyper_0Fk(k, lower, lam * mu**k * x * u**k)
        out.value = (
            eps * lam * (k * mu) ** k * x * u ** (k - 1) * math.exp(-lam * x)
            / math.factorial(k - 1)
            * series
        )
        out.atom = eps * math.exp(-lam * x)
    elif key == "2":
        s_star, tau_star = erlang_saddle(k, mu, lam, t / x)
        b2 = _erlang_b2(k, mu, tau_star)
        out.value = (
            eps * (tau_star / s_star) ** 2 * (x / t) ** 2.5
            / math.sqrt(2.0 * math.pi * x * lam * b2)
            * math.exp(s_star * t - tau_star * x)
        )
    elif key == "3":
        s0, tau0 = erlang_critical_pair(k, mu, lam)
        pref = eps * k * math.sqrt(k * (k + 1)) * (1.0 - w) ** 2 / (
            2.0 * math.sqrt(2.0 * math.pi * mu) * math.sqrt(w) * bracket**2 * t**2.5
        )
        root = mu * w
        total = 0.0
        for n in range(SERIES_CAP):
            odd = (2 * n + 1) ** 2
            term = math.exp(-odd * k * root * x * x / (2.0 * (k + 1) * t)) * (
                2.0 * k / (k + 1) * odd * root * x * x - 2.0 * t
            )
            total += term
            if n > 0 and abs(term) < SERIES_RTOL * abs(total):
                break
        out.value = pref * total * math.exp(s0 * t - tau0 * x)
    elif key == "4":
        rate = erlang_decay_rate(k, mu, lam, x)
        out.value = eps * math.exp(rate.s_c * t) * rate.J
        out.terms.update({"s_c": rate.s_c, "J": rate.J})
    elif key == "match":
        s0, _ = erlang_critical_pair(k, mu, lam)
        coeffs = erlang_matching_coeffs(k, mu, lam)
        pref = eps * (k + 1) ** 2 * math.pi**2 * (1.0 - w) ** 2 / (
            2.0 * mu**2 * w**2 * bracket**2 * x**3
        )
        out.value = pref * math.exp(
            k * mu * (1.0 - w) * x + s0 * t + coeffs.B * t / x**2 + coeffs.C * t / x**3
        )
    else:
        raise ValueError(f"Unknown fixed-load case {case!r}.")
    return out


# Heavy traffic


def _c_scale(dist: ServiceDistribution) -> float:
    return dist.mu * moment(dist, 2)


def _heavy_case1(
    params: ModelParams, t: float, x: float, contour: ContourSpec | None, method: str
) -> DensityValue:
    dist, mu, eps = params.dist, params.mu, params.eps
    atom = eps * math.exp(-mu * x)

    def transform(s: complex) -> complex:
        den = scaled_denominator(dist, mu, 0.0, s, x, method=method)
        return eps / den.scaled - atom

    value, error, ok, _ = _euler_inversion(transform, t - x, contour or ContourSpec())
    return DensityValue(
        t=t, x=x, value=value, atom=atom, regime="T22-C1", error=error, converged=ok
    )


def _erlang_heavy_case1(k: int, mu: float, eps: float, t: float, x: float) -> DensityValue:
    """Erlang(k) heavy case 1; the inner integral reduces to the k + 1 poles of its kernel.

    With N(tau) = (tau - mu)(tau + k mu)^k + mu (k mu)^k = tau^2 prod_j (tau - Q_j), the double
    zero at tau = 0 cancels and the inner integral is sum_i e^{tau_i x} prod_j (tau_i - Q_j) / P'.
    """
    q_roots = erlang_Q_roots(k, mu)
    atom = eps * math.exp(-mu * x)

    def transform(s: complex) -> complex:
        roots, dp = _erlang_roots(k, mu, mu, s)
        reduced = np.ones_like(roots)
        for q in q_roots:
            reduced = reduced * (roots - q)
        inner = complex(np.sum(reduced * np.exp((roots - s) * x) / dp))
        return eps / (s * inner) - atom

    value, error, ok, _ = _euler_inversion(transform, t - x, ContourSpec())
    return DensityValue(
        t=t, x=x, value=value, atom=atom, regime="T22-C1", error=error, converged=ok
    )


def _heavy_case2(params: ModelParams, t: float, x: float, h: float) -> DensityValue:
    eps = params.eps
    T = eps * t
    value = eps / x * math.exp(-T / x) - eps**2 * (T - 2.0 * x) * math.exp(-T / x) / x**4 * h
    return DensityValue(
        t=t,
        x=x,
        value=value,
        regime="T22-C2",
        terms={"H": h, "delta_T": -(eps**2) * h / x**2},
    )


def _heavy_case3(params: ModelParams, t: float, x: float) -> DensityValue:
    eps, mu = params.eps, params.mu
    alpha, nu = small_y_params(params.dist)
    X, T = eps * x, eps * t
    t_star = (T - X) * eps ** (-1.0 - 1.0 / nu)
    log_sum, ok = _log_power_series(math.log(mu * alpha * math.gamma(nu) * X), math.log(t_star), nu)
    log_pref = -mu * X / eps + (1.0 - 1.0 / nu) * math.log(eps)
    return DensityValue(
        t=t,
        x=x,
        value=math.exp(log_pref + log_sum),
        regime="T22-C3",
        converged=ok,
        terms={"T_star": t_star, "delta_T_star": math.exp(log_pref)},
    )


def _heavy_case4_value(
    eps: float, X: float, T: float, s_hat: float, tau_hat: float, mu: float, b2: float
) -> float:
    pref = eps**1.5 * tau_hat**2 * (X / T) ** 2.5 / (
        s_hat**2 * math.sqrt(2.0 * math.pi * X * mu * b2)
    )
    return pref * math.exp((T * s_hat - X * tau_hat) / eps + T * (tau_hat - s_hat))


def _heavy_case4(params: ModelParams, t: float, x: float) -> DensityValue:
    eps, mu = params.eps, params.mu
    X, T = eps * x, eps * t
    point = heavy_saddle(params.dist, T / X)
    b2 = lst_deriv(params.dist, point.tau_star, 2).real
    value = _heavy_case4_value(eps, X, T, point.s_star, point.tau_star, mu, b2)
    return DensityValue(
        t=t,
        x=x,
        value=value,
        regime="T22-C4",
        terms={"s_hat": point.s_star, "tau_hat": point.tau_star},
    )


def heavy_case5(eps: float, c: float, Z: float, T: float, form: str = "auto") -> float:
    """Theta-series in Z for X = sqrt(eps) Z; Poisson-summed when Z^2/(c T) < 1."""
    if form == "auto":
        form = "poisson" if Z * Z / (c * T) < 1.0 else "theta"
    total = 0.0
    if form == "theta":
        for n in range(SERIES_CAP):
            term = math.exp(-((2 * n + 1) ** 2) * Z * Z / (2.0 * c * T))
            total += term
            if term < SERIES_RTOL * total:
                break
        return 2.0 * math.sqrt(2.0) * eps**1.5 / math.sqrt(c * math.pi * T) * total
    if form != "poisson":
        raise ValueError(f"Unknown Case 5 form {form!r}.")
    total = 1.0
    for n in range(1, SERIES_CAP):
        term = 2.0 * (-1) ** n * math.exp(-(n * n) * math.pi**2 * c * T / (2.0 * Z * Z))
        total += term
        if abs(term) < SERIES_RTOL * abs(total):
            break
    return eps**1.5 / Z * total


def heavy_case6a(eps: float, c: float, X: float, theta: float) -> float:
    """Single Bromwich integral in xi, inverted by fixed Talbot."""
    b = X / c

    def kernel(xi: np.ndarray) -> np.ndarray:
        w = np.sqrt(xi)
        decay = np.exp(-b * w)
        return w * decay / ((1.0 + w) ** 2 - (1.0 - w) ** 2 * decay * decay)

    inverse = talbot(kernel, theta / (2.0 * c))
    return 2.0 * eps**2 / c * math.exp(X / c - theta / (2.0 * c)) * inverse


def heavy_case6a_large_x(eps: float, c: float, X: float, theta: float) -> float:
    return (
        2.0**1.5 * eps**2 / math.sqrt(math.pi * c * theta)
        * math.exp(X / c - theta / (2.0 * c) - X * X / (2.0 * c * theta))
    )


def _case6b_term(n: int, c: float, X: float, theta: float) -> float:
    z = ((2 * n + 1) * X + theta) / math.sqrt(c * theta)
    table = pcf_D_scaled_table(2 * n + 2, z)
    ratio = c / theta
    inner = 0.0
    for ell in range(2 * n + 1):
        weight = (
            (-1) ** ell
            * math.comb(2 * n, ell)
            * 2.0 ** (ell + 1.5)
            * c ** (-(ell + 3) / 2.0)
            * theta ** ((ell + 1) / 2.0)
        )
        inner += weight * (
            ratio * table[ell] - 2.0 * math.sqrt(ratio) * table[ell + 1] + table[ell + 2]
        )
    return math.exp(2.0 * (n + 1) * X / c - z * z / 2.0) * inner


def heavy_case6b(eps: float, c: float, X: float, theta: float) -> tuple[float, bool]:
    """Parabolic-cylinder double sum; the e^{-z^2/4} of each D is folded into the exponent."""
    total = 0.0
    for n in range(PCF_TERMS + 1):
        term = _case6b_term(n, c, X, theta)
        total += term
        if n > 0 and abs(term) < SERIES_RTOL * abs(total):
            return eps**2 / math.sqrt(math.pi) * total, True
    return eps**2 / math.sqrt(math.pi) * total, False


def heavy_case6b_leading(eps: float, c: float, X: float, theta: float) -> float:
    """n = 0 term of the double sum, with D_0, D_-1, D_-2 written through erfc."""
    z = (X + theta) / math.sqrt(c * theta)
    d1 = math.sqrt(math.pi / 2.0) * float(special.erfcx(z / math.sqrt(2.0)))
    d2 = 1.0 - z * d1
    ratio = c / theta
    inner = 2.0**1.5 * c**-1.5 * math.sqrt(theta) * (ratio - 2.0 * math.sqrt(ratio) * d1 + d2)
    return eps**2 / math.sqrt(math.pi) * math.exp(2.0 * X / c - z * z / 2.0) * inner


def heavy_case6c(
    dist: ServiceDistribution,
    eps: float,
    X: float,
    theta: float,
    *,
    n_max: int = DEFAULT_ROOTS,
    sd_order: int = 2,
) -> tuple[float, bool]:
    """Spectral sum over the roots v_n(X); sd_order=1 drops the O(eps) decay correction."""
    if sd_order not in (1, 2):
        raise ValueError(f"sd_order must be 1 or 2, got {sd_order}.")
    mu = dist.mu
    m2, m3 = moment(dist, 2), moment(dist, 3)
    c = mu * m2
    total = 0.0
    for n in range(1, n_max + 1):
        v = spectral_v(c, X, n)
        rate = spectral_B1(v, c)
        if sd_order == 2:
            rate += eps * spectral_C1(v, X, mu, m2, m3)
        term = math.exp(rate * theta) * spectral_G(v, X, c)
        total += term
        if abs(term) < SERIES_RTOL * abs(total):
            return eps**2 * total, True
    return eps**2 * total, False


def ptx_t22(
    params: ModelParams,
    t: float,
    x: float,
    case: str | int,
    *,
    n_max: int = DEFAULT_ROOTS,
    sd_order: int = 2,
    form: str = "auto",
    contour: ContourSpec | None = None,
) -> DensityValue:
    """Heavy-traffic expansion of p(t|x) in the named case (1..5, 6a, 6b, 6c)."""
    key = str(case)
    if key not in T22_CASES:
        raise ValueError(f"Unknown heavy-traffic case {case!r}; expected one of {T22_CASES}.")
    if not t > x > 0:
        raise ValueError(f"Need t > x > 0, got t={t}, x={x}.")
    dist, eps = params.dist, params.eps
    if eps > SOFT_EPS_LIMIT:
        logger.warning("Heavy-traffic expansion used at eps=%g > %g.", eps, SOFT_EPS_LIMIT)
    sc = heavy_scales(params, t, x)
    X, T, theta = sc["X"], sc["T"], sc["Theta"]
    c = _c_scale(dist)
    if key == "1":
        out = _heavy_case1(params, t, x, contour, "auto")
    elif key == "2":
        method = "quadrature" if dist.is_erlang else "auto"
        h = denominator_h(dist, dist.mu, 0.0, x, method=method).real
        out = _heavy_case2(params, t, x, h)
    elif key == "3":
        out = _heavy_case3(params, t, x)
    elif key == "4":
        out = _heavy_case4(params, t, x)
    elif key == "5":
        value = heavy_case5(eps, c, sc["Z"], T, form)
        out = DensityValue(t=t, x=x, value=value, regime="T22-C5")
    elif key == "6a":
        out = DensityValue(t=t, x=x, value=heavy_case6a(eps, c, X, theta), regime="T22-C6a")
    elif key == "6b":
        value, ok = heavy_case6b(eps, c, X, theta)
        out = DensityValue(t=t, x=x, value=value, regime="T22-C6b", converged=ok)
    else:
        value, ok = heavy_case6c(dist, eps, X, theta, n_max=n_max, sd_order=sd_order)
        out = DensityValue(t=t, x=x, value=value, regime="T22-C6c", converged=ok)
    if key == "6c" and theta > 1.0 / eps:
        out.notes.append("Theta beyond O(1/eps): decay rate needs further terms")
    out.terms.update({k: v for k, v in sc.items() if k != "eps"})
    _check_regime(params, t, x, out.regime, out)
    return out


def ptx_t22_longtime(params: ModelParams, t: float, x: float, *, sd_order: int = 2) -> DensityValue:
    """Dominant spectral term eps^2 e^{s_d(v1) Theta} G(v1)."""
    sc = heavy_scales(params, t, x)
    value, _ = heavy_case6c(
        params.dist, params.eps, sc["X"], sc["Theta"], n_max=1, sd_order=sd_order
    )
    out = DensityValue(t=t, x=x, value=value, regime="T22-C6", notes=["longtime"])
    if sc["Theta"] < LONGTIME_THETA:
        out.notes.append("Theta < 3: later spectral terms not negligible")
    return out


def ptx_t22_erlang(
    params: ModelParams,
    t: float,
    x: float,
    case: str | int,
    *,
    n_max: int = DEFAULT_ROOTS,
    sd_order: int = 2,
) -> DensityValue:
    """Erlang(k) closed-form counterpart of ptx_t22."""
    k, mu = _erlang_kw(params.dist)
    eps = params.eps
    sc = heavy_scales(params, t, x)
    X, T, theta = sc["X"], sc["T"], sc["Theta"]
    c = (k + 1) / (k * mu)
    key = str(case)
    out = DensityValue(t=t, x=x, value=0.0, regime=f"T22-C{key}")
    if key == "1":
        return _erlang_heavy_case1(k, mu, eps, t, x)
    if key == "2":
        return _heavy_case2(params, t, x, erlang_h_at_zero(k, mu, x))
    if key == "3":
        t_star = (T - X) * eps ** (-1.0 - 1.0 / k)
        lower = [1.0 + j / k for j in range(1, k)] + [2.0]
        series = hyper_0Fk(k, lower, mu ** (k + 1) * X * t_star**k)
        out.value = (
            math.exp(-mu * X / eps)
            * mu * (k * mu) ** k * X * t_star ** (k - 1) / math.factorial(k - 1)
            * eps ** (1.0 - 1.0 / k)
            * series
        )
    elif key == "4":
        u = (T / (T - X)) ** (1.0 / (k + 1))
        tau_hat = k * mu * (u - 1.0)
        s_hat = mu * (u * (k + 1 - X / T) - (k + 1))
        out.value = _heavy_case4_value(eps, X, T, s_hat, tau_hat, mu, _erlang_b2(k, mu, tau_hat))
    elif key == "5":
        total = 0.0
        for n in range(SERIES_CAP):
            term = math.exp(-((2 * n + 1) ** 2) * k * mu * sc["Z"] ** 2 / (2.0 * (k + 1) * T))
            total += term
            if term < SERIES_RTOL * total:
                break
        out.value = eps**1.5 * math.sqrt(8.0 * k * mu / ((k + 1) * math.pi * T)) * total
    elif key == "6a":
        out.value = heavy_case6a(eps, c, X, theta)
    elif key == "6b":
        out.value, out.converged = heavy_case6b(eps, c, X, theta)
    elif key == "6c":
        total = 0.0
        for n in range(1, n_max + 1):
            v = spectral_v(c, X, n)
            w = v * v + 1.0
            rate = -k * mu * w / (2.0 * (k + 1))
            if sd_order == 2:
                shape = 2.0 * (k - 1) * k * mu * X * v * v / (k * mu * w * X + 2 * (k + 1))
                rate += eps * (-k * mu * w / (6.0 * (k + 1) ** 2)) * ((2 * k + 1) - shape)
            arg = k * mu * v * X / (k + 1)
            g = 2.0 * v * v * math.exp(mu * k * X / (k + 1)) / (
                (v * v - 1.0) * X * math.cos(arg)
                + (2.0 * v * X + (k + 1) * w / (k * mu * v)) * math.sin(arg)
            )
            term = math.exp(rate * theta) * g
            total += term
            if abs(term) < SERIES_RTOL * abs(total):
                break
        out.value = eps**2 * total
    else:
        raise ValueError(f"Unknown heavy-traffic case {case!r}.")
    return out


# Dispatch


def evaluate_regime(
    params: ModelParams, t: float, x: float, regime: str | None = None
) -> DensityValue:
    """Evaluate the auto-selected regime, or the given regime id (e.g. T21-C4, T22-C6b)."""
    if regime is None:
        selection = select_regime(params, t, x)
        regime = selection.regime
        if regime == "T22-C6":
            if selection.variant == "longtime":
                return ptx_t22_longtime(params, t, x)
            regime = "T22-C6c"
    family, _, case = regime.partition("-")
    case = case.removeprefix("C")
    if family == "T21":
        return ptx_t21(params, t, x, case)
    if family == "T22":
        if case == "6":
            return ptx_t22_longtime(params, t, x)
        return ptx_t22(params, t, x, case)
    raise ValueError(f"Unknown regime id {regime!r}.")
