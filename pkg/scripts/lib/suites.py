"""Validation suites: closed-form identities and cross-path equalities driven by a YAML file."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from lib import DEFAULT_SUITES_FILENAME, SojournError
from lib.asymptotic import (
    erlang_matching_coeffs,
    heavy_case5,
    heavy_case6a,
    heavy_case6b,
    heavy_case6c,
    matching_coeffs,
    ptx_t21,
    ptx_t21_erlang,
    ptx_t22,
    ptx_t22_erlang,
    theta_sum,
    theta_sum_direct,
)
from lib.dist import ModelParams, erlang, exponential
from lib.inversion import verify_deterministic_identity
from lib.roots import critical_pair, erlang_Q_roots
from lib.uncond import erlang_tail_constants, tail_expansion
from lib.utils import coerce_float, ensure_list, ensure_mapping

logger = logging.getLogger(__name__)

# scripts/lib -> scripts -> repo root
ROOT_DIR = Path(__file__).resolve().parents[2]
DEFAULT_SUITES_PATH = ROOT_DIR / DEFAULT_SUITES_FILENAME
SUITES = ("identities", "erlang", "matching", "appendix")


@dataclass
class CheckResult:
    suite: str
    name: str
    residual: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return math.isfinite(self.residual) and self.residual <= self.tolerance


def load_suites(path: Path = DEFAULT_SUITES_PATH) -> dict[str, Any]:
    if not path.exists():
        raise FileNotFoundError(f"Validation suite file not found: {path}")
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    suites = ensure_mapping(data, context=str(path))
    unknown = sorted(set(suites) - set(SUITES))
    if unknown:
        raise ValueError(f"Unknown suite(s) in {path}: {', '.join(unknown)}.")
    return suites


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def _tol(section: dict[str, Any], context: str) -> float:
    return coerce_float(section.get("tolerance"), context=f"{context} tolerance")


def _guarded(suite: str, name: str, tolerance: float, fn: Callable[[], float]) -> CheckResult:
    try:
        return CheckResult(suite, name, fn(), tolerance)
    except (SojournError, ArithmeticError) as exc:
        logger.warning("Check %s/%s raised: %s", suite, name, exc)
        return CheckResult(suite, name, math.inf, tolerance, detail=str(exc))


def _identities(cfg: dict[str, Any]) -> list[CheckResult]:
    results: list[CheckResult] = []
    pair_cfg = ensure_mapping(cfg.get("critical_pair"), context="identities.critical_pair")
    mu = coerce_float(pair_cfg.get("mu"), context="critical_pair mu")
    tol = _tol(pair_cfg, "critical_pair")
    for raw_rho in ensure_list(pair_cfg.get("rho"), context="critical_pair rho"):
        rho = coerce_float(raw_rho, context="critical_pair rho")

        def pair_residual(rho: float = rho) -> float:
            pair = critical_pair(ModelParams(rho * mu, exponential(mu)))
            root = math.sqrt(rho)
            return max(
                abs(pair.s0 + mu * (1.0 - root) ** 2), abs(pair.tau0 - mu * (root - 1.0))
            )

        results.append(_guarded("identities", f"critical-pair rho={rho:g}", tol, pair_residual))

    roots_tol = coerce_float(cfg.get("roots_tolerance"), context="roots_tolerance")
    for raw in ensure_list(cfg.get("erlang_roots"), context="identities.erlang_roots"):
        entry = ensure_mapping(raw, context="erlang_roots entry")
        k = int(coerce_float(entry.get("k"), context="erlang_roots k"))
        root_mu = coerce_float(entry.get("mu"), context="erlang_roots mu")
        expected = [
            complex(*(coerce_float(part, context="expected root") for part in pair))
            for pair in ensure_list(entry.get("expected"), context="expected roots")
        ]

        def roots_residual(
            k: int = k, mu: float = root_mu, want: list[complex] = expected
        ) -> float:
            found = erlang_Q_roots(k, mu)
            return max(min(abs(q - w) for q in found) / abs(w) for w in want)

        results.append(
            _guarded(
                "identities", f"erlang-Q-roots k={k} mu={root_mu:g}", roots_tol, roots_residual
            )
        )

    ps_cfg = ensure_mapping(cfg.get("poisson_summation"), context="poisson_summation")
    eps = coerce_float(ps_cfg.get("eps"), context="poisson_summation eps")
    c = coerce_float(ps_cfg.get("c"), context="poisson_summation c")
    ps_tol = _tol(ps_cfg, "poisson_summation")
    for raw in ensure_list(ps_cfg.get("points"), context="poisson_summation points"):
        point = ensure_mapping(raw, context="poisson_summation point")
        Z = coerce_float(point.get("Z"), context="Z")
        T = coerce_float(point.get("T"), context="T")
        results.append(
            _guarded(
                "identities",
                f"poisson-summation Z={Z:g} T={T:g}",
                ps_tol,
                lambda Z=Z, T=T: _rel(
                    heavy_case5(eps, c, Z, T, "theta"), heavy_case5(eps, c, Z, T, "poisson")
                ),
            )
        )
    return results


def _erlang_params(k: int, mu: float, lam: float) -> ModelParams:
    return ModelParams(lam, erlang(k, mu))


def _erlang(cfg: dict[str, Any]) -> list[CheckResult]:
    results: list[CheckResult] = []
    ks = [int(coerce_float(k, context="erlang k")) for k in ensure_list(cfg.get("k"), context="k")]
    mu = coerce_float(cfg.get("mu"), context="erlang mu")

    fixed = ensure_mapping(cfg.get("fixed"), context="erlang.fixed")
    lam = coerce_float(fixed.get("lam"), context="erlang.fixed lam")
    heavy = ensure_mapping(cfg.get("heavy"), context="erlang.heavy")
    eps = coerce_float(heavy.get("eps"), context="erlang.heavy eps")
    heavy_h = ensure_mapping(cfg.get("heavy_h"), context="erlang.heavy_h")
    tail = ensure_mapping(cfg.get("tail"), context="erlang.tail")

    for k in ks:
        params = _erlang_params(k, mu, lam)
        for raw in ensure_list(fixed.get("points"), context="erlang.fixed points"):
            point = ensure_mapping(raw, context="erlang.fixed point")
            case = str(point.get("case"))
            t = coerce_float(point.get("t"), context="t")
            x = coerce_float(point.get("x"), context="x")
            results.append(
                _guarded(
                    "erlang",
                    f"fixed case {case} k={k} t={t:g} x={x:g}",
                    _tol(fixed, "erlang.fixed"),
                    lambda p=params, c=case, t=t, x=x: _rel(
                        ptx_t21(p, t, x, c).value, ptx_t21_erlang(p, t, x, c).value
                    ),
                )
            )

        heavy_params = _erlang_params(k, mu, (1.0 - eps) * mu)
        for raw in ensure_list(heavy.get("points"), context="erlang.heavy points"):
            point = ensure_mapping(raw, context="erlang.heavy point")
            case = str(point.get("case"))
            t = coerce_float(point.get("t"), context="t")
            x = coerce_float(point.get("x"), context="x")
            results.append(
                _guarded(
                    "erlang",
                    f"heavy case {case} k={k} t={t:g} x={x:g}",
                    _tol(heavy, "erlang.heavy"),
                    lambda p=heavy_params, c=case, t=t, x=x: _rel(
                        ptx_t22(p, t, x, c).value,
                        ptx_t22_erlang(p, t, x, c).value,
                    ),
                )
            )

        h_eps = coerce_float(heavy_h.get("eps"), context="erlang.heavy_h eps")
        h_params = _erlang_params(k, mu, (1.0 - h_eps) * mu)
        for raw in ensure_list(heavy_h.get("points"), context="erlang.heavy_h points"):
            point = ensure_mapping(raw, context="erlang.heavy_h point")
            t = coerce_float(point.get("t"), context="t")
            x = coerce_float(point.get("x"), context="x")
            results.append(
                _guarded(
                    "erlang",
                    f"heavy case 2 k={k} t={t:g} x={x:g}",
                    _tol(heavy_h, "erlang.heavy_h"),
                    lambda p=h_params, t=t, x=x: _rel(
                        ptx_t22(p, t, x, "2").value, ptx_t22_erlang(p, t, x, "2").value
                    ),
                )
            )

        tail_lam = coerce_float(tail.get("lam"), context="erlang.tail lam")

        def tail_residual(k: int = k) -> float:
            expansion = tail_expansion(_erlang_params(k, mu, tail_lam))
            alpha, gamma, s0 = erlang_tail_constants(k, mu, tail_lam)
            return max(
                _rel(expansion.prefactor, alpha),
                _rel(-expansion.rates[1.0 / 3.0], gamma),
                _rel(expansion.rates[1.0], s0),
            )

        results.append(
            _guarded("erlang", f"tail constants k={k}", _tol(tail, "tail"), tail_residual)
        )
    return results


def _matching(cfg: dict[str, Any]) -> list[CheckResult]:
    results: list[CheckResult] = []
    coeff_cfg = ensure_mapping(cfg.get("coefficients"), context="matching.coefficients")
    mu = coerce_float(coeff_cfg.get("mu"), context="matching mu")
    tol = _tol(coeff_cfg, "matching.coefficients")
    for raw_k in ensure_list(coeff_cfg.get("k"), context="matching k"):
        k = int(coerce_float(raw_k, context="matching k"))
        for raw_lam in ensure_list(coeff_cfg.get("lam"), context="matching lam"):
            lam = coerce_float(raw_lam, context="matching lam")

            def coeff_residual(k: int = k, lam: float = lam) -> float:
                general = matching_coeffs(_erlang_params(k, mu, lam))
                closed = erlang_matching_coeffs(k, mu, lam)
                return max(_rel(general.B, closed.B), _rel(general.C, closed.C))

            results.append(
                _guarded("matching", f"B, C k={k} lam={lam:g}", tol, coeff_residual)
            )

    case6 = ensure_mapping(cfg.get("case6"), context="matching.case6")
    eps = coerce_float(case6.get("eps"), context="case6 eps")
    c6_mu = coerce_float(case6.get("mu"), context="case6 mu")
    dist = exponential(c6_mu)
    c = 2.0 / c6_mu
    c6_tol = _tol(case6, "matching.case6")
    for raw_x in ensure_list(case6.get("X"), context="case6 X"):
        X = coerce_float(raw_x, context="case6 X")
        for raw_theta in ensure_list(case6.get("Theta"), context="case6 Theta"):
            theta = coerce_float(raw_theta, context="case6 Theta")

            def triple(X: float = X, theta: float = theta) -> float:
                a = heavy_case6a(eps, c, X, theta)
                b, _ = heavy_case6b(eps, c, X, theta)
                s, _ = heavy_case6c(dist, eps, X, theta, sd_order=1)
                return max(_rel(a, b), _rel(a, s), _rel(b, s))

            results.append(
                _guarded("matching", f"case 6 a/b/c X={X:g} Theta={theta:g}", c6_tol, triple)
            )

    dual = ensure_mapping(cfg.get("theta_dual"), context="matching.theta_dual")
    dual_tol = _tol(dual, "matching.theta_dual")
    for raw_b in ensure_list(dual.get("b"), context="theta_dual b"):
        b = coerce_float(raw_b, context="theta_dual b")
        results.append(
            _guarded(
                "matching",
                f"theta dual b={b:g}",
                dual_tol,
                lambda b=b: _rel(theta_sum(b), theta_sum_direct(b)),
            )
        )
    return results


def _appendix(cfg: dict[str, Any]) -> list[CheckResult]:
    tol = _tol(cfg, "appendix")
    results: list[CheckResult] = []
    for raw in ensure_list(cfg.get("points"), context="appendix points"):
        point = ensure_mapping(raw, context="appendix point")
        lam = coerce_float(point.get("lam"), context="appendix lam")
        mu = coerce_float(point.get("mu"), context="appendix mu")
        parts = ensure_list(point.get("s"), context="appendix s")
        s = complex(*(coerce_float(v, context="appendix s") for v in parts))
        results.append(
            _guarded(
                "appendix",
                f"deterministic identity lam={lam:g} mu={mu:g} s={s}",
                tol,
                lambda lam=lam, mu=mu, s=s: verify_deterministic_identity(lam, mu, s),
            )
        )
    return results


_RUNNERS: dict[str, Callable[[dict[str, Any]], list[CheckResult]]] = {
    "identities": _identities,
    "erlang": _erlang,
    "matching": _matching,
    "appendix": _appendix,
}


def run_suite(name: str, suites: dict[str, Any]) -> list[CheckResult]:
    """Run one suite (or `all`) and return every check in file order."""
    names = list(SUITES) if name == "all" else [name]
    results: list[CheckResult] = []
    for suite in names:
        if suite not in _RUNNERS:
            raise ValueError(f"Unknown suite {suite!r}; expected one of {SUITES + ('all',)}.")
        section = ensure_mapping(suites.get(suite), context=f"suite {suite}")
        logger.info("Running suite %s", suite)
        results.extend(_RUNNERS[suite](section))
    return results
