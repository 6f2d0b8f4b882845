"""Per-point evaluation tasks that the CLI dispatches over a t-grid."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from lib import (
    ConvergenceError,
    NoRootError,
    PCFOverflowError,
    PoleError,
    UnsupportedError,
)
from lib.asymptotic import HEAVY_EPS, evaluate_regime
from lib.dist import Kind, ModelParams
from lib.inversion import ContourSpec, DensityValue, pt_exact, ptx_exact
from lib.tables import ResultRow, row_from_density
from lib.uncond import pt_finite_support, pt_heavy_deep, pt_heavy_T, pt_tail_fixed

logger = logging.getLogger(__name__)

CONDITIONAL_METHODS = ("exact", "asymptotic")
UNCONDITIONAL_METHODS = ("exact", "tail", "heavy-T", "heavy-deep", "finite-support")
NUMERICAL_FAILURES = (ConvergenceError, NoRootError, PCFOverflowError, PoleError, UnsupportedError)


@dataclass(frozen=True)
class ConditionalTask:
    params: ModelParams
    t: float
    x: float
    method: str
    regime: str | None = None
    contour: ContourSpec | None = None


@dataclass(frozen=True)
class UnconditionalTask:
    params: ModelParams
    t: float
    method: str
    contour: ContourSpec | None = None


def _failed(t: float, x: float | None, method: str, exc: Exception) -> ResultRow:
    logger.warning("%s at t=%g failed: %s", method, t, exc)
    return ResultRow(t=t, x=x, method=method, regime="error", value=math.nan, converged=False)


def evaluate_conditional(task: ConditionalTask) -> ResultRow:
    if task.t <= task.x:
        return ResultRow(t=task.t, x=task.x, method=task.method, regime="below-x", value=0.0)
    try:
        if task.method == "exact":
            value = ptx_exact(task.params, task.t, task.x, contour=task.contour)
        elif task.method == "asymptotic":
            value = evaluate_regime(task.params, task.t, task.x, task.regime)
        else:
            raise ValueError(f"Unknown conditional method {task.method!r}.")
    except NUMERICAL_FAILURES as exc:
        return _failed(task.t, task.x, task.method, exc)
    return row_from_density(value, task.method)


def applicable_unconditional(params: ModelParams) -> list[str]:
    """Unconditional methods defined for this distribution and load."""
    dist = params.dist
    methods = ["exact"]
    if dist.kind == Kind.FINITE_SUPPORT:
        methods.append("finite-support")
    has_tail = dist.tail is not None or dist.is_erlang
    if has_tail:
        methods.append("tail")
    if params.eps <= HEAVY_EPS:
        methods.append("heavy-T")
        if has_tail:
            methods.append("heavy-deep")
    return methods


def auto_unconditional(params: ModelParams) -> str:
    methods = applicable_unconditional(params)
    for preferred in ("finite-support", "heavy-T", "tail"):
        if preferred in methods:
            return preferred
    return "exact"


def _unconditional_value(task: UnconditionalTask) -> DensityValue:
    match task.method:
        case "exact":
            return pt_exact(task.params, task.t, contour=task.contour)
        case "tail":
            return pt_tail_fixed(task.params, task.t)
        case "heavy-T":
            return pt_heavy_T(task.params, task.t)
        case "heavy-deep":
            return pt_heavy_deep(task.params, task.t)
        case "finite-support":
            return pt_finite_support(task.params, task.t)
        case _:
            raise ValueError(f"Unknown unconditional method {task.method!r}.")


def evaluate_unconditional(task: UnconditionalTask) -> ResultRow:
    try:
        value = _unconditional_value(task)
    except NUMERICAL_FAILURES as exc:
        return _failed(task.t, None, task.method, exc)
    return row_from_density(value, task.method)
