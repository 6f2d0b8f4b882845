import math

from lib.dist import ModelParams, erlang, exponential, uniform
from lib.grid import (
    ConditionalTask,
    UnconditionalTask,
    applicable_unconditional,
    auto_unconditional,
    evaluate_conditional,
    evaluate_unconditional,
)


def test_conditional_below_size_is_zero() -> None:
    params = ModelParams(0.5, exponential(1.0))
    row = evaluate_conditional(ConditionalTask(params, 1.0, 2.0, "exact"))
    assert row.regime == "below-x"
    assert row.value == 0.0


def test_conditional_asymptotic_uses_auto_regime() -> None:
    params = ModelParams(0.5, exponential(1.0))
    row = evaluate_conditional(ConditionalTask(params, 10.0, 5.0, "asymptotic"))
    assert row.regime == "T21-C2"
    assert row.value > 0.0


def test_unconditional_methods_by_distribution() -> None:
    assert applicable_unconditional(ModelParams(0.5, exponential(1.0))) == ["exact", "tail"]
    heavy_uniform = ModelParams(0.95, uniform(2.0))
    assert applicable_unconditional(heavy_uniform) == ["exact", "finite-support", "heavy-T"]
    assert auto_unconditional(heavy_uniform) == "finite-support"
    assert auto_unconditional(ModelParams(0.95, erlang(2, 1.0))) == "heavy-T"
    assert auto_unconditional(ModelParams(0.5, erlang(2, 1.0))) == "tail"


def test_numerical_failure_becomes_row() -> None:
    params = ModelParams(0.5, uniform(2.0))
    row = evaluate_unconditional(UnconditionalTask(params, 10.0, "tail"))
    assert row.regime == "error"
    assert math.isnan(row.value)
    assert not row.converged
