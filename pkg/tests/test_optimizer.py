"""带边界的多起点极大化"""

import numpy as np
import pytest

from confcurve.core.error_handler import DataValidationError, OptimizationError
from confcurve.inference.optimizer import (
    GRAD_TOL, ParamBound, maximize, maximize_constrained, numerical_gradient, numerical_hessian
)


def test_unconstrained_quadratic():
    result = maximize(lambda t: -(t[0] - 1.0) ** 2 - (t[1] + 2.0) ** 2,
                      [ParamBound.real(), ParamBound.real()], [0.0, 0.0])
    np.testing.assert_allclose(result.theta, [1.0, -2.0], atol=1e-5)
    assert result.grad_norm <= GRAD_TOL
    assert result.at_boundary == ()


def test_positive_coordinate():
    result = maximize(lambda t: -(t[0] - 3.0) ** 2, [ParamBound.positive()], [1.0])
    assert result.theta[0] == pytest.approx(3.0, abs=1e-5)


def test_interval_coordinate():
    result = maximize(lambda t: -(t[0] - 0.9) ** 2, [ParamBound.interval(-1.0, 1.0)], [0.0])
    assert result.theta[0] == pytest.approx(0.9, abs=1e-5)


def test_closed_lower_bound_optimum_is_attained():
    result = maximize(lambda t: -(t[0] + 1.0) ** 2 - (t[1] - 2.0) ** 2,
                      [ParamBound.nonnegative(), ParamBound.real()], [0.5, 0.0])
    assert result.theta[0] == 0.0
    assert 0 in result.at_boundary
    assert result.value == pytest.approx(-1.0, abs=1e-8)


def test_fixed_coordinate_is_held():
    result = maximize(lambda t: -(t[0] - t[1]) ** 2 - t[1] ** 2,
                      [ParamBound.real(), ParamBound.real()], [0.0, 0.0], fixed={1: 5.0})
    assert result.theta[1] == 5.0
    assert result.theta[0] == pytest.approx(5.0, abs=1e-5)


def test_multistart_is_reproducible():
    def bumpy(t):
        return -np.cos(3.0 * t[0]) - 0.1 * t[0] ** 2

    first = maximize(bumpy, [ParamBound.real()], [0.2], starts=7)
    second = maximize(bumpy, [ParamBound.real()], [0.2], starts=7)
    np.testing.assert_array_equal(first.theta, second.theta)


def test_unbounded_objective_is_not_converged():
    with pytest.raises(OptimizationError) as info:
        maximize(lambda t: t[0], [ParamBound.real()], [0.0], starts=2)
    assert info.value.best_theta is not None
    assert info.value.best_value == pytest.approx(info.value.best_theta[0])


def test_optimum_near_interval_edge():
    result = maximize(lambda t: -1e4 * (t[0] - 0.9995) ** 2, [ParamBound.interval(-1.0, 1.0)], [0.0])
    assert result.theta[0] == pytest.approx(0.9995, abs=1e-7)
    assert result.grad_norm <= GRAD_TOL


def test_small_positive_optimum():
    result = maximize(lambda t: np.log(t[0]) - 50.0 * t[0], [ParamBound.positive()], [1.0])
    assert result.theta[0] == pytest.approx(0.02, rel=1e-6)
    assert result.grad_norm <= GRAD_TOL


def test_no_finite_objective():
    with pytest.raises(OptimizationError):
        maximize(lambda t: np.nan, [ParamBound.real()], [0.0], starts=2)


def test_seed_dimension_mismatch():
    with pytest.raises(DataValidationError):
        maximize(lambda t: 0.0, [ParamBound.real()], [0.0, 1.0])


def test_fixed_value_outside_bounds():
    with pytest.raises(DataValidationError):
        maximize(lambda t: 0.0, [ParamBound.positive()], [1.0], fixed={0: -1.0})


def test_equality_constrained():
    result = maximize_constrained(lambda t: -(t[0] ** 2 + t[1] ** 2),
                                  [ParamBound.real(), ParamBound.real()],
                                  lambda t: t[0] + t[1] - 1.0, [1.0, 0.0])
    np.testing.assert_allclose(result.theta, [0.5, 0.5], atol=1e-5)


def test_numerical_derivatives():
    def f(x):
        return x[0] ** 2 * x[1] + 3.0 * x[1] ** 2

    x = np.array([1.5, -0.5])
    np.testing.assert_allclose(numerical_gradient(f, x), [2 * 1.5 * -0.5, 1.5 ** 2 + 6 * -0.5],
                               atol=1e-7)
    np.testing.assert_allclose(numerical_hessian(f, x), [[-1.0, 3.0], [3.0, 6.0]], atol=1e-5)


@pytest.mark.parametrize('bound, value', [
    (ParamBound.positive(), 2.5),
    (ParamBound.interval(-1.0, 1.0), 0.3),
    (ParamBound.real(), -7.0),
])
def test_bound_transform_inverts(bound, value):
    assert bound.from_free(bound.to_free(value)) == pytest.approx(value, rel=1e-12)
