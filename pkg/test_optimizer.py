import numpy as np
import pytest

from optimizer import CachedObjective, OPTIMIZERS, minimize
from utils import ConfigError, EigenSolverError


def rosenbrock(x):
    value = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    gradient = np.array([
        -2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2),
        200 * (x[1] - x[0] ** 2),
    ])
    return value, gradient, {}


def quadratic(x):
    scales = np.array([1.0, 10.0, 3.0])
    return 0.5 * float(scales @ (x * x)), scales * x, {"tag": 1}


def test_bfgs_solves_rosenbrock():
    result = minimize(rosenbrock, [-1.2, 1.0], "bfgs", max_iterations=500, error_tolerance=None,
                      gradient_tolerance=1e-6)
    assert result.converged
    assert result.reason == "gradient-threshold"
    np.testing.assert_allclose(result.x, [1.0, 1.0], atol=1e-5)


@pytest.mark.parametrize("method", OPTIMIZERS)
def test_every_method_minimizes_a_quadratic(method):
    result = minimize(quadratic, [1.0, -2.0, 0.5], method, max_iterations=2000, error_tolerance=None,
                      gradient_tolerance=1e-9)
    assert result.converged
    np.testing.assert_allclose(result.x, 0.0, atol=1e-8)


@pytest.mark.parametrize("method", OPTIMIZERS)
def test_accepted_steps_never_increase_the_objective(method):
    result = minimize(rosenbrock, [-1.2, 1.0], method, max_iterations=200, error_tolerance=None)
    objectives = [row["objective"] for row in result.trace]
    assert all(b <= a for a, b in zip(objectives, objectives[1:]))
    assert result.fun <= result.initial_fun


def test_error_threshold_stops_early():
    result = minimize(quadratic, [1.0, 1.0, 1.0], "bfgs", error_tolerance=1e-4)
    assert result.reason == "error-threshold"
    assert result.fun < 1e-4


def test_iteration_cap_is_reported():
    result = minimize(rosenbrock, [-1.2, 1.0], "gradient-descent", max_iterations=3, error_tolerance=None)
    assert not result.converged
    assert result.reason == "max-iterations"
    assert result.iterations == 3
    assert len(result.trace) == 4


def test_trace_carries_objective_info():
    result = minimize(quadratic, [1.0, 1.0, 1.0], "bfgs", max_iterations=5, error_tolerance=None)
    assert set(result.trace[0]) == {"iteration", "objective", "gradient_norm", "tag"}


def test_unknown_method():
    with pytest.raises(ConfigError):
        minimize(quadratic, [1.0, 1.0, 1.0], "newton")


def test_cached_objective_evaluates_once_per_point():
    calls = []

    def fun(x):
        calls.append(x.copy())
        return quadratic(x)

    objective = CachedObjective(fun)
    x = np.array([1.0, 2.0, 3.0])
    assert objective.value(x) == quadratic(x)[0]
    np.testing.assert_array_equal(objective.gradient(x), quadratic(x)[1])
    assert len(calls) == 1
    objective.value(x + 1.0)
    assert objective.evaluations == 2


def test_failed_trial_points_become_infinite():
    def fun(x):
        if x[0] > 1.0:
            raise EigenSolverError("degenerate")
        return quadratic(x)

    objective = CachedObjective(fun)
    assert objective.value(np.array([2.0, 0.0, 0.0])) == np.inf
    with pytest.raises(EigenSolverError):
        objective(np.array([3.0, 0.0, 0.0]), strict=True)
