"""
Optimizer module for the neural eigensolver.
Quasi-Newton (BFGS with a dense inverse-Hessian update), nonlinear conjugate
gradient (Polak-Ribiere+) and steepest descent, all driven by the strong-Wolfe
line search of scipy.optimize. Accepted steps never increase the objective.
"""
import logging
import math
import warnings

import attrs
import numpy as np
from scipy.optimize import line_search

from utils import ConfigError, EigenSolverError

logger = logging.getLogger(__name__)

OPTIMIZERS = ("bfgs", "conjugate-gradient", "gradient-descent")

# Strong-Wolfe constants; conjugate gradient needs the tighter curvature condition
WOLFE_C1 = 1e-4
WOLFE_C2 = {"bfgs": 0.9, "conjugate-gradient": 0.1, "gradient-descent": 0.9}
LINE_SEARCH_MAX_ITERATIONS = 20

# Log a progress line every this many iterations
LOG_EVERY = 100


@attrs.frozen(eq=False)
class OptimizationResult:
    x: np.ndarray
    fun: float
    gradient_norm: float
    iterations: int
    evaluations: int
    converged: bool
    reason: str
    trace: list
    initial_fun: float


class CachedObjective:
    """
    Wraps fun(x) -> (value, gradient, info) so that the line search can ask for
    the value and the gradient separately without evaluating twice.

    Evaluation errors at trial points (a degenerate or non-finite state) are
    reported to the line search as an infinite value; at the starting point they
    propagate.
    """

    def __init__(self, fun):
        self.fun = fun
        self.evaluations = 0
        self._key = None
        self._entry = None

    def __call__(self, x, strict=False):
        key = np.asarray(x, dtype=float).tobytes()
        if key != self._key:
            self.evaluations += 1
            try:
                value, gradient, info = self.fun(np.array(x, dtype=float))
                if not math.isfinite(value) or not np.all(np.isfinite(gradient)):
                    raise EigenSolverError(f"non-finite objective {value}")
            except EigenSolverError as e:
                if strict:
                    raise
                logger.debug("Objective rejected trial point: %s", e)
                value, gradient, info = math.inf, np.zeros(len(x)), {}
            self._key, self._entry = key, (float(value), np.asarray(gradient, dtype=float), info)
        return self._entry

    def value(self, x):
        return self(x)[0]

    def gradient(self, x):
        return self(x)[1]


def _search(objective, x, direction, gradient, value, previous_value, c2):
    """Strong-Wolfe step length along direction, None when the search fails."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        alpha, *_ = line_search(objective.value, objective.gradient, x, direction,
                                gfk=gradient, old_fval=value, old_old_fval=previous_value,
                                c1=WOLFE_C1, c2=c2, maxiter=LINE_SEARCH_MAX_ITERATIONS)
    for warning in caught:
        logger.debug("Line search: %s", warning.message)
    if alpha is None or not math.isfinite(objective.value(x + alpha * direction)):
        return None
    return alpha


def minimize(fun, x0, method="bfgs", max_iterations=5000, error_tolerance=1e-8,
             gradient_tolerance=1e-7):
    """
    Minimize a smooth objective.

    Args:
        fun (callable): x -> (value, gradient, info dict); info is copied into the trace
        x0 (ndarray): Starting point
        method (str): One of OPTIMIZERS
        max_iterations (int): Iteration cap
        error_tolerance (float | None): Stop once the value drops below it (None disables)
        gradient_tolerance (float): Stop once the gradient norm drops below it

    Returns:
        OptimizationResult: Final point, value and the per-iteration trace
    """
    if method not in OPTIMIZERS:
        raise ConfigError(f"Unknown optimizer {method!r}; choose from {', '.join(OPTIMIZERS)}")

    objective = CachedObjective(fun)
    x = np.array(x0, dtype=float)
    value, gradient, info = objective(x, strict=True)
    initial_value = value
    # scipy's first-step heuristic: expected decrease of half the gradient norm
    previous_value = value + np.linalg.norm(gradient) / 2.0
    inverse_hessian = None
    direction = None
    trace = []
    reason = "max-iterations"
    converged = False

    for iteration in range(max_iterations + 1):
        gradient_norm = float(np.linalg.norm(gradient))
        trace.append({"iteration": iteration, "objective": value, "gradient_norm": gradient_norm, **info})
        if iteration % LOG_EVERY == 0:
            logger.debug("%s iteration %d: objective %.6e, |g| %.3e", method, iteration, value, gradient_norm)

        if error_tolerance is not None and value < error_tolerance:
            reason, converged = "error-threshold", True
            break
        if gradient_norm < gradient_tolerance:
            reason, converged = "gradient-threshold", True
            break
        if iteration == max_iterations:
            break

        direction = _direction(method, gradient, inverse_hessian, direction)
        alpha = _search(objective, x, direction, gradient, value, previous_value, WOLFE_C2[method])
        if alpha is None and method != "gradient-descent":
            logger.debug("Line search failed at iteration %d, restarting along -g", iteration)
            inverse_hessian = None
            direction = -gradient
            alpha = _search(objective, x, direction, gradient, value, previous_value, WOLFE_C2[method])
        if alpha is None:
            reason = "line-search-failed"
            break

        step = alpha * direction
        x_new = x + step
        value_new, gradient_new, info = objective(x_new)
        if value_new > value:
            reason = "line-search-failed"
            break

        if method == "bfgs":
            inverse_hessian = _bfgs_update(inverse_hessian, step, gradient_new - gradient)
        elif method == "conjugate-gradient":
            direction = _conjugate_direction(gradient, gradient_new, direction)

        previous_value, value = value, value_new
        x, gradient = x_new, gradient_new

    logger.debug("%s stopped after %d iterations (%s): objective %.6e",
                 method, trace[-1]["iteration"], reason, value)
    return OptimizationResult(
        x=x, fun=value, gradient_norm=float(np.linalg.norm(gradient)),
        iterations=trace[-1]["iteration"], evaluations=objective.evaluations,
        converged=converged, reason=reason, trace=trace, initial_fun=initial_value,
    )


def _direction(method, gradient, inverse_hessian, previous_direction):
    if method == "bfgs":
        direction = -gradient if inverse_hessian is None else -inverse_hessian @ gradient
    elif method == "conjugate-gradient":
        # after an accepted step previous_direction already holds the next conjugate direction
        direction = -gradient if previous_direction is None else previous_direction
    else:
        direction = -gradient
    if gradient @ direction >= 0:
        direction = -gradient
    return direction


def _conjugate_direction(gradient, gradient_new, direction):
    """Polak-Ribiere+ update; beta is clipped at zero, which restarts along -g."""
    beta = max(0.0, gradient_new @ (gradient_new - gradient) / (gradient @ gradient))
    return -gradient_new + beta * direction


def _bfgs_update(inverse_hessian, s, y):
    """
    Dense inverse-Hessian BFGS update.

    The first update scales the identity by (y.s)/(y.y); pairs without positive
    curvature are skipped.
    """
    curvature = float(y @ s)
    if inverse_hessian is None:
        inverse_hessian = np.eye(len(s))
        if curvature > 0:
            inverse_hessian *= curvature / float(y @ y)
    if curvature <= 0:
        return inverse_hessian
    rho = 1.0 / curvature
    hy = inverse_hessian @ y
    return (inverse_hessian
            + (rho * rho * (y @ hy) + rho) * np.outer(s, s)
            - rho * (np.outer(hy, s) + np.outer(s, hy)))
