"""
Solver module for the neural eigensolver.
Builds the normalized collocation error of a (deflated) trial state, its
Rayleigh-quotient eigenvalue and the analytic parameter gradient, and drives
the optimizer over seeded restarts. Excited states are found one level at a
time against a growing deflation basis; a variational mode minimizes the
Rayleigh quotient directly for comparison.

Collocation error of a state psi on grid points r_i:
    Error = sum_i [H psi(r_i) - eps psi(r_i)]^2 / int psi^2,   eps = <psi|H|psi> / <psi|psi>
"""
import logging
import math
import time
from typing import NamedTuple

import attrs
import numpy as np
import tenacity

from network import MultiIndex
from optimizer import OPTIMIZERS, minimize
from problems import (
    DiracState,
    apply_hamiltonian,
    dirac_energy,
    dirac_error,
    dirac_state_from,
    energy_functional,
    new_dirac_state,
    schrodinger_counterpart,
)
from trial import (
    DeflatedState,
    DeflationBasis,
    Samples,
    StateSnapshot,
    TrialFunction,
    deflate_samples,
    sample,
)
from utils import (
    ConfigError,
    ContractViolation,
    DegenerateStateError,
    EigenSolverError,
    LevelRejected,
    require_finite,
)

logger = logging.getLogger(__name__)

GRADIENT_MODES = ("analytic", "finite-difference")

# Central differences use a step of FD_RELATIVE_STEP * max(1, |parameter|)
FD_RELATIVE_STEP = 1e-6

# An excited state is rejected when it sits this close to a basis eigenvalue ...
LEVEL_COLLAPSE_GAP = 1e-4
# ... and overlaps that basis state by more than this
LEVEL_COLLAPSE_OVERLAP = 1e-3
# Accepted states should be orthogonal to the basis to this level
ORTHOGONALITY_TOLERANCE = 1e-6
LEVEL_ATTEMPTS = 4
# Seed offset between retries of a rejected level
RETRY_SEED_STRIDE = 7919
# Restarts whose error / energy_scale^2 is at most this compete on the lowest eigenvalue
RESTART_ACCEPT_ERROR = 1e-5

# Final collocation error thresholds and interpretations
CONVERGENCE_CATEGORIES = [
    (0.0, 1e-8, "Converged", "Residual is at the convergence threshold; the eigenpair is reliable."),
    (1e-8, 1e-5, "Nearly Converged", "Small residual; the eigenvalue is usable but the state may need more iterations."),
    (1e-5, 1e-2, "Poorly Converged", "Visible residual; rerun with more iterations, restarts or hidden units."),
    (1e-2, float("inf"), "Not Converged", "The optimizer did not find an eigenstate; do not use this level."),
]


def interpret_convergence(error, categories=CONVERGENCE_CATEGORIES):
    """
    Determine the convergence category and interpretation for a final collocation error

    Args:
        error (float): Final collocation error
        categories (list): (lower, upper, category, message) rows

    Returns:
        tuple: (category, message)
    """
    for lower, upper, category, message in categories:
        if lower <= error < upper:
            return category, message
    return "Unknown", "No interpretation available."


def _positive(instance, attribute, value):
    if not (value > 0):
        raise ConfigError(f"{attribute.name} must be positive, got {value}")


def _non_negative(instance, attribute, value):
    if value is not None and value < 0:
        raise ConfigError(f"{attribute.name} must not be negative, got {value}")


def _one_of(choices):
    def validate(instance, attribute, value):
        if value is not None and value not in choices:
            raise ConfigError(f"{attribute.name} must be one of {', '.join(choices)}, got {value!r}")
    return validate


@attrs.frozen
class SolveConfig:
    """Optimizer settings shared by every level of a run."""

    optimizer: str = attrs.field(default="bfgs", validator=_one_of(OPTIMIZERS))
    max_iterations: int = attrs.field(default=5000, validator=_positive)
    # None selects the problem's default gradient mode
    gradient_mode: str = attrs.field(default=None, validator=_one_of(GRADIENT_MODES))
    error_tolerance: float = attrs.field(default=1e-8, validator=_positive)
    gradient_tolerance: float = attrs.field(default=1e-7, validator=_positive)
    restarts: int = attrs.field(default=5, validator=_positive)
    seed: int = 0
    deterministic: bool = True
    optimize_shape: bool = True
    log_shape: bool = True
    # None selects the problem's default number of Rayleigh-quotient iterations
    warmup_iterations: int = attrs.field(default=None, validator=_non_negative)
    # Start two-component states from the matching Schrodinger ground state
    dirac_warm_start: bool = True

    def warmup_for(self, problem):
        return problem.warmup_iterations if self.warmup_iterations is None else self.warmup_iterations

    def gradient_mode_for(self, problem):
        mode = self.gradient_mode or problem.gradient_mode
        if problem.components == 2 and mode != "finite-difference":
            raise ConfigError(f"{problem.problem_id} supports finite-difference gradients only")
        return mode


@attrs.frozen(eq=False)
class EigenSolution:
    """One computed level: eigenvalue, final error, frozen state and diagnostics."""

    problem_id: str
    method: str
    level: int
    eigenvalue: float
    error: float = attrs.field()
    snapshot: StateSnapshot
    residuals: np.ndarray
    grid: np.ndarray
    iterations: int
    wall_time: float
    converged: bool
    reason: str
    trace: list
    seed: int
    overlaps: np.ndarray = attrs.field(factory=lambda: np.zeros(0))

    @error.validator
    def _check_error(self, attribute, value):
        if not value >= 0:
            raise ContractViolation(f"Collocation error must be non-negative, got {value}")

    @property
    def norm(self):
        return self.snapshot.norm

    @property
    def n_params(self):
        return sum(tf.net.n_params for tf in self.snapshot.trials) + int(self.snapshot.trials[0].optimize_shape)

    @property
    def category(self):
        return interpret_convergence(self.error)


class Evaluation(NamedTuple):
    error: float
    eigenvalue: float
    norm_squared: float
    residuals: np.ndarray
    overlaps: np.ndarray
    error_gradient: np.ndarray = None
    eigenvalue_gradient: np.ndarray = None


def _reduce(values, ordered):
    return math.fsum(values) if ordered else float(np.sum(values))


def _with_nodes(problem, grid, quad):
    changes = {}
    if grid is not None:
        changes["grid"] = grid
    if quad is not None:
        changes["quad"] = quad
    return attrs.evolve(problem, **changes) if changes else problem


class CollocationObjective:
    """
    Collocation error, eigenvalue and their parameter gradients for a single-component problem.

    Basis-state samples at the grid and quadrature nodes are computed once, so
    each evaluation only samples the current trial function.
    """

    def __init__(self, problem, template, basis=None, ordered=True):
        if problem.components != 1:
            raise ContractViolation(f"{problem.problem_id} is not a single-component problem")
        self.problem = problem
        self.template = template
        self.basis = basis if basis is not None else DeflationBasis()
        self.ordered = ordered
        self.zero = MultiIndex.zeros(problem.dimension)

        grid_indices, quad_indices = problem.grid_indices(), problem.quad_indices()
        if problem.shares_nodes:
            grid_indices = quad_indices = list(dict.fromkeys(grid_indices + quad_indices))
        self.grid_indices, self.quad_indices = grid_indices, quad_indices

        self.basis_grid = self.basis_quad = None
        if len(self.basis):
            self.basis_grid = self.basis.sample(problem.grid, grid_indices)
            self.basis_quad = (self.basis_grid if problem.shares_nodes
                               else self.basis.sample(problem.quad.points, quad_indices))

    def samples(self, tf, with_gradient=False):
        """Deflated samples at the grid and at the quadrature nodes, plus the overlaps."""
        problem = self.problem
        grid = sample(tf, problem.grid, self.grid_indices, with_gradient)
        quad = grid if problem.shares_nodes else sample(tf, problem.quad.points, self.quad_indices,
                                                        with_gradient)
        if self.basis_grid is None:
            return grid, quad, np.zeros(0)

        raw_at_quad = quad[self.zero]
        basis_at_quad = self.basis_quad[self.zero]
        weights = problem.quad.weights
        grid, overlaps = deflate_samples(grid, raw_at_quad, self.basis_grid, basis_at_quad, weights)
        if problem.shares_nodes:
            return grid, grid, overlaps
        quad, _ = deflate_samples(quad, raw_at_quad, self.basis_quad, basis_at_quad, weights)
        return grid, quad, overlaps

    def evaluate(self, params, with_gradient=False):
        tf = self.template.with_parameters(params)
        return self.evaluate_trial(tf, with_gradient)

    def evaluate_trial(self, tf, with_gradient=False):
        problem = self.problem
        grid, quad, overlaps = self.samples(tf, with_gradient)

        numerator, norm_squared, numerator_gradient, norm_gradient = energy_functional(
            problem, quad, self.ordered)
        if not norm_squared > 0:
            raise DegenerateStateError(f"{problem.problem_id}: trial state has zero norm")
        eigenvalue = numerator / norm_squared

        psi = grid[self.zero]
        h_psi = apply_hamiltonian(problem, grid, problem.potential_at_grid,
                                  problem.kernel_at_grid, quad[self.zero])
        residual = h_psi.values - eigenvalue * psi.values
        require_finite(residual, "collocation residual", problem.grid)
        summands = residual * residual / norm_squared
        error = _reduce(summands, self.ordered)

        if not with_gradient:
            return Evaluation(error, eigenvalue, norm_squared, summands, overlaps)

        eigenvalue_gradient = (numerator_gradient - eigenvalue * norm_gradient) / norm_squared
        residual_jacobian = (h_psi.jacobian - eigenvalue * psi.jacobian
                             - np.outer(psi.values, eigenvalue_gradient))
        error_gradient = 2.0 * (residual @ residual_jacobian) / norm_squared - error * norm_gradient / norm_squared
        return Evaluation(error, eigenvalue, norm_squared, summands, overlaps,
                          error_gradient, eigenvalue_gradient)


class DiracObjective:
    """Summed residual of both coupled Dirac equations, normalized by int (g^2 + f^2)."""

    def __init__(self, problem, template, ordered=True):
        if problem.components != 2:
            raise ContractViolation(f"{problem.problem_id} is not a two-component problem")
        self.problem = problem
        self.template = template
        self.ordered = ordered

    def evaluate(self, params, with_gradient=False):
        """Value only; gradients of the coupled system come from finite differences."""
        state = self.template.with_parameters(params)
        error, total_energy, summands = dirac_error(state, self.problem, self.ordered)
        require_finite(summands, "Dirac residual", self.problem.grid)
        f, g = (_values_at(tf, self.problem.quad.points) for tf in state.trials)
        norm_squared = _reduce(self.problem.quad.weights * (g * g + f * f), self.ordered)
        binding = total_energy - self.problem.params.reduced_mass
        return Evaluation(error, binding, norm_squared, summands, np.zeros(0))


def _values_at(tf, points):
    zero = MultiIndex.zeros(tf.dimension)
    return sample(tf, points, [zero])[zero].values


def finite_difference_gradient(value, params, relative_step=FD_RELATIVE_STEP):
    """
    Central finite-difference gradient.

    Args:
        value (callable): params -> float
        params (ndarray): Point of evaluation
        relative_step (float): Step is relative_step * max(1, |param|)

    Returns:
        ndarray: Gradient estimate
    """
    params = np.asarray(params, dtype=float)
    gradient = np.empty_like(params)
    for i in range(len(params)):
        step = relative_step * max(1.0, abs(params[i]))
        up, down = params.copy(), params.copy()
        up[i] += step
        down[i] -= step
        gradient[i] = (value(up) - value(down)) / (up[i] - down[i])
    return gradient


def trial_template(problem, params, optimize_shape=True, log_shape=True):
    """
    A trial state of the right structure for an optimization vector.

    The number of hidden units follows from the vector length.
    """
    params = np.asarray(params, dtype=float)
    components = problem.components
    per_unit = problem.dimension + 2
    free = len(params) - (1 if optimize_shape else 0)
    if free <= 0 or free % (components * per_unit):
        raise ContractViolation(f"{len(params)} parameters do not fit a {problem.problem_id} trial state")
    hidden = free // (components * per_unit)
    rng = np.random.default_rng(0)
    if components == 2:
        return new_dirac_state(problem, rng, hidden, optimize_shape)
    trial = problem.new_trial(rng, hidden, optimize_shape)
    return attrs.evolve(trial, log_shape=log_shape)


def _objective_for(problem, template, basis, ordered):
    if problem.components == 2:
        return DiracObjective(problem, template, ordered)
    return CollocationObjective(problem, template, basis, ordered)


def collocation_error(params, problem, grid=None, quad=None, basis=None):
    """
    Normalized collocation error of the (deflated) trial state.

    Args:
        params (ndarray): Optimization vector (network parameters, then log shape)
        problem (Problem): The problem
        grid (ndarray, optional): Collocation points replacing the problem's grid
        quad (QuadratureRule | TensorGrid, optional): Rule replacing the problem's quadrature
        basis (DeflationBasis, optional): States to project out

    Returns:
        float: sum_i [H psi - eps psi]^2(r_i) / int psi^2
    """
    problem = _with_nodes(problem, grid, quad)
    objective = _objective_for(problem, trial_template(problem, params), basis, True)
    return objective.evaluate(params).error


def error_gradient(params, problem, grid=None, quad=None, basis=None, mode="analytic"):
    """
    Gradient of collocation_error with respect to the optimization vector.

    Args:
        params (ndarray): Optimization vector
        problem (Problem): The problem
        grid (ndarray, optional): Collocation points replacing the problem's grid
        quad (QuadratureRule | TensorGrid, optional): Rule replacing the problem's quadrature
        basis (DeflationBasis, optional): States to project out
        mode (str): "analytic" (single-component problems) or "finite-difference"

    Returns:
        ndarray: The gradient
    """
    if mode not in GRADIENT_MODES:
        raise ConfigError(f"Unknown gradient mode {mode!r}")
    problem = _with_nodes(problem, grid, quad)
    objective = _objective_for(problem, trial_template(problem, params), basis, True)
    if mode == "finite-difference" or problem.components == 2:
        return finite_difference_gradient(lambda p: objective.evaluate(p).error, params)
    return objective.evaluate(params, with_gradient=True).error_gradient


def rayleigh_quotient(state, problem, quad=None, basis=None):
    """
    Energy of a state from the problem's energy functional.

    Args:
        state (TrialFunction | DeflatedState | StateSnapshot | DiracState): The state
        problem (Problem): The problem
        quad (QuadratureRule | TensorGrid, optional): Rule replacing the problem's quadrature
        basis (DeflationBasis, optional): Basis a snapshot's projections refer to

    Returns:
        float: eps = <psi|H|psi> / <psi|psi>; the binding energy for Dirac states

    Raises:
        DegenerateStateError: if the state has zero norm on the rule
    """
    problem = _with_nodes(problem, None, quad)
    if isinstance(state, StateSnapshot) and len(state.trials) == 2:
        state = DiracState(*state.trials)
    if isinstance(state, DiracState):
        return dirac_energy(state, problem) - problem.params.reduced_mass

    points = problem.quad.points
    indices = problem.quad_indices()
    if isinstance(state, TrialFunction):
        samples = sample(state, points, indices)
    elif isinstance(state, DeflatedState):
        samples = {mi: Samples(state.derivative(points, mi)) for mi in indices}
    elif isinstance(state, StateSnapshot):
        samples = _snapshot_samples(state, basis, points, indices)
    else:
        raise ContractViolation(f"Cannot form a Rayleigh quotient of {type(state).__name__}")

    numerator, norm_squared, _, _ = energy_functional(problem, samples)
    if not norm_squared > 0:
        raise DegenerateStateError(f"{problem.problem_id}: state has zero norm on the quadrature rule")
    return numerator / norm_squared


def _snapshot_samples(snapshot, basis, points, indices):
    raw = sample(snapshot.trials[0], points, indices)
    count = len(snapshot.projections)
    if count == 0:
        return raw
    if basis is None or len(basis) < count:
        raise ContractViolation(f"Snapshot needs the {count} basis states it was deflated against")
    table = basis.sample(points, indices)
    projections = np.asarray(snapshot.projections)
    return {mi: Samples(raw[mi].values - projections @ table[mi][:count]) for mi in indices}


def _optimizer_function(objective, scale, variational, analytic):
    """x -> (scaled objective, scaled gradient, trace info) for the optimizer."""

    def fun(params):
        evaluation = objective.evaluate(params, with_gradient=analytic)
        if variational:
            value = evaluation.eigenvalue / scale
            gradient = evaluation.eigenvalue_gradient if analytic else finite_difference_gradient(
                lambda p: objective.evaluate(p).eigenvalue, params)
            gradient = gradient / scale
        else:
            value = evaluation.error / scale ** 2
            gradient = evaluation.error_gradient if analytic else finite_difference_gradient(
                lambda p: objective.evaluate(p).error, params)
            gradient = gradient / scale ** 2
        return value, gradient, {"error": evaluation.error, "eigenvalue": evaluation.eigenvalue}

    return fun


def _initial_state(problem, rng, config, guess=None):
    if problem.components == 2:
        if guess is not None:
            return dirac_state_from(guess, problem, rng)
        return new_dirac_state(problem, rng, optimize_shape=config.optimize_shape)
    trial = problem.new_trial(rng, optimize_shape=config.optimize_shape)
    return attrs.evolve(trial, log_shape=config.log_shape)


def _schrodinger_guess(problem, config):
    """Large-component starting trial: the Schrodinger ground state on the same nodes."""
    counterpart = schrodinger_counterpart(problem)
    logger.info("%s: solving %s for the starting state", problem.problem_id, counterpart.problem_id)
    solution = _run(counterpart, attrs.evolve(config, gradient_mode=None), None, 0, variational=False)
    logger.info("%s: starting from eps=%.9g", problem.problem_id, solution.eigenvalue)
    return solution.snapshot.trials[0]


def _admissible(problem, evaluation):
    """Two-component states must have positive total energy."""
    return problem.components == 1 or evaluation.eigenvalue > -problem.params.reduced_mass


def restart_key(problem, evaluation, variational=False):
    """
    Restart ranking: lowest eigenvalue among restarts whose scaled error is within
    RESTART_ACCEPT_ERROR, then every other restart by lowest error.
    """
    if variational:
        return (0, evaluation.eigenvalue)
    accepted = (evaluation.error / problem.energy_scale ** 2 <= RESTART_ACCEPT_ERROR
                and _admissible(problem, evaluation))
    return (0, evaluation.eigenvalue) if accepted else (1, evaluation.error)


def _run(problem, config, basis, level, variational):
    mode = config.gradient_mode_for(problem)
    analytic = mode == "analytic" and problem.components == 1
    basis = basis if basis is not None else DeflationBasis()
    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)
    method = "variational" if variational else "collocation"
    warmup = 0 if variational or problem.components != 1 else config.warmup_for(problem)
    guess = _schrodinger_guess(problem, config) if problem.components == 2 and config.dirac_warm_start else None

    best = None
    start = time.perf_counter()
    for restart, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        template = _initial_state(problem, rng, config, guess)
        objective = _objective_for(problem, template, basis, config.deterministic)
        fun = _optimizer_function(objective, problem.energy_scale, variational, analytic)
        try:
            x0 = template.parameters()
            if warmup:
                steer = _optimizer_function(objective, problem.energy_scale, True, analytic)
                x0 = minimize(steer, x0, method=config.optimizer, max_iterations=warmup,
                              error_tolerance=None, gradient_tolerance=config.gradient_tolerance).x
            result = minimize(
                fun, x0, method=config.optimizer,
                max_iterations=config.max_iterations,
                error_tolerance=None if variational else config.error_tolerance,
                gradient_tolerance=config.gradient_tolerance,
            )
        except EigenSolverError as e:
            logger.warning("%s level %d restart %d failed to start: %s", problem.problem_id, level, restart, e)
            continue

        evaluation = objective.evaluate(result.x)
        logger.info("%s %s level %d restart %d: eps=%.9g error=%.3e after %d iterations (%s)",
                    problem.problem_id, method, level, restart, evaluation.eigenvalue,
                    evaluation.error, result.iterations, result.reason)
        key = restart_key(problem, evaluation, variational)
        if best is None or key < best[0]:
            best = (key, result, evaluation, objective.template.with_parameters(result.x), restart)

    if best is None:
        raise DegenerateStateError(f"{problem.problem_id}: no restart produced a usable trial state")

    _, result, evaluation, state, restart = best
    snapshot = StateSnapshot(problem.problem_id, tuple(state.trials) if problem.components == 2 else (state,),
                             math.sqrt(evaluation.norm_squared), evaluation.eigenvalue,
                             tuple(float(c) for c in evaluation.overlaps))
    solution = EigenSolution(
        problem_id=problem.problem_id,
        method=method,
        level=level,
        eigenvalue=evaluation.eigenvalue,
        error=evaluation.error,
        snapshot=snapshot,
        residuals=evaluation.residuals,
        grid=problem.grid,
        iterations=result.iterations,
        wall_time=time.perf_counter() - start,
        converged=result.converged,
        reason=result.reason,
        trace=result.trace,
        seed=config.seed,
    )
    if len(basis):
        solution = attrs.evolve(solution, overlaps=basis_overlaps(solution, basis, problem))
    if not solution.converged:
        logger.warning("%s level %d did not converge (%s); reporting the best restart (%d)",
                       problem.problem_id, level, result.reason, restart)
    return solution


def solve(problem, config, basis=None, level=0):
    """
    Minimize the collocation error over seeded restarts.

    Args:
        problem (Problem): The problem
        config (SolveConfig): Optimizer settings
        basis (DeflationBasis, optional): Already accepted states to project out
        level (int): Level index, for reporting

    Returns:
        EigenSolution: Lowest-eigenvalue restart among those with an acceptable error, else the
        lowest-error restart; converged is False when it did not reach a threshold
    """
    if basis is not None and len(basis) and problem.components != 1:
        raise ConfigError(f"{problem.problem_id} does not support excited states")
    for state in (basis.states if basis is not None else []):
        if state.problem_id != problem.problem_id:
            raise ContractViolation(f"Basis state from {state.problem_id} used for {problem.problem_id}")
    return _run(problem, config, basis, level, variational=False)


def solve_variational(problem, config):
    """
    Minimize the Rayleigh quotient directly, with the same trial form.

    The returned residuals are the per-point collocation summands of the
    variational state, for comparison with a collocation solve.
    """
    if problem.components != 1:
        raise ConfigError(f"Variational mode is not available for {problem.problem_id}")
    return _run(problem, config, None, 0, variational=True)


def basis_overlaps(solution, basis, problem):
    """Quadrature overlaps <psi|psi_a> of a normalized solution with every basis state."""
    if not len(basis):
        return np.zeros(0)
    zero = MultiIndex.zeros(problem.dimension)
    points, weights = problem.quad.points, problem.quad.weights
    table = basis.sample(points, [zero])[zero]
    values = _snapshot_samples(solution.snapshot, basis, points, [zero])[zero].values / solution.norm
    return table @ (weights * values)


def check_level(solution, basis, problem):
    """
    Reject an excited state that collapsed onto a basis state.

    Raises:
        LevelRejected: eigenvalue within LEVEL_COLLAPSE_GAP of a basis eigenvalue while the
        overlap with that state exceeds LEVEL_COLLAPSE_OVERLAP
    """
    overlaps = basis_overlaps(solution, basis, problem)
    for state, overlap in zip(basis.states, overlaps):
        if abs(solution.eigenvalue - state.eigenvalue) < LEVEL_COLLAPSE_GAP and abs(overlap) > LEVEL_COLLAPSE_OVERLAP:
            raise LevelRejected(f"Level {solution.level} collapsed onto eps={state.eigenvalue:.9g} "
                                f"(overlap {overlap:.2e})")
    if len(overlaps) and np.max(np.abs(overlaps)) > ORTHOGONALITY_TOLERANCE:
        logger.warning("Level %d overlap with the basis is %.2e", solution.level, np.max(np.abs(overlaps)))
    return overlaps


def solve_levels(problem, config, levels):
    """
    Solve the lowest `levels` states in order, each deflated against the earlier ones.

    A rejected level is re-run with a fresh seed, at most LEVEL_ATTEMPTS times.

    Returns:
        tuple: (list of EigenSolution, DeflationBasis of the accepted states)
    """
    if levels < 1:
        raise ConfigError(f"Level count must be at least 1, got {levels}")
    if levels > 1 and problem.components != 1:
        raise ConfigError(f"{problem.problem_id} supports the ground state only")

    basis = DeflationBasis()
    solutions = []
    for level in range(levels):
        retrying = tenacity.Retrying(
            retry=tenacity.retry_if_exception_type(LevelRejected),
            stop=tenacity.stop_after_attempt(LEVEL_ATTEMPTS),
            reraise=True,
        )
        for attempt in retrying:
            with attempt:
                offset = RETRY_SEED_STRIDE * (attempt.retry_state.attempt_number - 1)
                attempt_config = attrs.evolve(config, seed=config.seed + 1000 * level + offset)
                solution = solve(problem, attempt_config, basis, level)
                if len(basis):
                    try:
                        solution = attrs.evolve(solution, overlaps=check_level(solution, basis, problem))
                    except LevelRejected as e:
                        logger.warning("%s; retrying with a new seed", e)
                        raise
        solutions.append(solution)
        if problem.components == 1:
            basis.append(solution.snapshot)
    return solutions, basis
