"""
Eigenvalue run orchestration
This module turns a RunConfig into solver calls and writes every artifact of a run

Note on artifacts (all CSV files have a header row and 17 significant digits):
- eigenvalues.csv: one row per level with its convergence interpretation
- state_<k>.snapshot, wavefunction_<k>.csv, residual_<k>.csv, iterations_<k>.csv per level
- mesh_table.csv for FEM runs, kernel_signs.csv for the n-alpha sign scan, compare.csv for comparisons
"""
import logging
import os
import time

import attrs
import numpy as np
import pandas as pd

import figures
from femref import DEFAULT_SHIFT, MESH_SIZES, Mesh2D, assemble, dump_matrix, mesh_table, solve_mesh
from problems import KERNEL_SIGN_CONVENTIONS, PROBLEM_DEFAULTS, PROBLEM_IDS, build_problem
from solver import SolveConfig, solve_levels, solve_variational
from trial import EnvelopeKind, reduced_radial, state_values, write_snapshot
from utils import ConfigError, ensure_output_dir, save_results_to_csv

logger = logging.getLogger(__name__)

MODES = ("collocation", "variational", "fem")
COMPARISONS = ("henon-heiles", "muonic")

# Published ground-state energy of the n + alpha problem, MeV
N_ALPHA_REFERENCE = -24.07644

COORDINATE_NAMES = {1: ("r",), 2: ("x", "y"), 3: ("x", "y", "z")}


def _check_mode(instance, attribute, value):
    if value not in MODES:
        raise ConfigError(f"Unknown mode {value!r}; choose from {', '.join(MODES)}")


def _check_problem(instance, attribute, value):
    if value not in PROBLEM_IDS:
        raise ConfigError(f"Unknown problem id {value!r}; choose from {', '.join(PROBLEM_IDS)}")


def _check_optional_positive(instance, attribute, value):
    if value is not None and value < 1:
        raise ConfigError(f"{attribute.name} must be at least 1, got {value}")


@attrs.frozen
class RunConfig:
    problem: str = attrs.field(default="morse", validator=_check_problem)
    mode: str = attrs.field(default="collocation", validator=_check_mode)
    levels: int = 1
    out: str = "results"
    seed: int = 0
    restarts: int = 5
    hidden_units: int = attrs.field(default=None, validator=_check_optional_positive)
    grid: int = attrs.field(default=None, validator=_check_optional_positive)
    mesh: int = attrs.field(default=None, validator=_check_optional_positive)
    optimizer: str = "bfgs"
    max_iterations: int = 5000
    gradient_mode: str = None
    error_tolerance: float = 1e-8
    gradient_tolerance: float = 1e-7
    deterministic: bool = True
    kernel_signs: str = "resolved"
    kernel_scan: bool = False
    shift: float = DEFAULT_SHIFT
    plots: bool = False
    dump_matrices: bool = False

    def __attrs_post_init__(self):
        if self.levels < 1:
            raise ConfigError(f"Level count must be at least 1, got {self.levels}")
        if self.mode == "fem" and self.problem != "henon-heiles":
            raise ConfigError("Mode fem is only available for --problem henon-heiles")
        if self.kernel_signs not in KERNEL_SIGN_CONVENTIONS:
            raise ConfigError(f"Unknown kernel sign convention {self.kernel_signs!r}; "
                              f"choose from {', '.join(KERNEL_SIGN_CONVENTIONS)}")
        if self.kernel_scan and self.problem != "n-alpha":
            raise ConfigError("The kernel sign scan is only available for --problem n-alpha")
        # fail early on invalid solver settings
        self.solve_config()

    def solve_config(self):
        return SolveConfig(
            optimizer=self.optimizer,
            max_iterations=self.max_iterations,
            gradient_mode=self.gradient_mode,
            error_tolerance=self.error_tolerance,
            gradient_tolerance=self.gradient_tolerance,
            restarts=self.restarts,
            seed=self.seed,
            deterministic=self.deterministic,
        )

    def build_problem(self, kernel_signs=None):
        return build_problem(self.problem, grid=self.grid, hidden_units=self.hidden_units,
                             kernel_signs=kernel_signs or self.kernel_signs)

    def as_dict(self):
        return attrs.asdict(self)

    def effective_dict(self):
        """as_dict with the problem's defaults filled in where a setting is unset."""
        values = self.as_dict()
        defaults = PROBLEM_DEFAULTS[self.problem]
        for key in ("hidden_units", "grid", "gradient_mode"):
            if values[key] is None:
                values[key] = defaults[key]
        return values


def run_config_from(values):
    """Build a RunConfig from a flat dict, rejecting unknown keys."""
    known = {field.name for field in attrs.fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def _coordinates(points):
    points = np.atleast_2d(points)
    return {name: points[:, j] for j, name in enumerate(COORDINATE_NAMES[points.shape[1]])}


def wavefunction_table(solution, basis, problem):
    """
    Normalized state on the collocation grid.

    Radial problems report phi(r)/r, Dirac states f(r)/r and g(r)/r.
    """
    points = problem.grid
    snapshot = solution.snapshot
    columns = _coordinates(points)
    if problem.components == 2:
        f, g = snapshot.trials
        columns["f_over_r"] = reduced_radial(f, points) / snapshot.norm
        columns["g_over_r"] = reduced_radial(g, points) / snapshot.norm
    elif problem.envelope_kind is EnvelopeKind.RADIAL_EXP:
        columns["phi"] = state_values(snapshot, basis, points)
        columns["phi_over_r"] = state_values(snapshot, basis, points, reduced=True)
    else:
        columns["psi"] = state_values(snapshot, basis, points)
    return pd.DataFrame(columns)


def _summary_row(solution):
    category, message = solution.category
    return {
        "level": solution.level,
        "eigenvalue": solution.eigenvalue,
        "error": solution.error,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "reason": solution.reason,
        "category": category,
        "message": message,
        "parameters": solution.n_params,
        "wall_time": solution.wall_time,
    }


def write_level_artifacts(solution, basis, problem, out, plots=False):
    """Snapshot, wavefunction, residual map and iteration log of one level."""
    k = solution.level
    write_snapshot(os.path.join(out, f"state_{k}.snapshot"), solution.snapshot)

    wavefunction = wavefunction_table(solution, basis, problem)
    save_results_to_csv(wavefunction, os.path.join(out, f"wavefunction_{k}.csv"))

    residual = pd.DataFrame({**_coordinates(solution.grid), "residual": solution.residuals})
    save_results_to_csv(residual, os.path.join(out, f"residual_{k}.csv"))
    save_results_to_csv(pd.DataFrame(solution.trace), os.path.join(out, f"iterations_{k}.csv"))

    if plots:
        value_columns = [c for c in wavefunction.columns if c not in COORDINATE_NAMES[problem.dimension]]
        figures.wavefunction_figure(problem.grid, [wavefunction[c].to_numpy() for c in value_columns],
                                    os.path.join(out, f"wavefunction_{k}.html"),
                                    f"{problem.problem_id} level {k}: eps = {solution.eigenvalue:.9g}",
                                    labels=tuple(value_columns))
        figures.residual_figure(solution.grid, solution.residuals, os.path.join(out, f"residual_{k}.html"),
                                f"{problem.problem_id} level {k} ({solution.method}) residual")


def run_neural(config, problem=None):
    """Collocation or variational levels for one problem; returns (solutions, basis)."""
    problem = problem or config.build_problem()
    solve_config = config.solve_config()
    if config.mode == "variational":
        if config.levels > 1:
            logger.warning("Variational mode computes the ground state only; ignoring --levels %d", config.levels)
        solution = solve_variational(problem, solve_config)
        return [solution], None
    return solve_levels(problem, solve_config, config.levels)


def run_fem(config):
    """FEM eigenvalue table for the requested mesh, or for every reference mesh size."""
    sizes = (config.mesh,) if config.mesh else MESH_SIZES
    table = mesh_table(sizes, shift=config.shift)
    out = config.out
    save_results_to_csv(table.reset_index(), os.path.join(out, "mesh_table.csv"))

    finest = f"{sizes[-1]}x{sizes[-1]}"
    rows = [{"level": level - 1, "eigenvalue": value, "mesh": finest,
             "unknowns": table.attrs["unknowns"][finest], "wall_time": table.attrs["wall_time"][finest]}
            for level, value in table[finest].items()]
    save_results_to_csv(rows, os.path.join(out, "eigenvalues.csv"))

    if config.dump_matrices:
        system = assemble(Mesh2D(sizes[-1]))
        dump_matrix(system.stiffness, os.path.join(out, "stiffness.txt"))
        dump_matrix(system.mass, os.path.join(out, "mass.txt"))
    if config.plots and len(sizes) > 1:
        figures.convergence_figure(table, os.path.join(out, "fem_convergence.html"))
    return table


def kernel_sign_report(config):
    """
    Ground state of the n + alpha problem under every kernel sign convention.

    Returns:
        DataFrame: convention, signs, eigenvalue, error, converged and deviation from the reference
    """
    rows = []
    for name, (sign_a, sign_gamma) in KERNEL_SIGN_CONVENTIONS.items():
        problem = config.build_problem(kernel_signs=name)
        solutions, _ = solve_levels(problem, config.solve_config(), 1)
        solution = solutions[0]
        rows.append({
            "convention": name,
            "sign_A": sign_a,
            "sign_gamma": sign_gamma,
            "eigenvalue": solution.eigenvalue,
            "error": solution.error,
            "converged": solution.converged,
            "deviation": solution.eigenvalue - N_ALPHA_REFERENCE,
        })
    report = pd.DataFrame(rows)
    save_results_to_csv(report, os.path.join(config.out, "kernel_signs.csv"))
    return report


def run(config):
    """
    Execute a run and write its artifacts.

    Args:
        config (RunConfig): Validated run configuration

    Returns:
        int: 0 when every level converged, 1 otherwise
    """
    ensure_output_dir(config.out)
    logger.info("Running %s (%s) with seed %d into %s", config.problem, config.mode, config.seed, config.out)

    if config.mode == "fem":
        run_fem(config)
        return 0

    problem = config.build_problem()
    solutions, basis = run_neural(config, problem)
    for solution in solutions:
        write_level_artifacts(solution, basis, problem, config.out, config.plots)
    save_results_to_csv([_summary_row(s) for s in solutions], os.path.join(config.out, "eigenvalues.csv"))

    if config.kernel_scan:
        kernel_sign_report(config)

    for solution in solutions:
        logger.info("Level %d: eps = %.10g (error %.3e, %s)", solution.level, solution.eigenvalue,
                    solution.error, solution.category[0])
    return 0 if all(s.converged for s in solutions) else 1


def neural_parameter_count(n_inputs, n_hidden):
    """m*n + 2m network parameters plus the envelope shape."""
    return n_hidden * n_inputs + 2 * n_hidden + 1


def compare(config, which):
    """
    Side-by-side comparison report, written to compare.csv.

    henon-heiles: neural collocation levels against the FEM eigenvalues on one mesh,
    with parameter counts and wall times. muonic: Schrodinger against Dirac ground state.

    Returns:
        DataFrame: The report
    """
    if which not in COMPARISONS:
        raise ConfigError(f"Unknown comparison {which!r}; choose from {', '.join(COMPARISONS)}")
    ensure_output_dir(config.out)
    if which == "henon-heiles":
        report = _compare_henon_heiles(config)
    else:
        report = _compare_muonic(config)
    save_results_to_csv(report, os.path.join(config.out, "compare.csv"))
    return report


def _compare_henon_heiles(config):
    config = attrs.evolve(config, problem="henon-heiles", mode="collocation")
    problem = config.build_problem()
    start = time.perf_counter()
    solutions, _ = solve_levels(problem, config.solve_config(), config.levels)
    neural_time = time.perf_counter() - start
    fem = solve_mesh(config.mesh or MESH_SIZES[-1], config.shift, max(config.levels, 1))

    rows = []
    for solution, fem_value in zip(solutions, fem["eigenvalues"]):
        rows.append({
            "level": solution.level,
            "neural_eigenvalue": solution.eigenvalue,
            "fem_eigenvalue": fem_value,
            "difference": solution.eigenvalue - fem_value,
            "neural_parameters": neural_parameter_count(problem.dimension, problem.hidden_units),
            "fem_unknowns": fem["unknowns"],
            "neural_wall_time": neural_time,
            "fem_wall_time": fem["wall_time"],
        })
    return pd.DataFrame(rows)


def _compare_muonic(config):
    rows = {}
    for problem_id in ("muonic-schrodinger", "muonic-dirac"):
        variant = attrs.evolve(config, problem=problem_id, mode="collocation", levels=1)
        start = time.perf_counter()
        solutions, _ = solve_levels(variant.build_problem(), variant.solve_config(), 1)
        rows[problem_id] = (solutions[0], time.perf_counter() - start)

    schrodinger, schrodinger_time = rows["muonic-schrodinger"]
    dirac, dirac_time = rows["muonic-dirac"]
    return pd.DataFrame([{
        "schrodinger_eigenvalue": schrodinger.eigenvalue,
        "dirac_eigenvalue": dirac.eigenvalue,
        "relativistic_shift": dirac.eigenvalue - schrodinger.eigenvalue,
        "schrodinger_error": schrodinger.error,
        "dirac_error": dirac.error,
        "schrodinger_wall_time": schrodinger_time,
        "dirac_wall_time": dirac_time,
    }])
