"""
Eigenproblem catalog for the neural eigensolver.
Each problem bundles its domain, collocation grid, quadrature rule, envelope
family, Hamiltonian (kinetic coefficient, local potential and optional non-local
kernel) and energy functional, together with every physical constant it needs.

Note on units:
- morse: atomic units (hbar = 1), energies in hartree
- muonic-schrodinger, muonic-dirac, n-alpha: lengths in fm, energies in MeV
- henon-heiles, sextic-3d: dimensionless
"""
import functools
import logging
import math

import attrs
import numpy as np
from scipy.special import expit, xlogy

from network import Mlp, MultiIndex
from quadrature import (
    check_truncation,
    equidistant,
    gauss_legendre,
    tensor_product,
    trapezoid,
    weighted_sum,
)
from trial import Envelope, EnvelopeKind, Samples, TrialFunction, reduced_radial, sample
from utils import ConfigError, ContractViolation

logger = logging.getLogger(__name__)

PROBLEM_IDS = ("morse", "muonic-schrodinger", "muonic-dirac", "n-alpha", "henon-heiles", "sextic-3d")

# Constants not printed with the benchmarks, taken from standard tables (MeV, fm)
PHYSICAL_CONSTANTS = {
    "muon_mass": 105.6584,
    "proton_mass": 938.2720,
    "neutron_mass": 939.5654,
    "hbar_c": 197.3270,
    "electron_compton_wavelength": 386.159,  # reduced, i.e. divided by 2 pi
    "fine_structure": 1.0 / 137.037,
}

MORSE_PARAMS = {
    "D": 0.0224,
    "alpha": 0.9374,
    "mu": 119406.0,
    "zeta": 156.047612535,
    "xi": 5.741837286e-4,
}

# Fermi proton density and vacuum polarization constants for Pb-208
MUONIC_PARAMS = {
    "A": 0.0614932,
    "b": 6.685,
    "c": 0.545,
    "C": 1.781,
    "Z": 82,
    "N": 126,
    "r_max": 40.0,
}

NONLOCAL_PARAMS = {
    "V0": 41.28386,
    "beta_pot": 0.2751965,
    "A_k": 62.03772,   # magnitude; sign chosen by the kernel sign convention
    "gamma": 0.8025,   # magnitude; sign chosen by the kernel sign convention
    "k": 0.46,
    "r_max": 12.0,
}

# (sign of A, sign of gamma) in K0 = -A exp(-gamma (r^2 + r'^2)) (exp(2krr') - exp(-2krr')).
# "resolved" reads the printed minus signs on A and gamma as a double negation.
KERNEL_SIGN_CONVENTIONS = {
    "resolved": (1.0, 1.0),
    "as-printed": (-1.0, -1.0),
    "printed-A": (-1.0, 1.0),
    "printed-gamma": (1.0, -1.0),
}

# hbar^2 / m_N in MeV fm^2 used with the exchange kernel; "cluster" gives both nucleons this mass
CLUSTER_HBAR2_OVER_M = 41.47
NUCLEON_MASS_CONVENTIONS = ("cluster", "physical")

# Default discretization and network settings per problem. "warmup" is the number
# of Rayleigh-quotient iterations run before the collocation fit of every restart.
PROBLEM_DEFAULTS = {
    "morse": {"grid": 150, "quad": 150, "hidden_units": 8, "shape": 30.0, "warmup": 0,
              "gradient_mode": "analytic", "energy_scale": MORSE_PARAMS["xi"]},
    "muonic-schrodinger": {"grid": 80, "quad": 80, "hidden_units": 8, "shape": 0.3, "warmup": 0,
                           "gradient_mode": "analytic", "energy_scale": 10.0},
    "muonic-dirac": {"grid": 80, "quad": 80, "hidden_units": 8, "shape": 0.3, "warmup": 0,
                     "gradient_mode": "finite-difference", "energy_scale": 1.0},
    "n-alpha": {"grid": 100, "quad": 64, "hidden_units": 8, "shape": 1.0, "warmup": 200,
                "gradient_mode": "finite-difference", "energy_scale": 10.0},
    "henon-heiles": {"grid": 20, "quad": 20, "hidden_units": 8, "shape": 0.5, "warmup": 300,
                     "gradient_mode": "analytic", "energy_scale": 1.0},
    "sextic-3d": {"grid": 28, "quad": 28, "hidden_units": 25, "shape": 1.0, "warmup": 200,
                  "gradient_mode": "analytic", "energy_scale": 1.0},
}

ENERGY_FORMS = ("expectation", "gradient")

# Nodes per sub-interval for the radial potential integrals
POTENTIAL_QUADRATURE_NODES = 200

# Below this radius (fm) the vacuum polarization uses its r -> 0 limit
SMALL_RADIUS = 1e-6

# Initial scale of the small Dirac component relative to the large one
SMALL_COMPONENT_SCALE = 0.1


@attrs.frozen
class MorseParams:
    D: float = MORSE_PARAMS["D"]
    alpha: float = MORSE_PARAMS["alpha"]
    mu: float = MORSE_PARAMS["mu"]
    zeta: float = MORSE_PARAMS["zeta"]
    xi: float = MORSE_PARAMS["xi"]


@attrs.frozen
class MuonicParams:
    A: float = MUONIC_PARAMS["A"]
    b: float = MUONIC_PARAMS["b"]
    c: float = MUONIC_PARAMS["c"]
    C: float = MUONIC_PARAMS["C"]
    Z: int = MUONIC_PARAMS["Z"]
    N: int = MUONIC_PARAMS["N"]
    r_max: float = MUONIC_PARAMS["r_max"]
    fine_structure: float = PHYSICAL_CONSTANTS["fine_structure"]
    electron_compton_wavelength: float = PHYSICAL_CONSTANTS["electron_compton_wavelength"]
    muon_mass: float = PHYSICAL_CONSTANTS["muon_mass"]
    proton_mass: float = PHYSICAL_CONSTANTS["proton_mass"]
    neutron_mass: float = PHYSICAL_CONSTANTS["neutron_mass"]
    hbar_c: float = PHYSICAL_CONSTANTS["hbar_c"]

    @property
    def e_squared(self):
        """e^2 = alpha hbar c in MeV fm."""
        return self.fine_structure * self.hbar_c

    @property
    def reduced_mass(self):
        """1/mu = 1/m_mu + 1/(Z m_p + N m_n), in MeV."""
        nucleus = self.Z * self.proton_mass + self.N * self.neutron_mass
        return 1.0 / (1.0 / self.muon_mass + 1.0 / nucleus)


@attrs.frozen
class NonlocalParams:
    V0: float = NONLOCAL_PARAMS["V0"]
    beta_pot: float = NONLOCAL_PARAMS["beta_pot"]
    A_k: float = NONLOCAL_PARAMS["A_k"]
    gamma: float = NONLOCAL_PARAMS["gamma"]
    k: float = NONLOCAL_PARAMS["k"]
    r_max: float = NONLOCAL_PARAMS["r_max"]
    signs: str = attrs.field(default="resolved")
    masses: str = attrs.field(default="cluster")

    @signs.validator
    def _check_signs(self, attribute, value):
        if value not in KERNEL_SIGN_CONVENTIONS:
            raise ConfigError(f"Unknown kernel sign convention {value!r}; "
                              f"choose from {sorted(KERNEL_SIGN_CONVENTIONS)}")

    @masses.validator
    def _check_masses(self, attribute, value):
        if value not in NUCLEON_MASS_CONVENTIONS:
            raise ConfigError(f"Unknown nucleon mass convention {value!r}; "
                              f"choose from {sorted(NUCLEON_MASS_CONVENTIONS)}")

    def nucleon_masses(self):
        """(m_n, m_p) in MeV for the selected mass convention."""
        if self.masses == "physical":
            return PHYSICAL_CONSTANTS["neutron_mass"], PHYSICAL_CONSTANTS["proton_mass"]
        m = PHYSICAL_CONSTANTS["hbar_c"] ** 2 / CLUSTER_HBAR2_OVER_M
        return m, m

    @property
    def reduced_mass(self):
        """1/mu = 1/m_n + 1/(2 m_n + 2 m_p), in MeV."""
        m_n, m_p = self.nucleon_masses()
        return 1.0 / (1.0 / m_n + 1.0 / (2.0 * m_n + 2.0 * m_p))


@attrs.frozen(eq=False, slots=False)
class Problem:
    """
    An eigenproblem H psi = eps psi with H = -kinetic * Laplacian + V (+ kernel integral).

    `potential` maps points (P, d) to V (P,); `kernel` (optional) maps two radius
    arrays broadcast against each other to K(r, r'). `energy_form` selects the
    energy integrand: "expectation" integrates psi H psi, "gradient" integrates
    kinetic |grad psi|^2 + V psi^2 (+ the double kernel integral).
    """

    problem_id: str
    dimension: int
    domain: tuple
    grid: np.ndarray = attrs.field(converter=lambda v: np.atleast_2d(np.asarray(v, dtype=float)))
    quad: object
    envelope_kind: EnvelopeKind = attrs.field(converter=EnvelopeKind)
    initial_shape: float
    hidden_units: int
    kinetic: float
    potential: object
    energy_form: str = attrs.field(default="expectation")
    kernel: object = None
    components: int = 1
    gradient_mode: str = "analytic"
    energy_scale: float = 1.0
    truncated: bool = False
    params: object = None
    warmup_iterations: int = 0

    @energy_form.validator
    def _check_energy_form(self, attribute, value):
        if value not in ENERGY_FORMS:
            raise ContractViolation(f"Unknown energy form {value!r}")

    def __attrs_post_init__(self):
        if self.grid.shape[1] != self.dimension or self.quad.dimension != self.dimension:
            raise ContractViolation(f"{self.problem_id}: grid/quadrature dimension mismatch")
        if len(self.grid) == 0:
            raise ContractViolation(f"{self.problem_id}: empty collocation grid")

    @functools.cached_property
    def potential_at_grid(self):
        return np.asarray(self.potential(self.grid), dtype=float)

    @functools.cached_property
    def potential_at_quad(self):
        return np.asarray(self.potential(self.quad.points), dtype=float)

    @functools.cached_property
    def kernel_at_grid(self):
        """K(r_i, q_k) w_k, the kernel integral as a (P, Q) matrix acting on quadrature samples."""
        if self.kernel is None:
            return None
        return self.kernel(self.grid[:, :1], self.quad.points[:, 0][None, :]) * self.quad.weights

    @functools.cached_property
    def kernel_at_quad(self):
        if self.kernel is None:
            return None
        return self.kernel(self.quad.points[:, :1], self.quad.points[:, 0][None, :]) * self.quad.weights

    @property
    def shares_nodes(self):
        """True when collocation points and quadrature nodes coincide."""
        return self.grid.shape == self.quad.points.shape and np.array_equal(self.grid, self.quad.points)

    def grid_indices(self):
        d = self.dimension
        return [MultiIndex.zeros(d)] + [MultiIndex.axis(d, j, 2) for j in range(d)]

    def quad_indices(self):
        d = self.dimension
        order = 1 if self.energy_form == "gradient" else 2
        return [MultiIndex.zeros(d)] + [MultiIndex.axis(d, j, order) for j in range(d)]

    def new_trial(self, rng, hidden_units=None, optimize_shape=True):
        """Random trial function with the problem's envelope and initial shape."""
        net = Mlp.random(self.dimension, hidden_units or self.hidden_units, rng)
        return TrialFunction(Envelope(self.envelope_kind, self.initial_shape), net, optimize_shape)


def apply_hamiltonian(problem, samples, potential, kernel_rows=None, quad_samples=None):
    """
    H psi at the points where `samples` were taken, with its Jacobian when available.

    Args:
        problem (Problem): The problem
        samples (dict): MultiIndex -> Samples holding the value and pure second derivatives
        potential (ndarray): V at the same points
        kernel_rows (ndarray, optional): (P, Q) kernel matrix with quadrature weights folded in
        quad_samples (Samples, optional): Trial values at the quadrature nodes, for the kernel

    Returns:
        Samples: H psi values and Jacobian
    """
    d = problem.dimension
    zero = samples[MultiIndex.zeros(d)]
    seconds = [samples[MultiIndex.axis(d, j, 2)] for j in range(d)]

    values = potential * zero.values - problem.kinetic * sum(s.values for s in seconds)
    jacobian = None
    if zero.jacobian is not None:
        jacobian = potential[:, None] * zero.jacobian - problem.kinetic * sum(s.jacobian for s in seconds)

    if kernel_rows is not None:
        values = values + kernel_rows @ quad_samples.values
        if jacobian is not None:
            jacobian = jacobian + kernel_rows @ quad_samples.jacobian
    return Samples(values, jacobian)


def energy_functional(problem, quad_samples, ordered=True):
    """
    Numerator and norm of the Rayleigh quotient on the problem's quadrature rule.

    Args:
        problem (Problem): The problem
        quad_samples (dict): MultiIndex -> Samples at the quadrature nodes (problem.quad_indices())
        ordered (bool): Deterministic, exactly rounded scalar sums

    Returns:
        tuple: (numerator, norm_squared, numerator gradient or None, norm_squared gradient or None)
    """
    d = problem.dimension
    w = problem.quad.weights
    zero = quad_samples[MultiIndex.zeros(d)]
    psi = zero.values
    with_gradient = zero.jacobian is not None

    norm_squared = weighted_sum(w, psi * psi, ordered)
    norm_gradient = 2.0 * (w * psi) @ zero.jacobian if with_gradient else None

    if problem.energy_form == "expectation":
        h_psi = apply_hamiltonian(problem, quad_samples, problem.potential_at_quad,
                                  problem.kernel_at_quad, zero)
        numerator = weighted_sum(w, psi * h_psi.values, ordered)
        numerator_gradient = None
        if with_gradient:
            numerator_gradient = (w * h_psi.values) @ zero.jacobian + (w * psi) @ h_psi.jacobian
        return numerator, norm_squared, numerator_gradient, norm_gradient

    firsts = [quad_samples[MultiIndex.axis(d, j, 1)] for j in range(d)]
    potential = problem.potential_at_quad
    integrand = problem.kinetic * sum(f.values ** 2 for f in firsts) + potential * psi * psi
    numerator = weighted_sum(w, integrand, ordered)
    numerator_gradient = None
    if with_gradient:
        numerator_gradient = 2.0 * problem.kinetic * sum((w * f.values) @ f.jacobian for f in firsts)
        numerator_gradient = numerator_gradient + 2.0 * (w * potential * psi) @ zero.jacobian
    if problem.kernel is not None:
        folded = problem.kernel_at_quad @ psi
        numerator += weighted_sum(w, psi * folded, ordered)
        if with_gradient:
            # kernel_at_quad is K w, so w (K w) is symmetric
            numerator_gradient = numerator_gradient + 2.0 * (w * folded) @ zero.jacobian
    return numerator, norm_squared, numerator_gradient, norm_gradient


def hamiltonian(problem, tf, points):
    """
    H psi_t at arbitrary points for a single-component problem.

    Args:
        problem (Problem): The problem
        tf (TrialFunction): Trial function
        points (ndarray): Shape (P, d), or (d,) for one point

    Returns:
        float | ndarray: H psi_t
    """
    points = np.asarray(points, dtype=float)
    single = points.ndim <= 1
    points = np.atleast_2d(points.reshape(1, -1) if single else points)
    samples = sample(tf, points, problem.grid_indices())
    kernel_rows = quad_samples = None
    if problem.kernel is not None:
        kernel_rows = problem.kernel(points[:, :1], problem.quad.points[:, 0][None, :]) * problem.quad.weights
        quad_samples = sample(tf, problem.quad.points, [MultiIndex.zeros(1)])[MultiIndex.zeros(1)]
    values = apply_hamiltonian(problem, samples, problem.potential(points), kernel_rows, quad_samples).values
    return float(values[0]) if single else values


def energy(problem, tf):
    """Energy functional of a single-component trial function on the problem's quadrature."""
    quad_samples = sample(tf, problem.quad.points, problem.quad_indices())
    numerator, norm_squared, _, _ = energy_functional(problem, quad_samples)
    return numerator / norm_squared


# Morse potential


def morse_potential(x, params=MorseParams()):
    """V(x) = D [exp(-2 alpha x) - 2 exp(-alpha x) + 1]."""
    x = np.asarray(x, dtype=float)
    decay = np.exp(-params.alpha * x)
    return params.D * (decay * decay - 2.0 * decay + 1.0)


def morse_exact_level(n, params=MorseParams()):
    """
    Analytic Morse level eps_n = (n + 1/2)(1 - (n + 1/2)/zeta) xi.

    Args:
        n (int): Vibrational quantum number
        params (MorseParams): Constants

    Returns:
        float: Level in hartree
    """
    if n < 0 or n + 0.5 >= params.zeta:
        raise ContractViolation(f"Morse level {n} outside the bound spectrum")
    return (n + 0.5) * (1.0 - (n + 0.5) / params.zeta) * params.xi


def morse_problem(grid=None, quad=None, hidden_units=None):
    """Morse oscillator on [-1, 2], collocated on equidistant points, integrated by Gauss-Legendre."""
    defaults = PROBLEM_DEFAULTS["morse"]
    params = MorseParams()
    lo, hi = -1.0, 2.0
    return Problem(
        problem_id="morse",
        dimension=1,
        domain=((lo, hi),),
        grid=equidistant(grid or defaults["grid"], lo, hi)[:, None],
        quad=gauss_legendre(quad or defaults["quad"], lo, hi),
        envelope_kind=EnvelopeKind.GAUSSIAN_1D,
        initial_shape=defaults["shape"],
        hidden_units=hidden_units or defaults["hidden_units"],
        kinetic=1.0 / (2.0 * params.mu),
        potential=lambda p: morse_potential(p[:, 0], params),
        energy_form="expectation",
        gradient_mode=defaults["gradient_mode"],
        energy_scale=defaults["energy_scale"],
        warmup_iterations=defaults["warmup"],
        params=params,
    )


def morse_residual(tf, x):
    """H psi_t(x) for the Morse Hamiltonian -1/(2 mu) d^2/dx^2 + V(x)."""
    x = np.asarray(x, dtype=float)
    return hamiltonian(_MORSE_OPERATOR, tf, x if x.ndim == 0 else x.reshape(-1, 1))


# Muonic atom potentials


def fermi_density(params, r):
    """Proton number density A / (1 + exp((r - b)/c)) in fm^-3."""
    return params.A * expit(-(np.asarray(r, dtype=float) - params.b) / params.c)


@functools.lru_cache(maxsize=None)
def _reference_rule(n):
    rule = gauss_legendre(n, -1.0, 1.0)
    return rule.nodes, rule.weights


def _segment_integrals(f, lower, upper, nodes=POTENTIAL_QUADRATURE_NODES):
    """Integral of f(s, row) over [lower_i, upper_i] for every row i, by Gauss-Legendre."""
    x, w = _reference_rule(nodes)
    half = 0.5 * (upper - lower)
    s = lower[:, None] + half[:, None] * (x + 1.0)[None, :]
    return (f(s) * w).sum(axis=1) * half


def enclosed_charge(params, r_max=None):
    """4 pi int_0^r_max rho(s) s^2 ds, the proton number inside r_max."""
    r_max = params.r_max if r_max is None else r_max
    value = _segment_integrals(lambda s: fermi_density(params, s) * s * s,
                               np.zeros(1), np.array([float(r_max)]))
    return float(4.0 * math.pi * value[0])


def electrostatic_potential(params, r):
    """
    Electrostatic potential of the Fermi charge distribution felt by the muon.

    V_e(r) = -4 pi e^2 [ (1/r) int_0^r rho(s) s^2 ds + int_r^inf rho(s) s ds ]

    Args:
        params (MuonicParams): Nucleus and constants
        r (float | ndarray): Radius in fm, >= 0

    Returns:
        float | ndarray: Potential in MeV
    """
    radii = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(radii < 0) or not np.all(np.isfinite(radii)):
        raise ContractViolation("Electrostatic potential needs finite radii r >= 0")
    cut = np.full_like(radii, params.r_max)
    inner = _segment_integrals(lambda s: fermi_density(params, s) * s * s, np.zeros_like(radii), radii)
    outer = _segment_integrals(lambda s: fermi_density(params, s) * s, np.minimum(radii, cut), cut)
    safe = np.where(radii > 0, radii, 1.0)
    inside = np.where(radii > 0, inner / safe, 0.0)
    values = -4.0 * math.pi * params.e_squared * (inside + outer)
    return float(values[0]) if np.ndim(r) == 0 else values


def _polarization_bracket(params, r, s):
    """|r - s| [ln(C|r - s|/l_e) - 1] - (r + s) [ln(C(r + s)/l_e) - 1]."""
    scale = params.C / params.electron_compton_wavelength
    gap = np.abs(r - s)
    total = r + s
    return xlogy(gap, scale * gap) - gap - (xlogy(total, scale * total) - total)


def log_kernel_potential(params, r):
    """
    V_L(r) = -2 pi (e^2 / r) int_0^inf rho(s) s {bracket(r, s)} ds, truncated at r_max.
    At r -> 0 the limit 4 pi e^2 int rho(s) s ln(C s / l_e) ds is used.
    """
    radii = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(radii < 0):
        raise ContractViolation("Vacuum polarization needs radii r >= 0")
    cut = np.full_like(radii, params.r_max)
    split = np.minimum(radii, cut)
    e2 = params.e_squared
    scale = params.C / params.electron_compton_wavelength

    def integrand(s, rows):
        return fermi_density(params, s) * s * _polarization_bracket(params, rows[:, None], s)

    inner = _segment_integrals(lambda s: integrand(s, radii), np.zeros_like(radii), split)
    outer = _segment_integrals(lambda s: integrand(s, radii), split, cut)
    safe = np.where(radii > SMALL_RADIUS, radii, 1.0)
    values = -2.0 * math.pi * e2 * (inner + outer) / safe

    small = radii <= SMALL_RADIUS
    if np.any(small):
        limit = _segment_integrals(lambda s: fermi_density(params, s) * xlogy(s, scale * s),
                                   np.zeros(1), np.array([params.r_max]))[0]
        values = np.where(small, 4.0 * math.pi * e2 * limit, values)
    return values


def vacuum_polarization(params, r):
    """
    Vacuum polarization correction V_p = (2 alpha / 3 pi) [V_L(r) - (5/6) V_e(r)].

    The logarithm arguments are C|r - r'|/l_e and C(r + r')/l_e (both dimensionless).

    Args:
        params (MuonicParams): Nucleus and constants
        r (float | ndarray): Radius in fm, >= 0

    Returns:
        float | ndarray: Potential in MeV
    """
    radii = np.atleast_1d(np.asarray(r, dtype=float))
    prefactor = 2.0 * params.fine_structure / (3.0 * math.pi)
    values = prefactor * (log_kernel_potential(params, radii)
                          - 5.0 / 6.0 * np.atleast_1d(electrostatic_potential(params, radii)))
    return float(values[0]) if np.ndim(r) == 0 else values


def muonic_potential(params, r):
    """V = V_e + V_p in MeV."""
    radii = np.atleast_1d(np.asarray(r, dtype=float))
    return np.atleast_1d(electrostatic_potential(params, radii)) + vacuum_polarization(params, radii)


def muonic_schrodinger_problem(grid=None, quad=None, hidden_units=None, params=None):
    """s-state of a muon in Pb-208; collocation on the Gauss-Legendre nodes of [0, 40] fm."""
    defaults = PROBLEM_DEFAULTS["muonic-schrodinger"]
    params = params or MuonicParams()
    count = quad or grid or defaults["quad"]
    rule = gauss_legendre(count, 0.0, params.r_max)
    return Problem(
        problem_id="muonic-schrodinger",
        dimension=1,
        domain=((0.0, params.r_max),),
        grid=rule.points,
        quad=rule,
        envelope_kind=EnvelopeKind.RADIAL_EXP,
        initial_shape=defaults["shape"],
        hidden_units=hidden_units or defaults["hidden_units"],
        kinetic=params.hbar_c ** 2 / (2.0 * params.reduced_mass),
        potential=lambda p: muonic_potential(params, p[:, 0]),
        energy_form="gradient",
        gradient_mode=defaults["gradient_mode"],
        energy_scale=defaults["energy_scale"],
        warmup_iterations=defaults["warmup"],
        truncated=True,
        params=params,
    )


def schrodinger_muonic_residual(tf, r, problem=None):
    """H psi_t(r) = -(hbar^2 / 2 mu) psi'' + V psi for the muonic s-state."""
    problem = problem or muonic_schrodinger_problem()
    return hamiltonian(problem, tf, np.atleast_1d(np.asarray(r, dtype=float))[:, None])


def schrodinger_muonic_energy(tf, problem=None):
    """
    eps = [(hbar^2/2mu) int psi'^2 + int V psi^2] / int psi^2 on the problem's Gauss rule.
    Logs a warning when psi^2 has not decayed at the truncation radius.
    """
    problem = problem or muonic_schrodinger_problem()
    values = sample(tf, problem.quad.points, [MultiIndex.zeros(1)])[MultiIndex.zeros(1)].values
    check_truncation(values * values, "muonic norm")
    return energy(problem, tf)


# Dirac equation for the muonic atom


@attrs.frozen(eq=False)
class DiracState:
    """Small (f) and large (g) reduced radial components sharing one envelope shape."""

    f: TrialFunction
    g: TrialFunction

    def __attrs_post_init__(self):
        if self.f.envelope != self.g.envelope:
            raise ContractViolation("Dirac components must share one envelope")
        if self.f.envelope.kind is not EnvelopeKind.RADIAL_EXP:
            raise ContractViolation("Dirac components need RADIAL_EXP envelopes")

    @property
    def shape(self):
        return self.f.envelope.shape

    @property
    def optimize_shape(self):
        return self.f.optimize_shape

    @property
    def n_params(self):
        return self.f.net.n_params + self.g.net.n_params + (1 if self.optimize_shape else 0)

    @property
    def trials(self):
        return (self.f, self.g)

    def parameters(self):
        params = np.concatenate([self.f.net.flatten(), self.g.net.flatten()])
        if self.optimize_shape:
            params = np.append(params, math.log(self.shape))
        return params

    def with_parameters(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ContractViolation(f"Expected {self.n_params} parameters, got shape {params.shape}")
        envelope = self.f.envelope
        if self.optimize_shape:
            envelope = Envelope(envelope.kind, math.exp(params[-1]))
        split = self.f.net.n_params
        f_net = Mlp.from_flat(params[:split], 1, self.f.net.n_hidden)
        g_net = Mlp.from_flat(params[split:2 * split], 1, self.g.net.n_hidden)
        return DiracState(TrialFunction(envelope, f_net, self.optimize_shape),
                          TrialFunction(envelope, g_net, self.optimize_shape))


def new_dirac_state(problem, rng, hidden_units=None, optimize_shape=True):
    """Random Dirac state; the small component starts SMALL_COMPONENT_SCALE times smaller."""
    hidden = hidden_units or problem.hidden_units
    envelope = Envelope(EnvelopeKind.RADIAL_EXP, problem.initial_shape)
    g_net = Mlp.random(1, hidden, rng)
    f_net = Mlp.random(1, hidden, rng)
    f_net = Mlp(f_net.input_weights, f_net.hidden_biases, SMALL_COMPONENT_SCALE * f_net.output_weights)
    return DiracState(TrialFunction(envelope, f_net, optimize_shape),
                      TrialFunction(envelope, g_net, optimize_shape))


def dirac_state_from(trial, problem, rng):
    """
    Dirac state started from a Schrodinger s-state.

    g takes the Schrodinger trial. f keeps a random hidden layer and fits its output
    weights by least squares to hbar c / (2 mu c^2) (g' - g / r) on the collocation grid.
    """
    one, first = MultiIndex.zeros(1), MultiIndex.axis(1, 0, 1)
    r = problem.grid
    g = sample(trial, r, [one, first])
    balance = problem.params.hbar_c / (2.0 * problem.params.reduced_mass)
    target = balance * (g[first].values - g[one].values / r[:, 0])

    net = Mlp.random(1, trial.net.n_hidden, rng)
    envelope = trial.envelope.derivative(r, (0,))
    features = expit(r @ net.input_weights.T + net.hidden_biases) * envelope[:, None]
    weights, *_ = np.linalg.lstsq(features, target, rcond=None)
    f_net = Mlp(net.input_weights, net.hidden_biases, weights)
    return DiracState(TrialFunction(trial.envelope, f_net, trial.optimize_shape),
                      TrialFunction(trial.envelope, trial.net, trial.optimize_shape))


def schrodinger_counterpart(problem):
    """The Schrodinger problem on the same nodes, network size and constants as a Dirac problem."""
    return muonic_schrodinger_problem(quad=len(problem.quad.points), hidden_units=problem.hidden_units,
                                      params=problem.params)


def muonic_dirac_problem(grid=None, quad=None, hidden_units=None, params=None):
    """Coupled s-state Dirac components for the muon in Pb-208, same nodes as the Schrodinger case."""
    defaults = PROBLEM_DEFAULTS["muonic-dirac"]
    base = muonic_schrodinger_problem(grid, quad, hidden_units or defaults["hidden_units"], params)
    return attrs.evolve(
        base,
        problem_id="muonic-dirac",
        components=2,
        gradient_mode=defaults["gradient_mode"],
        energy_scale=defaults["energy_scale"],
        warmup_iterations=defaults["warmup"],
    )


def _dirac_samples(state, points):
    one = MultiIndex.zeros(1)
    first = MultiIndex.axis(1, 0, 1)
    f = sample(state.f, points, [one, first])
    g = sample(state.g, points, [one, first])
    return f[one].values, f[first].values, g[one].values, g[first].values


def dirac_energy(state, problem=None, ordered=True):
    """
    Total energy E = {mu c^2 int (g^2 + f^2) + int V (g^2 - f^2)} / int (g^2 - f^2), in MeV.

    Args:
        state (DiracState): Components
        problem (Problem): muonic-dirac problem (defaults to the standard one)
        ordered (bool): Deterministic scalar sums

    Returns:
        float: E
    """
    problem = problem or muonic_dirac_problem()
    params = problem.params
    w = problem.quad.weights
    f, _, g, _ = _dirac_samples(state, problem.quad.points)
    potential = problem.potential_at_quad
    rest = params.reduced_mass
    difference = weighted_sum(w, g * g - f * f, ordered)
    if difference == 0:
        raise ContractViolation("Dirac energy undefined: int (g^2 - f^2) vanishes")
    return (rest * weighted_sum(w, g * g + f * f, ordered)
            + weighted_sum(w, potential * (g * g - f * f), ordered)) / difference


def dirac_residuals(state, r, total_energy, problem=None):
    """
    Residuals of the two coupled first-order equations at radii r.

    f' + f/r - (mu c^2 - E + V) g / hbar c  and  g' - g/r - (mu c^2 + E - V) f / hbar c.
    f/r and g/r are evaluated without dividing by r.

    Args:
        state (DiracState): Components
        r (float | ndarray): Radii in fm, > 0
        total_energy (float): E in MeV
        problem (Problem): muonic-dirac problem

    Returns:
        tuple: (first residual, second residual), arrays over r
    """
    problem = problem or muonic_dirac_problem()
    params = problem.params
    radii = np.atleast_1d(np.asarray(r, dtype=float))
    points = radii[:, None]
    f, df, g, dg = _dirac_samples(state, points)
    f_over_r = reduced_radial(state.f, points)
    g_over_r = reduced_radial(state.g, points)
    if np.array_equal(points, problem.grid):
        potential = problem.potential_at_grid
    else:
        potential = muonic_potential(params, radii)
    rest = params.reduced_mass
    first = df + f_over_r - (rest - total_energy + potential) * g / params.hbar_c
    second = dg - g_over_r - (rest + total_energy - potential) * f / params.hbar_c
    return first, second


def dirac_error(state, problem=None, ordered=True):
    """
    Collocation error of the coupled system, normalized by int (g^2 + f^2).

    Returns:
        tuple: (error, E, per-point normalized summands)
    """
    problem = problem or muonic_dirac_problem()
    total_energy = dirac_energy(state, problem, ordered)
    first, second = dirac_residuals(state, problem.grid[:, 0], total_energy, problem)
    f, _, g, _ = _dirac_samples(state, problem.quad.points)
    norm_squared = weighted_sum(problem.quad.weights, g * g + f * f, ordered)
    summands = (first * first + second * second) / norm_squared
    return math.fsum(summands) if ordered else float(summands.sum()), total_energy, summands


# Non-local n + alpha problem


def nonlocal_kernel(r, r_prime, params=NonlocalParams()):
    """
    K0(r, r') = -A exp(-gamma (r^2 + r'^2)) (exp(2krr') - exp(-2krr')), in MeV/fm.
    Signs of A and gamma follow params.signs.
    """
    sign_a, sign_gamma = KERNEL_SIGN_CONVENTIONS[params.signs]
    r = np.asarray(r, dtype=float)
    r_prime = np.asarray(r_prime, dtype=float)
    a = sign_a * params.A_k
    gamma = sign_gamma * params.gamma
    return -a * np.exp(-gamma * (r * r + r_prime * r_prime)) * 2.0 * np.sinh(2.0 * params.k * r * r_prime)


def nonlocal_potential(r, params=NonlocalParams()):
    """V(r) = -V0 exp(-beta r^2)."""
    r = np.asarray(r, dtype=float)
    return -params.V0 * np.exp(-params.beta_pot * r * r)


def n_alpha_problem(grid=None, quad=None, hidden_units=None, signs="resolved", masses="cluster"):
    """n + alpha relative motion with a local Gaussian well and the exchange kernel, on [0, 12] fm."""
    defaults = PROBLEM_DEFAULTS["n-alpha"]
    params = NonlocalParams(signs=signs, masses=masses)
    lo, hi = 0.0, params.r_max
    hbar_c = PHYSICAL_CONSTANTS["hbar_c"]
    return Problem(
        problem_id="n-alpha",
        dimension=1,
        domain=((lo, hi),),
        grid=equidistant(grid or defaults["grid"], lo, hi)[:, None],
        quad=gauss_legendre(quad or defaults["quad"], lo, hi),
        envelope_kind=EnvelopeKind.RADIAL_EXP,
        initial_shape=defaults["shape"],
        hidden_units=hidden_units or defaults["hidden_units"],
        kinetic=hbar_c ** 2 / (2.0 * params.reduced_mass),
        potential=lambda p: nonlocal_potential(p[:, 0], params),
        energy_form="gradient",
        kernel=lambda r, r_prime: nonlocal_kernel(r, r_prime, params),
        gradient_mode=defaults["gradient_mode"],
        energy_scale=defaults["energy_scale"],
        warmup_iterations=defaults["warmup"],
        truncated=True,
        params=params,
    )


def nonlocal_residual(tf, r, quad=None, problem=None):
    """
    H psi_t(r) including the kernel integral, evaluated on the given quadrature rule.

    Args:
        tf (TrialFunction): Trial function
        r (float | ndarray): Radii in [0, 12] fm
        quad (QuadratureRule, optional): Rule spanning [0, 12] for the kernel integral
        problem (Problem, optional): n-alpha problem (defaults to the resolved signs)

    Returns:
        ndarray: H psi_t at r
    """
    problem = problem or n_alpha_problem()
    if quad is not None:
        problem = attrs.evolve(problem, quad=quad)
    return hamiltonian(problem, tf, np.atleast_1d(np.asarray(r, dtype=float))[:, None])


# Two- and three-dimensional oscillators


def henon_heiles_potential(points):
    """V(x, y) = (x^2 + y^2)/2 + (x y^2 - x^3/3) / (4 sqrt 5)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = points[:, 0], points[:, 1]
    return 0.5 * (x * x + y * y) + (x * y * y - x ** 3 / 3.0) / (4.0 * math.sqrt(5.0))


def _box_grid(dimension, half_width, count):
    """Equidistant tensor grid with trapezoid weights on [-half_width, half_width]^dimension."""
    rule = trapezoid(count, -half_width, half_width)
    return tensor_product(*([rule] * dimension))


def henon_heiles_problem(grid=None, hidden_units=None):
    """Henon-Heiles on a 20 x 20 equidistant grid in [-6, 6]^2, shared by collocation and integrals."""
    defaults = PROBLEM_DEFAULTS["henon-heiles"]
    tensor = _box_grid(2, 6.0, grid or defaults["grid"])
    return Problem(
        problem_id="henon-heiles",
        dimension=2,
        domain=((-6.0, 6.0), (-6.0, 6.0)),
        grid=tensor.points,
        quad=tensor,
        envelope_kind=EnvelopeKind.GAUSSIAN_ND,
        initial_shape=defaults["shape"],
        hidden_units=hidden_units or defaults["hidden_units"],
        kinetic=0.5,
        potential=henon_heiles_potential,
        energy_form="expectation",
        gradient_mode=defaults["gradient_mode"],
        energy_scale=defaults["energy_scale"],
        warmup_iterations=defaults["warmup"],
    )


def henon_heiles_residual(tf, points):
    """H psi_t(x, y) with H = -Laplacian/2 + V."""
    return hamiltonian(_HENON_HEILES_OPERATOR, tf, points)


def sextic_potential(points):
    """V(x, y, z) = V(x) + V(y) + V(z) + xy + xz + yz with V(x) = x^2/2 + 2x^4 + x^6/2."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    squares = points * points
    single = 0.5 * squares + 2.0 * squares ** 2 + 0.5 * squares ** 3
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    return single.sum(axis=1) + x * y + x * z + y * z


def sextic_problem(grid=None, hidden_units=None):
    """Three coupled sextic oscillators on a 28^3 equidistant grid in [-4, 4]^3."""
    defaults = PROBLEM_DEFAULTS["sextic-3d"]
    tensor = _box_grid(3, 4.0, grid or defaults["grid"])
    return Problem(
        problem_id="sextic-3d",
        dimension=3,
        domain=((-4.0, 4.0),) * 3,
        grid=tensor.points,
        quad=tensor,
        envelope_kind=EnvelopeKind.GAUSSIAN_ND,
        initial_shape=defaults["shape"],
        hidden_units=hidden_units or defaults["hidden_units"],
        kinetic=0.5,
        potential=sextic_potential,
        energy_form="expectation",
        gradient_mode=defaults["gradient_mode"],
        energy_scale=defaults["energy_scale"],
        warmup_iterations=defaults["warmup"],
    )


def sextic3d_residual(tf, points):
    """H psi_t(x, y, z) with H = -Laplacian/2 + V."""
    return hamiltonian(_SEXTIC_OPERATOR, tf, points)


PROBLEM_BUILDERS = {
    "morse": morse_problem,
    "muonic-schrodinger": muonic_schrodinger_problem,
    "muonic-dirac": muonic_dirac_problem,
    "n-alpha": n_alpha_problem,
    "henon-heiles": henon_heiles_problem,
    "sextic-3d": sextic_problem,
}


def build_problem(problem_id, grid=None, hidden_units=None, kernel_signs="resolved"):
    """
    Build a catalog problem by id.

    Args:
        problem_id (str): One of PROBLEM_IDS
        grid (int, optional): Points per axis for the collocation grid
        hidden_units (int, optional): Hidden units of the trial network
        kernel_signs (str): Kernel sign convention, n-alpha only

    Returns:
        Problem: The problem
    """
    if problem_id not in PROBLEM_BUILDERS:
        raise ConfigError(f"Unknown problem id {problem_id!r}; choose from {', '.join(PROBLEM_IDS)}")
    if problem_id == "n-alpha":
        return n_alpha_problem(grid=grid, hidden_units=hidden_units, signs=kernel_signs)
    return PROBLEM_BUILDERS[problem_id](grid=grid, hidden_units=hidden_units)


def constants_table():
    """
    Every constant used by the catalog, for audit.

    Returns:
        list: Rows of {"group", "name", "value"}
    """
    rows = []
    for group, table in (("physical", PHYSICAL_CONSTANTS), ("morse", MORSE_PARAMS),
                         ("muonic", MUONIC_PARAMS), ("n-alpha", NONLOCAL_PARAMS)):
        rows.extend({"group": group, "name": name, "value": value} for name, value in table.items())
    for name, (sign_a, sign_gamma) in KERNEL_SIGN_CONVENTIONS.items():
        rows.append({"group": "n-alpha-signs", "name": name,
                     "value": f"A={sign_a * NONLOCAL_PARAMS['A_k']}, gamma={sign_gamma * NONLOCAL_PARAMS['gamma']}"})
    muonic = MuonicParams()
    rows.append({"group": "muonic", "name": "reduced_mass", "value": muonic.reduced_mass})
    rows.append({"group": "n-alpha", "name": "reduced_mass", "value": NonlocalParams().reduced_mass})
    for n in range(5):
        rows.append({"group": "morse-levels", "name": f"eps_{n}", "value": morse_exact_level(n)})
    return rows


_MORSE_OPERATOR = morse_problem(grid=2, quad=2)
_HENON_HEILES_OPERATOR = henon_heiles_problem(grid=2)
_SEXTIC_OPERATOR = sextic_problem(grid=2)
