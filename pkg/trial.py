"""
Trial wavefunction module for the neural eigensolver.
A trial state is an envelope B(r, shape) that enforces the boundary behaviour,
multiplied by a perceptron N(r, p). Derivatives follow from the product rule
with closed-form envelope derivatives. Excited states are obtained by
projecting already computed states out of the trial state (deflation).
"""
import enum
import itertools
import logging
import math
from typing import NamedTuple

import attrs
import numpy as np
from numpy.polynomial import hermite

from network import Mlp, MultiIndex, derivative_table
from utils import (
    ContractViolation,
    DegenerateStateError,
    read_key_value_file,
    write_key_value_file,
)

logger = logging.getLogger(__name__)


class EnvelopeKind(enum.Enum):
    GAUSSIAN_1D = "gaussian-1d"      # exp(-shape x^2)
    RADIAL_EXP = "radial-exp"        # r exp(-shape r)
    GAUSSIAN_ND = "gaussian-nd"      # exp(-shape |r|^2)


def _positive_shape(instance, attribute, value):
    if not (np.isfinite(value) and value > 0):
        raise ContractViolation(f"Envelope shape must be a finite positive number, got {value}")


@attrs.frozen
class Envelope:
    kind: EnvelopeKind = attrs.field(converter=EnvelopeKind)
    shape: float = attrs.field(converter=float, validator=_positive_shape)

    def check_dimension(self, n):
        if self.kind in (EnvelopeKind.GAUSSIAN_1D, EnvelopeKind.RADIAL_EXP) and n != 1:
            raise ContractViolation(f"{self.kind.value} envelope is one-dimensional, got {n} inputs")

    def derivative(self, points, orders):
        """
        Closed-form mixed partial derivative of the envelope.

        Args:
            points (ndarray): Shape (P, n)
            orders (tuple of int): Orders per axis

        Returns:
            ndarray: Shape (P,)
        """
        if self.kind is EnvelopeKind.RADIAL_EXP:
            return _radial_derivative(points[:, 0], orders[0], self.shape)[0]
        factors = [_gaussian_factor(points[:, j], k, self.shape)[0] for j, k in enumerate(orders)]
        return np.prod(factors, axis=0)

    def log_shape_derivative(self, points, orders):
        """shape * d/d(shape) of derivative(points, orders), i.e. the derivative in log(shape)."""
        if self.kind is EnvelopeKind.RADIAL_EXP:
            return _radial_derivative(points[:, 0], orders[0], self.shape)[1]
        pairs = [_gaussian_factor(points[:, j], k, self.shape) for j, k in enumerate(orders)]
        total = np.zeros(len(points))
        for j in range(len(pairs)):
            term = pairs[j][1]
            for l, (factor, _) in enumerate(pairs):
                if l != j:
                    term = term * factor
            total = total + term
        return total


def _hermite_function(t, k):
    """H_k(t) exp(-t^2) with physicists' Hermite polynomials."""
    coefficients = np.zeros(k + 1)
    coefficients[k] = 1.0
    return hermite.hermval(t, coefficients) * np.exp(-t * t)


def _gaussian_factor(x, k, beta):
    """
    k-th derivative of exp(-beta x^2) and its log-shape derivative.

    d^k/dx^k exp(-beta x^2) = (-1)^k beta^(k/2) h_k(sqrt(beta) x), h_k(t) = H_k(t) exp(-t^2)
    """
    root = math.sqrt(beta)
    t = root * x
    scale = (-1.0) ** k * root ** k
    h_k = _hermite_function(t, k)
    value = scale * h_k
    log_shape = scale * 0.5 * (k * h_k - t * _hermite_function(t, k + 1))
    return value, log_shape


def _radial_derivative(r, k, beta):
    """
    k-th derivative of r exp(-beta r) and its log-shape derivative.

    d^k/dr^k r exp(-beta r) = [(-beta)^k r + k (-beta)^(k-1)] exp(-beta r)
    """
    decay = np.exp(-beta * r)
    a = (-beta) ** k
    b = k * (-beta) ** (k - 1) if k >= 1 else 0.0
    value = (a * r + b) * decay
    da = -k * (-beta) ** (k - 1) if k >= 1 else 0.0
    db = -k * (k - 1) * (-beta) ** (k - 2) if k >= 2 else 0.0
    log_shape = beta * ((da * r + db) * decay - r * value)
    return value, log_shape


@attrs.frozen(eq=False)
class TrialFunction:
    """
    psi_t(r) = B(r, shape) N(r, p).

    The envelope shape joins the optimization vector when optimize_shape is set,
    as log(shape) by default or as the shape itself when log_shape is False.
    """

    envelope: Envelope
    net: Mlp
    optimize_shape: bool = True
    log_shape: bool = True

    def __attrs_post_init__(self):
        self.envelope.check_dimension(self.net.n_inputs)

    @property
    def dimension(self):
        return self.net.n_inputs

    @property
    def n_params(self):
        return self.net.n_params + (1 if self.optimize_shape else 0)

    def parameters(self):
        """Optimization vector: network parameters, then the (log) shape when the shape is optimized."""
        params = self.net.flatten()
        if self.optimize_shape:
            shape = self.envelope.shape
            params = np.append(params, math.log(shape) if self.log_shape else shape)
        return params

    def with_parameters(self, params):
        """Return a new trial function built from an optimization vector."""
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ContractViolation(f"Expected {self.n_params} parameters, got shape {params.shape}")
        envelope = self.envelope
        if self.optimize_shape:
            shape = math.exp(params[-1]) if self.log_shape else params[-1]
            envelope = Envelope(envelope.kind, shape)
            params = params[:-1]
        net = Mlp.from_flat(params, self.net.n_inputs, self.net.n_hidden)
        return TrialFunction(envelope, net, self.optimize_shape, self.log_shape)

    def __call__(self, points):
        return evaluate(self, points)


class Samples(NamedTuple):
    values: np.ndarray
    jacobian: np.ndarray = None


def _points_of(tf, point):
    points = np.asarray(point, dtype=float)
    single = points.ndim <= 1
    points = np.atleast_2d(points.reshape(1, -1) if single else points)
    if points.shape[1] != tf.dimension:
        raise ContractViolation(
            f"Point dimension {points.shape[1]} does not match trial dimension {tf.dimension}"
        )
    return points, single


def _leibniz_terms(orders):
    """Yield (coefficient, envelope orders, network orders) for the product rule."""
    for split in itertools.product(*(range(k + 1) for k in orders)):
        coefficient = math.prod(math.comb(k, j) for k, j in zip(orders, split))
        rest = tuple(k - j for k, j in zip(orders, split))
        yield coefficient, split, rest


def sample(tf, points, multi_indices, with_gradient=False):
    """
    Evaluate several derivatives of the trial function at a batch of points.

    Args:
        tf (TrialFunction): Trial function
        points (ndarray): Shape (P, n)
        multi_indices (iterable of MultiIndex): Derivatives wanted
        with_gradient (bool): Also return the Jacobian with respect to tf.parameters()

    Returns:
        dict: MultiIndex -> Samples(values (P,), jacobian (P, n_params) or None)
    """
    points, _ = _points_of(tf, points)
    multi_indices = list(multi_indices)
    for mi in multi_indices:
        if len(mi.orders) != tf.dimension:
            raise ContractViolation(f"Multi-index {mi.orders} does not match dimension {tf.dimension}")

    net_orders = {rest for mi in multi_indices for _, _, rest in _leibniz_terms(mi.orders)}
    net_table = derivative_table(tf.net, points, [MultiIndex(o) for o in net_orders], with_gradient)
    envelope_cache = {}

    def envelope_of(orders):
        if orders not in envelope_cache:
            log_shape = None
            if with_gradient and tf.optimize_shape:
                log_shape = tf.envelope.log_shape_derivative(points, orders)
            envelope_cache[orders] = (tf.envelope.derivative(points, orders), log_shape)
        return envelope_cache[orders]

    table = {}
    for mi in multi_indices:
        values = np.zeros(len(points))
        jacobian = np.zeros((len(points), tf.n_params)) if with_gradient else None
        for coefficient, split, rest in _leibniz_terms(mi.orders):
            envelope_value, envelope_log_shape = envelope_of(split)
            net_entry = net_table[MultiIndex(rest)]
            net_value = net_entry[0] if with_gradient else net_entry
            values += coefficient * envelope_value * net_value
            if with_gradient:
                jacobian[:, :tf.net.n_params] += coefficient * envelope_value[:, None] * net_entry[1]
                if tf.optimize_shape:
                    jacobian[:, -1] += coefficient * envelope_log_shape * net_value
        if with_gradient and tf.optimize_shape and not tf.log_shape:
            jacobian[:, -1] /= tf.envelope.shape
        table[mi] = Samples(values, jacobian)
    return table


def evaluate(tf, point):
    """
    Trial function value B(point) N(point).

    Args:
        tf (TrialFunction): Trial function
        point (ndarray): Shape (n,) or (P, n)

    Returns:
        float | ndarray: Value(s)
    """
    return derivative(tf, point, MultiIndex.zeros(tf.dimension))


def derivative(tf, point, mi):
    """
    Exact mixed partial derivative of the trial function, by the product rule.

    Args:
        tf (TrialFunction): Trial function
        point (ndarray): Shape (n,) or (P, n)
        mi (MultiIndex): Orders per axis

    Returns:
        float | ndarray: Value(s)
    """
    points, single = _points_of(tf, point)
    values = sample(tf, points, [mi])[mi].values
    return float(values[0]) if single else values


def reduced_radial(tf, r):
    """
    psi(r) / r for a RADIAL_EXP trial function, evaluated as exp(-shape r) N(r).
    Finite at r = 0; never divides by r.
    """
    if tf.envelope.kind is not EnvelopeKind.RADIAL_EXP:
        raise ContractViolation("reduced_radial needs a RADIAL_EXP envelope")
    points, single = _points_of(tf, r)
    values = np.exp(-tf.envelope.shape * points[:, 0]) * derivative_table(
        tf.net, points, [MultiIndex.zeros(1)])[MultiIndex.zeros(1)]
    return float(values[0]) if single else values


@attrs.frozen(eq=False)
class StateSnapshot:
    """
    Frozen computed state: psi = (psi_t - sum_a projections[a] psi_a) / norm.

    `trials` holds one trial function, or two (small and large components) for
    coupled two-component states. `projections` are the frozen overlaps with the
    earlier basis states at the time the state was accepted.
    """

    problem_id: str
    trials: tuple
    norm: float
    eigenvalue: float
    projections: tuple = ()

    def __attrs_post_init__(self):
        if not self.norm > 0:
            raise ContractViolation(f"Normalization constant must be positive, got {self.norm}")


@attrs.define
class DeflationBasis:
    """Ordered, append-only list of normalized single-component states."""

    states: list = attrs.field(factory=list)

    def __len__(self):
        return len(self.states)

    def append(self, snapshot):
        if len(snapshot.trials) != 1:
            raise ContractViolation("Only single-component states can join a deflation basis")
        if len(snapshot.projections) != len(self.states):
            raise ContractViolation(
                f"State carries {len(snapshot.projections)} projections, basis has {len(self.states)} states"
            )
        self.states.append(snapshot)

    def sample(self, points, multi_indices):
        """
        Derivatives of every normalized basis state at the given points.

        Returns:
            dict: MultiIndex -> ndarray of shape (len(basis), P)
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        multi_indices = list(multi_indices)
        table = {mi: np.zeros((len(self.states), len(points))) for mi in multi_indices}
        for k, state in enumerate(self.states):
            raw = sample(state.trials[0], points, multi_indices)
            for mi in multi_indices:
                values = raw[mi].values - np.asarray(state.projections) @ table[mi][:k]
                table[mi][k] = values / state.norm
        return table

    def values(self, points, reduced=False):
        """
        Normalized basis states at the given points, shape (len(basis), P).

        With reduced=True the radial states are returned divided by r (RADIAL_EXP only).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        table = np.zeros((len(self.states), len(points)))
        for k, state in enumerate(self.states):
            table[k] = _normalized(state, points, reduced, table[:k])
        return table


def _normalized(snapshot, points, reduced, earlier):
    tf = snapshot.trials[0]
    raw = reduced_radial(tf, points) if reduced else _evaluate_raw(tf, points)
    if len(snapshot.projections):
        raw = raw - np.asarray(snapshot.projections) @ earlier[:len(snapshot.projections)]
    return raw / snapshot.norm


def state_values(snapshot, basis, points, reduced=False):
    """
    Normalized single-component state of a snapshot at the given points.

    Args:
        snapshot (StateSnapshot): The state; its projections refer to the first basis states
        basis (DeflationBasis): Basis the snapshot was deflated against
        points (ndarray): Shape (P, n)
        reduced (bool): Divide radial states by r without dividing by r

    Returns:
        ndarray: Shape (P,)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    earlier = basis.values(points, reduced) if len(snapshot.projections) else None
    return _normalized(snapshot, points, reduced, earlier)


def deflate_samples(raw, raw_at_quad, basis_samples, basis_at_quad, weights):
    """
    Project basis states out of sampled trial data, carrying Jacobians through.

    Args:
        raw (dict): MultiIndex -> Samples at the evaluation points
        raw_at_quad (Samples): Trial values (and Jacobian) at the quadrature nodes
        basis_samples (dict): MultiIndex -> (B, P) basis derivatives at the evaluation points
        basis_at_quad (ndarray): (B, Q) basis values at the quadrature nodes
        weights (ndarray): (Q,) quadrature weights

    Returns:
        tuple: (dict MultiIndex -> deflated Samples, overlaps (B,))
    """
    overlaps = basis_at_quad @ (weights * raw_at_quad.values)
    overlap_gradient = None
    if raw_at_quad.jacobian is not None:
        overlap_gradient = basis_at_quad @ (weights[:, None] * raw_at_quad.jacobian)

    deflated = {}
    for mi, entry in raw.items():
        values = entry.values - overlaps @ basis_samples[mi]
        jacobian = None
        if entry.jacobian is not None:
            jacobian = entry.jacobian - basis_samples[mi].T @ overlap_gradient
        deflated[mi] = Samples(values, jacobian)
    return deflated, overlaps


class DeflatedState:
    """
    State evaluator psi(x) = raw(x) - sum_a psi_a(x) <psi_a|raw>, with the
    overlaps computed once against the current raw state.
    """

    def __init__(self, raw, basis, quad):
        self.raw = raw
        self.basis = basis
        self.quad = quad
        if len(basis):
            basis_at_quad = basis.sample(quad.points, [MultiIndex.zeros(quad.dimension)])
            raw_at_quad = np.asarray(_evaluate_raw(raw, quad.points))
            self.overlaps = basis_at_quad[MultiIndex.zeros(quad.dimension)] @ (quad.weights * raw_at_quad)
        else:
            self.overlaps = np.zeros(0)

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.asarray(_evaluate_raw(self.raw, points), dtype=float).reshape(len(points))
        if len(self.basis):
            mi = MultiIndex.zeros(points.shape[1])
            values = values - self.overlaps @ self.basis.sample(points, [mi])[mi]
        return values

    def derivative(self, points, mi):
        """Raw derivative minus the same combination of basis-state derivatives."""
        if not isinstance(self.raw, TrialFunction):
            raise ContractViolation("Derivatives of a deflated state need a TrialFunction as raw state")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = sample(self.raw, points, [mi])[mi].values
        if len(self.basis):
            values = values - self.overlaps @ self.basis.sample(points, [mi])[mi]
        return values


def _evaluate_raw(raw, points):
    if isinstance(raw, TrialFunction):
        return sample(raw, points, [MultiIndex.zeros(raw.dimension)])[MultiIndex.zeros(raw.dimension)].values
    return raw(points)


def deflate(raw, basis, quad):
    """
    Remove the components along every basis state from a raw state.

    Args:
        raw (TrialFunction | callable): Raw state, or any callable points (P, n) -> values (P,)
        basis (DeflationBasis): Normalized, mutually orthogonal states
        quad (QuadratureRule | TensorGrid): Rule used for the overlaps

    Returns:
        DeflatedState: The projected state evaluator (identity when the basis is empty)
    """
    return DeflatedState(raw, basis, quad)


def quadrature_norm(values, weights):
    """sqrt(sum w psi^2), raising DegenerateStateError for a zero state."""
    norm_squared = float(np.dot(weights, values * values))
    if not norm_squared > 0:
        raise DegenerateStateError("Trial state has zero norm on the quadrature rule")
    return math.sqrt(norm_squared)


def write_snapshot(path, snapshot):
    """
    Write a state snapshot as a versioned key/value text file.

    Args:
        path (str): Destination path
        snapshot (StateSnapshot): State to store
    """
    first = snapshot.trials[0]
    header = {
        "problem": snapshot.problem_id,
        "components": len(snapshot.trials),
        "envelope": first.envelope.kind.value,
        "shape": first.envelope.shape,
        "optimize_shape": int(first.optimize_shape),
        "log_shape": int(first.log_shape),
        "n_inputs": first.net.n_inputs,
        "n_hidden": first.net.n_hidden,
        "norm": snapshot.norm,
        "eigenvalue": snapshot.eigenvalue,
        "projections": ",".join(repr(float(c)) for c in snapshot.projections),
    }
    values = np.concatenate([tf.net.flatten() for tf in snapshot.trials])
    write_key_value_file(path, header, values)
    logger.debug("Snapshot for %s written to %s", snapshot.problem_id, path)


def read_snapshot(path):
    """
    Read a state snapshot written by write_snapshot.

    Args:
        path (str): Source path

    Returns:
        StateSnapshot: The stored state
    """
    header, values = read_key_value_file(path)
    try:
        components = int(header["components"])
        n_inputs = int(header["n_inputs"])
        n_hidden = int(header["n_hidden"])
        envelope = Envelope(header["envelope"], float(header["shape"]))
        optimize_shape = bool(int(header["optimize_shape"]))
        log_shape = bool(int(header.get("log_shape", 1)))
        projections = tuple(float(c) for c in header["projections"].split(",") if c)
        norm = float(header["norm"])
        eigenvalue = float(header["eigenvalue"])
        problem_id = header["problem"]
    except (KeyError, ValueError) as e:
        raise ContractViolation(f"{path}: malformed snapshot header ({e})") from e

    per_component = len(values) // components
    trials = tuple(
        TrialFunction(envelope,
                      Mlp.from_flat(values[k * per_component:(k + 1) * per_component], n_inputs, n_hidden),
                      optimize_shape, log_shape)
        for k in range(components)
    )
    return StateSnapshot(problem_id, trials, norm, eigenvalue, projections)
