"""
Single-hidden-layer perceptron module for the neural eigensolver.
Provides the network output, exact input derivatives of any mixed order up to
MAX_DERIVATIVE_ORDER, and the gradient of those derivatives with respect to
every network parameter.

Parameter flattening order (used by the optimizer and by snapshot files):
row-major input weights (hidden unit i, input j at index i*n + j), then the
hidden biases, then the output weights.
"""
import logging

import attrs
import numpy as np
from scipy.special import expit

from utils import ContractViolation, require_finite

logger = logging.getLogger(__name__)

MAX_DERIVATIVE_ORDER = 4

# Closed-form sigmoid derivatives in terms of s = sigma(z) and t = 1 - s = sigma(-z).
# Using t instead of (1 - s) keeps the tails accurate for large |z|.
SIGMOID_DERIVATIVES = {
    0: lambda s, t: s,
    1: lambda s, t: s * t,
    2: lambda s, t: s * t * (t - s),
    3: lambda s, t: s * t * (1.0 - 6.0 * s * t),
    4: lambda s, t: s * t * (t - s) * (1.0 - 12.0 * s * t),
}


def _finite_array(name, ndim):
    def validate(instance, attribute, value):
        if value.ndim != ndim:
            raise ContractViolation(f"{name} must be {ndim}-dimensional, got shape {value.shape}")
        if not np.all(np.isfinite(value)):
            raise ContractViolation(f"{name} contains non-finite entries")
    return validate


def _as_float_array(value):
    return np.array(value, dtype=float)


@attrs.frozen(eq=False)
class Mlp:
    """
    Perceptron with n inputs, m sigmoid hidden units and a linear output unit.

    N(r) = sum_i v_i sigma(z_i),  z_i = sum_j w_ij r_j + u_i
    """

    input_weights: np.ndarray = attrs.field(converter=_as_float_array,
                                            validator=_finite_array("input_weights", 2))
    hidden_biases: np.ndarray = attrs.field(converter=_as_float_array,
                                            validator=_finite_array("hidden_biases", 1))
    output_weights: np.ndarray = attrs.field(converter=_as_float_array,
                                             validator=_finite_array("output_weights", 1))

    def __attrs_post_init__(self):
        m = self.input_weights.shape[0]
        if self.hidden_biases.shape != (m,) or self.output_weights.shape != (m,):
            raise ContractViolation(
                f"Inconsistent network dimensions: weights {self.input_weights.shape}, "
                f"biases {self.hidden_biases.shape}, output {self.output_weights.shape}"
            )
        if m < 1 or self.input_weights.shape[1] < 1:
            raise ContractViolation("Network needs at least one input and one hidden unit")

    @property
    def n_inputs(self):
        return self.input_weights.shape[1]

    @property
    def n_hidden(self):
        return self.input_weights.shape[0]

    @property
    def n_params(self):
        return parameter_count(self.n_inputs, self.n_hidden)

    def flatten(self):
        """Return the parameters as one flat vector in the documented order."""
        return np.concatenate([self.input_weights.ravel(), self.hidden_biases, self.output_weights])

    @classmethod
    def from_flat(cls, params, n_inputs, n_hidden):
        """
        Rebuild a network from a flat parameter vector.

        Args:
            params (sequence of float): Flat parameters, length m*n + 2m
            n_inputs (int): Number of inputs n
            n_hidden (int): Number of hidden units m

        Returns:
            Mlp: The network
        """
        params = np.asarray(params, dtype=float)
        expected = parameter_count(n_inputs, n_hidden)
        if params.shape != (expected,):
            raise ContractViolation(f"Expected {expected} parameters, got shape {params.shape}")
        split = n_hidden * n_inputs
        return cls(
            input_weights=params[:split].reshape(n_hidden, n_inputs),
            hidden_biases=params[split:split + n_hidden],
            output_weights=params[split + n_hidden:],
        )

    @classmethod
    def random(cls, n_inputs, n_hidden, rng):
        """
        Draw every parameter uniformly from [-1, 1].

        Args:
            n_inputs (int): Number of inputs
            n_hidden (int): Number of hidden units
            rng (numpy.random.Generator): Seeded generator owned by the caller

        Returns:
            Mlp: The network
        """
        return cls.from_flat(rng.uniform(-1.0, 1.0, parameter_count(n_inputs, n_hidden)),
                             n_inputs, n_hidden)


@attrs.frozen
class MultiIndex:
    """Orders of differentiation per input, e.g. (2, 0) for d^2/dx^2 in 2D."""

    orders: tuple = attrs.field(converter=lambda value: tuple(int(k) for k in value))

    @orders.validator
    def _check_orders(self, attribute, value):
        if not value or any(k < 0 for k in value):
            raise ContractViolation(f"Multi-index orders must be non-negative, got {value}")

    @property
    def total(self):
        return sum(self.orders)

    @classmethod
    def zeros(cls, n):
        return cls((0,) * n)

    @classmethod
    def axis(cls, n, axis, order=1):
        """Pure derivative of the given order along one axis."""
        orders = [0] * n
        orders[axis] = order
        return cls(orders)


def parameter_count(n_inputs, n_hidden):
    """Number of network parameters, m*n + 2m."""
    return n_hidden * n_inputs + 2 * n_hidden


def sigmoid(z):
    return expit(z)


def sigmoid_derivative(z, order):
    """
    Exact derivative of the sigmoid of the given order.

    Args:
        z (float | ndarray): Pre-activation value(s)
        order (int): 0 to MAX_DERIVATIVE_ORDER

    Returns:
        float | ndarray: sigma^(order)(z)
    """
    if order not in SIGMOID_DERIVATIVES:
        raise ContractViolation(
            f"Sigmoid derivative order {order} unsupported (0..{MAX_DERIVATIVE_ORDER})"
        )
    z = np.asarray(z, dtype=float)
    s = expit(z)
    t = expit(-z)
    value = SIGMOID_DERIVATIVES[order](s, t)
    return float(value) if value.ndim == 0 else value


def _as_points(net, point):
    """Return (points with shape (P, n), True if a single point was passed)."""
    points = np.asarray(point, dtype=float)
    single = points.ndim <= 1
    points = np.atleast_2d(points.reshape(1, -1) if single else points)
    if points.shape[1] != net.n_inputs:
        raise ContractViolation(
            f"Point dimension {points.shape[1]} does not match network inputs {net.n_inputs}"
        )
    require_finite(points, "network input", points)
    return points, single


def _check_multi_index(net, mi, max_total):
    if len(mi.orders) != net.n_inputs:
        raise ContractViolation(f"Multi-index {mi.orders} does not match {net.n_inputs} inputs")
    if mi.total > max_total:
        raise ContractViolation(f"Derivative order {mi.total} exceeds supported order {max_total}")


def _weight_products(net, orders):
    """P_i = prod_k w_ik^lambda_k for every hidden unit."""
    return np.prod(net.input_weights ** np.asarray(orders), axis=1)


def forward(net, point):
    """
    Network output at one point or at a batch of points.

    Args:
        net (Mlp): The network
        point (ndarray): Shape (n,) or (P, n)

    Returns:
        float | ndarray: N(point), scalar for a single point
    """
    points, single = _as_points(net, point)
    z = points @ net.input_weights.T + net.hidden_biases
    values = expit(z) @ net.output_weights
    return float(values[0]) if single else values


def input_derivative(net, point, mi):
    """
    Exact mixed partial derivative of the network output with respect to its inputs.

    Args:
        net (Mlp): The network
        point (ndarray): Shape (n,) or (P, n)
        mi (MultiIndex): Orders per input, total <= MAX_DERIVATIVE_ORDER

    Returns:
        float | ndarray: sum_i v_i P_i sigma^(total)(z_i)
    """
    _check_multi_index(net, mi, MAX_DERIVATIVE_ORDER)
    points, single = _as_points(net, point)
    z = points @ net.input_weights.T + net.hidden_biases
    weights = net.output_weights * _weight_products(net, mi.orders)
    values = sigmoid_derivative(z, mi.total) @ weights
    return float(values[0]) if single else values


def parameter_gradient_of_derivative(net, point, mi):
    """
    Gradient of input_derivative(net, point, mi) with respect to every network parameter.

    Args:
        net (Mlp): The network
        point (ndarray): Shape (n,) or (P, n)
        mi (MultiIndex): Orders per input, total <= MAX_DERIVATIVE_ORDER - 1

    Returns:
        ndarray: Shape (n_params,) for one point or (P, n_params), flattening order
        (input weights row-major, hidden biases, output weights)
    """
    _check_multi_index(net, mi, MAX_DERIVATIVE_ORDER - 1)
    points, single = _as_points(net, point)
    gradient = _parameter_gradient(net, points, mi)
    return gradient[0] if single else gradient


def _parameter_gradient(net, points, mi):
    orders = np.asarray(mi.orders)
    v = net.output_weights
    z = points @ net.input_weights.T + net.hidden_biases
    s, t = expit(z), expit(-z)
    sig = SIGMOID_DERIVATIVES[mi.total](s, t)
    sig_next = SIGMOID_DERIVATIVES[mi.total + 1](s, t)
    products = _weight_products(net, orders)

    # d P_i / d w_il = lambda_l w_il^(lambda_l - 1) prod_{k != l} w_ik^lambda_k
    product_gradient = np.zeros_like(net.input_weights)
    for axis, order in enumerate(orders):
        if order == 0:
            continue
        lowered = orders.copy()
        lowered[axis] -= 1
        product_gradient[:, axis] = order * _weight_products(net, lowered)

    grad_w = v[None, :, None] * (
        product_gradient[None, :, :] * sig[:, :, None]
        + (products * sig_next)[:, :, None] * points[:, None, :]
    )
    grad_u = v * products * sig_next
    grad_v = products * sig
    return np.concatenate([grad_w.reshape(len(points), -1), grad_u, grad_v], axis=1)


def derivative_table(net, points, multi_indices, with_gradient=False):
    """
    Evaluate several input derivatives at a batch of points, sharing the hidden-layer pass.

    Args:
        net (Mlp): The network
        points (ndarray): Shape (P, n)
        multi_indices (iterable of MultiIndex): Derivatives wanted
        with_gradient (bool): Also return parameter gradients

    Returns:
        dict: MultiIndex -> values (P,), or -> (values (P,), gradient (P, n_params))
    """
    points, _ = _as_points(net, points)
    z = points @ net.input_weights.T + net.hidden_biases
    s, t = expit(z), expit(-z)
    sigma_cache = {}

    def sigma_of(order):
        if order not in sigma_cache:
            sigma_cache[order] = SIGMOID_DERIVATIVES[order](s, t)
        return sigma_cache[order]

    table = {}
    for mi in multi_indices:
        _check_multi_index(net, mi, MAX_DERIVATIVE_ORDER - (1 if with_gradient else 0))
        weights = net.output_weights * _weight_products(net, mi.orders)
        values = sigma_of(mi.total) @ weights
        if with_gradient:
            table[mi] = (values, _parameter_gradient(net, points, mi))
        else:
            table[mi] = values
    return table
