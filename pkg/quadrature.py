"""
Quadrature module for the neural eigensolver.
Gauss-Legendre rules (Newton iteration on the Legendre recursion), equidistant
grids with trapezoid weights, and row-major tensor products of both. Every
integral of the solver (norms, energies, overlaps, potentials) goes through here.
"""
import functools
import logging
import math

import attrs
import numpy as np

from utils import ContractViolation, require_finite

logger = logging.getLogger(__name__)

NEWTON_TOLERANCE = 1e-14
NEWTON_MAX_ITERATIONS = 100

# Integrand magnitude at a truncated endpoint, relative to its maximum, above which we warn
TRUNCATION_TOLERANCE = 1e-10


def _check_interval(lo, hi):
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ContractViolation(f"Invalid interval [{lo}, {hi}]")


@attrs.frozen(eq=False)
class QuadratureRule:
    nodes: np.ndarray = attrs.field(converter=lambda v: np.asarray(v, dtype=float))
    weights: np.ndarray = attrs.field(converter=lambda v: np.asarray(v, dtype=float))
    interval: tuple = attrs.field(converter=tuple)

    def __attrs_post_init__(self):
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ContractViolation("Quadrature nodes and weights must be matching 1D arrays")

    @property
    def dimension(self):
        return 1

    @property
    def points(self):
        return self.nodes[:, None]

    def __len__(self):
        return len(self.nodes)


@attrs.frozen(eq=False, slots=False)
class TensorGrid:
    """Product of per-axis rules; points and weights in row-major (last axis fastest) order."""

    axes: tuple = attrs.field(converter=tuple)

    @property
    def dimension(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(rule) for rule in self.axes)

    @functools.cached_property
    def points(self):
        mesh = np.meshgrid(*(rule.nodes for rule in self.axes), indexing="ij")
        return np.stack([axis.ravel() for axis in mesh], axis=1)

    @functools.cached_property
    def weights(self):
        mesh = np.meshgrid(*(rule.weights for rule in self.axes), indexing="ij")
        return np.prod(np.stack([axis.ravel() for axis in mesh], axis=1), axis=1)

    def __len__(self):
        return math.prod(self.shape)


@functools.lru_cache(maxsize=None)
def _reference_gauss_legendre(n):
    """Nodes and weights on [-1, 1], nodes increasing."""
    # Chebyshev-like starting guesses, refined by Newton on P_n
    x = -np.cos(np.pi * (np.arange(1, n + 1) - 0.25) / (n + 0.5))
    for _ in range(NEWTON_MAX_ITERATIONS):
        p_n, p_prev = _legendre_pair(n, x)
        dp = n * (x * p_n - p_prev) / (x * x - 1.0)
        step = p_n / dp
        x = x - step
        if np.max(np.abs(step)) < NEWTON_TOLERANCE:
            break
    else:
        logger.warning("Gauss-Legendre Newton iteration for n=%d did not reach %g", n, NEWTON_TOLERANCE)

    p_n, p_prev = _legendre_pair(n, x)
    dp = n * (x * p_n - p_prev) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _legendre_pair(n, x):
    """(P_n(x), P_{n-1}(x)) by the three-term recursion."""
    p_prev, p_n = np.ones_like(x), x.copy()
    if n == 0:
        return p_prev, np.zeros_like(x)
    for j in range(2, n + 1):
        p_prev, p_n = p_n, ((2 * j - 1) * x * p_n - (j - 1) * p_prev) / j
    return p_n, p_prev


def gauss_legendre(n, lo, hi):
    """
    n-point Gauss-Legendre rule on [lo, hi], exact for polynomials of degree <= 2n - 1.

    Args:
        n (int): Number of nodes, >= 1
        lo (float): Lower bound
        hi (float): Upper bound

    Returns:
        QuadratureRule: The rule
    """
    if int(n) != n or n < 1:
        raise ContractViolation(f"Gauss-Legendre needs n >= 1, got {n}")
    _check_interval(lo, hi)
    x, w = _reference_gauss_legendre(int(n))
    half = 0.5 * (hi - lo)
    return QuadratureRule(lo + half * (x + 1.0), half * w, (lo, hi))


def equidistant(n, lo, hi):
    """
    n equally spaced points including both endpoints.

    Args:
        n (int): Number of points, >= 2
        lo (float): First point
        hi (float): Last point

    Returns:
        ndarray: The points
    """
    if int(n) != n or n < 2:
        raise ContractViolation(f"Equidistant grid needs n >= 2, got {n}")
    _check_interval(lo, hi)
    return np.linspace(lo, hi, int(n))


def trapezoid(n, lo, hi):
    """
    Trapezoid rule on the equidistant grid of n points.

    Args:
        n (int): Number of points, >= 2
        lo (float): Lower bound
        hi (float): Upper bound

    Returns:
        QuadratureRule: Rule whose nodes are equidistant(n, lo, hi)
    """
    nodes = equidistant(n, lo, hi)
    weights = np.full(len(nodes), (hi - lo) / (len(nodes) - 1))
    weights[[0, -1]] *= 0.5
    return QuadratureRule(nodes, weights, (lo, hi))


def tensor_product(*rules):
    """Row-major tensor grid of per-axis rules."""
    if not rules:
        raise ContractViolation("tensor_product needs at least one rule")
    return TensorGrid(rules)


def integrate(rule, f, ordered=True):
    """
    Apply a rule to an integrand.

    Args:
        rule (QuadratureRule | TensorGrid): The rule
        f (callable): Vectorized integrand, points (Q, d) -> values (Q,)
        ordered (bool): Exactly rounded, order-independent sum (default); False uses a BLAS dot

    Returns:
        float: sum_i w_i f(x_i)
    """
    points = rule.points
    values = np.asarray(f(points), dtype=float).reshape(len(points))
    require_finite(values, "integrand value", points)
    return weighted_sum(rule.weights, values, ordered)


def weighted_sum(weights, values, ordered=True):
    """sum_i w_i v_i with a deterministic, exactly rounded reduction by default."""
    if ordered:
        return math.fsum(np.asarray(weights) * np.asarray(values))
    return float(np.dot(weights, values))


def truncation_ratio(values):
    """
    Integrand magnitude at the last node relative to its maximum, for truncated semi-infinite integrals.

    Args:
        values (ndarray): Integrand values on increasing nodes

    Returns:
        float: |f(last)| / max |f|, 0 for an identically zero integrand
    """
    magnitude = np.abs(np.asarray(values, dtype=float))
    peak = magnitude.max(initial=0.0)
    return 0.0 if peak == 0 else float(magnitude[-1] / peak)


def check_truncation(values, what):
    """Warn when a truncated integrand has not decayed at the cut."""
    ratio = truncation_ratio(values)
    if ratio > TRUNCATION_TOLERANCE:
        logger.warning("%s integrand at the truncation point is %.2e of its maximum", what, ratio)
    return ratio
