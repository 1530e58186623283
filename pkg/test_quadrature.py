import math

import numpy as np
import pytest

from quadrature import (
    equidistant,
    gauss_legendre,
    integrate,
    tensor_product,
    trapezoid,
    truncation_ratio,
    weighted_sum,
)
from utils import ContractViolation, NonFiniteValueError


def test_one_point_rule_is_midpoint():
    rule = gauss_legendre(1, -1.0, 1.0)
    np.testing.assert_allclose(rule.nodes, [0.0], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [2.0])


def test_two_point_rule():
    rule = gauss_legendre(2, -1.0, 1.0)
    np.testing.assert_allclose(rule.nodes, [-1 / math.sqrt(3), 1 / math.sqrt(3)], rtol=1e-15)
    np.testing.assert_allclose(rule.weights, [1.0, 1.0], rtol=1e-14)


def test_five_point_rule_degree_nine():
    rule = gauss_legendre(5, 0.0, 1.0)
    assert integrate(rule, lambda p: p[:, 0] ** 9) == pytest.approx(0.1, abs=1e-14)


@pytest.mark.parametrize("n", range(2, 31))
def test_exactness_degree(n):
    rule = gauss_legendre(n, 0.0, 1.0)
    assert np.all(np.diff(rule.nodes) > 0)
    assert np.all((rule.nodes > 0) & (rule.nodes < 1))
    assert np.all(rule.weights > 0)
    for k in range(2 * n):
        assert integrate(rule, lambda p: p[:, 0] ** k) == pytest.approx(1.0 / (k + 1), rel=1e-12)


def test_constant_on_muonic_interval():
    assert integrate(gauss_legendre(80, 0.0, 40.0), lambda p: np.ones(len(p))) == pytest.approx(40.0, abs=1e-12)


def test_odd_integrand_vanishes():
    rule = gauss_legendre(21, -3.0, 3.0)
    assert integrate(rule, lambda p: p[:, 0] ** 3 * np.exp(-p[:, 0] ** 2)) == pytest.approx(0.0, abs=1e-13)


def test_two_dimensional_gaussian():
    axis = gauss_legendre(40, -6.0, 6.0)
    grid = tensor_product(axis, axis)
    value = integrate(grid, lambda p: np.exp(-(p ** 2).sum(axis=1)))
    one_d = integrate(axis, lambda p: np.exp(-p[:, 0] ** 2))
    assert value == pytest.approx(math.pi, abs=1e-8)
    assert value == pytest.approx(one_d ** 2, rel=1e-13)


def test_tensor_grid_is_row_major():
    grid = tensor_product(trapezoid(3, 0.0, 2.0), trapezoid(2, 0.0, 1.0))
    assert grid.shape == (3, 2)
    assert len(grid) == 6
    np.testing.assert_array_equal(grid.points[:3], [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert grid.weights.sum() == pytest.approx(2.0)


def test_equidistant_points():
    np.testing.assert_array_equal(equidistant(2, 0.0, 1.0), [0.0, 1.0])
    np.testing.assert_array_equal(equidistant(3, 0.0, 2.0), [0.0, 1.0, 2.0])
    assert np.diff(equidistant(150, -1.0, 2.0)) == pytest.approx(3.0 / 149)


def test_trapezoid_weights():
    rule = trapezoid(5, 0.0, 1.0)
    np.testing.assert_allclose(rule.weights, [0.125, 0.25, 0.25, 0.25, 0.125])
    assert integrate(rule, lambda p: p[:, 0]) == pytest.approx(0.5)


@pytest.mark.parametrize("args", [(0, 0.0, 1.0), (3, 1.0, 1.0), (3, 2.0, 1.0), (3, 0.0, np.inf)])
def test_invalid_rules_rejected(args):
    with pytest.raises(ContractViolation):
        gauss_legendre(*args)


def test_equidistant_needs_two_points():
    with pytest.raises(ContractViolation):
        equidistant(1, 0.0, 1.0)


def test_non_finite_integrand_names_the_node():
    rule = gauss_legendre(4, 0.0, 1.0)
    with pytest.raises(NonFiniteValueError) as info:
        integrate(rule, lambda p: 1.0 / (p[:, 0] - rule.nodes[2]))
    assert info.value.point is not None


def test_ordered_and_fast_sums_agree():
    rng = np.random.default_rng(0)
    weights, values = rng.uniform(size=1000), rng.normal(size=1000)
    assert weighted_sum(weights, values) == pytest.approx(weighted_sum(weights, values, ordered=False), rel=1e-12)
    assert weighted_sum(weights, values) == weighted_sum(weights[::-1], values[::-1])


def test_truncation_ratio():
    assert truncation_ratio(np.zeros(4)) == 0.0
    assert truncation_ratio([1.0, 4.0, 2.0]) == pytest.approx(0.5)
