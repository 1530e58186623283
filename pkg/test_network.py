import numpy as np
import pytest

from network import (
    MAX_DERIVATIVE_ORDER,
    Mlp,
    MultiIndex,
    derivative_table,
    forward,
    input_derivative,
    parameter_count,
    parameter_gradient_of_derivative,
    sigmoid,
    sigmoid_derivative,
)
from utils import ContractViolation, NonFiniteValueError


def random_net(seed, n_inputs=2, n_hidden=8):
    return Mlp.random(n_inputs, n_hidden, np.random.default_rng(seed))


def fd_input_derivative(net, point, orders, h=1e-4):
    """Nested central differences of forward for total order <= 2."""
    point = np.asarray(point, dtype=float)
    axes = [axis for axis, k in enumerate(orders) for _ in range(k)]
    if not axes:
        return forward(net, point)
    if len(axes) == 1:
        e = np.eye(len(point))[axes[0]] * h
        return (forward(net, point + e) - forward(net, point - e)) / (2 * h)
    a, b = (np.eye(len(point))[axis] * h for axis in axes)
    if axes[0] == axes[1]:
        return (forward(net, point + a) - 2 * forward(net, point) + forward(net, point - a)) / (h * h)
    return (forward(net, point + a + b) - forward(net, point + a - b)
            - forward(net, point - a + b) + forward(net, point - a - b)) / (4 * h * h)


def test_zero_output_weights_give_zero():
    net = Mlp([[0.3], [-1.2]], [0.1, 0.4], [0.0, 0.0])
    assert forward(net, [2.5]) == 0.0


def test_single_unit_at_zero_preactivation():
    net = Mlp([[0.0]], [0.0], [1.0])
    assert forward(net, [3.7]) == pytest.approx(0.5)


def test_antisymmetric_units_cancel():
    net = Mlp([[1.0], [1.0]], [0.0, 0.0], [1.0, -1.0])
    np.testing.assert_allclose(forward(net, np.linspace(-3, 3, 7)[:, None]), 0.0, atol=1e-15)


def test_batch_matches_single_points():
    net = random_net(1)
    points = np.random.default_rng(2).uniform(-2, 2, (5, 2))
    batch = forward(net, points)
    assert batch.shape == (5,)
    np.testing.assert_allclose(batch, [forward(net, p) for p in points], rtol=1e-14)


def test_parameter_count_and_flattening_order():
    assert parameter_count(2, 8) == 32
    net = Mlp([[1.0, 2.0], [3.0, 4.0]], [5.0, 6.0], [7.0, 8.0])
    np.testing.assert_array_equal(net.flatten(), [1, 2, 3, 4, 5, 6, 7, 8])
    rebuilt = Mlp.from_flat(net.flatten(), 2, 2)
    np.testing.assert_array_equal(rebuilt.input_weights, net.input_weights)
    with pytest.raises(ContractViolation):
        Mlp.from_flat(np.zeros(7), 2, 2)


def test_inconsistent_dimensions_rejected():
    with pytest.raises(ContractViolation):
        Mlp([[1.0, 2.0]], [0.0, 0.0], [1.0])
    with pytest.raises(ContractViolation):
        Mlp([[np.nan]], [0.0], [1.0])


def test_sigmoid_derivatives_at_zero():
    assert sigmoid(0.0) == 0.5
    assert sigmoid_derivative(0.0, 1) == pytest.approx(0.25)
    assert sigmoid_derivative(0.0, 2) == pytest.approx(0.0, abs=1e-16)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_sigmoid_derivative_against_finite_difference(order):
    z, h = 1.3, 1e-3
    # fourth-order central difference of the next lower derivative
    stencil = [sigmoid_derivative(z + k * h, order - 1) for k in (-2, -1, 1, 2)]
    estimate = (stencil[0] - 8 * stencil[1] + 8 * stencil[2] - stencil[3]) / (12 * h)
    assert sigmoid_derivative(z, order) == pytest.approx(estimate, rel=1e-7)


def test_sigmoid_derivative_tails_stay_finite():
    for order in range(MAX_DERIVATIVE_ORDER + 1):
        values = sigmoid_derivative(np.array([-800.0, 800.0]), order)
        assert np.all(np.isfinite(values))
    with pytest.raises(ContractViolation):
        sigmoid_derivative(0.0, MAX_DERIVATIVE_ORDER + 1)


def test_zeroth_derivative_is_forward():
    net = random_net(3)
    point = np.array([0.4, -0.9])
    assert input_derivative(net, point, MultiIndex.zeros(2)) == forward(net, point)


def test_chain_rule_first_derivative():
    net = Mlp([[2.0]], [0.0], [1.0])
    assert input_derivative(net, [0.0], MultiIndex((1,))) == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(100))
def test_input_derivatives_against_nested_differences(seed):
    rng = np.random.default_rng(seed)
    net = random_net(seed)
    point = rng.uniform(-2, 2, 2)
    for orders in [(1, 0), (0, 1), (2, 0), (0, 2), (1, 1)]:
        exact = input_derivative(net, point, MultiIndex(orders))
        assert exact == pytest.approx(fd_input_derivative(net, point, orders), rel=1e-5, abs=1e-6)


def test_output_and_bias_gradients_closed_form():
    net = random_net(4)
    point = np.array([0.2, 0.7])
    gradient = parameter_gradient_of_derivative(net, point, MultiIndex.zeros(2))
    z = net.input_weights @ point + net.hidden_biases
    m, n = net.n_hidden, net.n_inputs
    np.testing.assert_allclose(gradient[m * n + m:], sigmoid(z), rtol=1e-14)
    np.testing.assert_allclose(gradient[m * n:m * n + m], net.output_weights * sigmoid_derivative(z, 1),
                               rtol=1e-14)


@pytest.mark.parametrize("orders", [(0,), (1,), (2,), (3,)])
def test_parameter_gradient_against_finite_difference(orders):
    net = random_net(5, n_inputs=1)
    mi = MultiIndex(orders)
    point = np.array([0.35])
    gradient = parameter_gradient_of_derivative(net, point, mi)
    params = net.flatten()
    estimate = np.empty_like(params)
    for i in range(len(params)):
        step = 1e-6 * max(1.0, abs(params[i]))
        up, down = params.copy(), params.copy()
        up[i] += step
        down[i] -= step
        estimate[i] = (input_derivative(Mlp.from_flat(up, 1, 8), point, mi)
                       - input_derivative(Mlp.from_flat(down, 1, 8), point, mi)) / (2 * step)
    np.testing.assert_allclose(gradient, estimate, rtol=1e-6, atol=1e-9)


def test_parameter_gradient_order_limit():
    net = random_net(6, n_inputs=1)
    with pytest.raises(ContractViolation):
        parameter_gradient_of_derivative(net, [0.0], MultiIndex((MAX_DERIVATIVE_ORDER,)))


def test_derivative_table_matches_single_calls():
    net = random_net(7)
    points = np.random.default_rng(8).uniform(-1, 1, (6, 2))
    indices = [MultiIndex((0, 0)), MultiIndex((2, 0)), MultiIndex((1, 1))]
    table = derivative_table(net, points, indices, with_gradient=True)
    for mi in indices:
        values, gradient = table[mi]
        np.testing.assert_allclose(values, input_derivative(net, points, mi), rtol=1e-13)
        np.testing.assert_allclose(gradient, parameter_gradient_of_derivative(net, points, mi), rtol=1e-13)


def test_contract_violations():
    net = random_net(9)
    with pytest.raises(ContractViolation):
        forward(net, [1.0, 2.0, 3.0])
    with pytest.raises(ContractViolation):
        input_derivative(net, [0.0, 0.0], MultiIndex((1,)))
    with pytest.raises(NonFiniteValueError):
        forward(net, [np.inf, 0.0])
