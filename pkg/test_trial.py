import math

import numpy as np
import pytest

from network import Mlp, MultiIndex
from quadrature import gauss_legendre, tensor_product, trapezoid
from trial import (
    DeflationBasis,
    Envelope,
    EnvelopeKind,
    StateSnapshot,
    TrialFunction,
    deflate,
    derivative,
    evaluate,
    quadrature_norm,
    read_snapshot,
    reduced_radial,
    sample,
    state_values,
    write_snapshot,
)
from utils import ContractViolation, DegenerateStateError


def constant_net(c=1.0, n_inputs=1):
    """N(r) = c: one unit with zero weights and output weight 2c."""
    return Mlp(np.zeros((1, n_inputs)), [0.0], [2.0 * c])


def random_trial(kind, seed=0, n_inputs=1, shape=0.7, log_shape=True):
    net = Mlp.random(n_inputs, 5, np.random.default_rng(seed))
    return TrialFunction(Envelope(kind, shape), net, log_shape=log_shape)


def snapshot_of(tf, quad, problem_id="test"):
    values = evaluate(tf, quad.points)
    return StateSnapshot(problem_id, (tf,), quadrature_norm(values, quad.weights), 0.0)


def test_radial_envelope_vanishes_at_origin():
    tf = random_trial(EnvelopeKind.RADIAL_EXP)
    assert evaluate(tf, [0.0]) == 0.0


def test_zero_output_weights_vanish_everywhere():
    net = Mlp([[0.5]], [0.1], [0.0])
    tf = TrialFunction(Envelope(EnvelopeKind.GAUSSIAN_1D, 1.0), net)
    np.testing.assert_array_equal(evaluate(tf, np.linspace(-1, 1, 5)[:, None]), 0.0)


def test_gaussian_envelope_closed_form():
    tf = TrialFunction(Envelope(EnvelopeKind.GAUSSIAN_1D, 1.0), constant_net(0.8))
    assert evaluate(tf, [1.0]) == pytest.approx(0.8 * math.exp(-1.0), rel=1e-14)
    assert derivative(tf, [0.0], MultiIndex((2,))) == pytest.approx(-1.6, rel=1e-14)


def test_second_derivative_of_unit_gaussian():
    tf = TrialFunction(Envelope(EnvelopeKind.GAUSSIAN_1D, 1.0), constant_net(1.0))
    assert derivative(tf, [0.0], MultiIndex((2,))) == pytest.approx(-2.0, rel=1e-14)
    assert derivative(tf, [0.3], MultiIndex.zeros(1)) == evaluate(tf, [0.3])


@pytest.mark.parametrize("kind, n_inputs, orders", [
    (EnvelopeKind.GAUSSIAN_1D, 1, (2,)),
    (EnvelopeKind.RADIAL_EXP, 1, (1,)),
    (EnvelopeKind.RADIAL_EXP, 1, (2,)),
    (EnvelopeKind.GAUSSIAN_ND, 2, (2, 0)),
    (EnvelopeKind.GAUSSIAN_ND, 2, (1, 1)),
    (EnvelopeKind.GAUSSIAN_ND, 3, (0, 0, 2)),
])
def test_derivative_against_finite_difference(kind, n_inputs, orders):
    tf = random_trial(kind, seed=11, n_inputs=n_inputs)
    point = np.full(n_inputs, 0.6)
    h = 1e-4
    axes = [axis for axis, k in enumerate(orders) for _ in range(k)]
    e = [np.eye(n_inputs)[axis] * h for axis in axes]
    if len(axes) == 1:
        estimate = (evaluate(tf, point + e[0]) - evaluate(tf, point - e[0])) / (2 * h)
    elif axes[0] == axes[1]:
        estimate = (evaluate(tf, point + e[0]) - 2 * evaluate(tf, point) + evaluate(tf, point - e[0])) / h ** 2
    else:
        estimate = (evaluate(tf, point + e[0] + e[1]) - evaluate(tf, point + e[0] - e[1])
                    - evaluate(tf, point - e[0] + e[1]) + evaluate(tf, point - e[0] - e[1])) / (4 * h * h)
    assert derivative(tf, point, MultiIndex(orders)) == pytest.approx(estimate, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("kind, n_inputs", [
    (EnvelopeKind.GAUSSIAN_1D, 1),
    (EnvelopeKind.RADIAL_EXP, 1),
    (EnvelopeKind.GAUSSIAN_ND, 2),
])
@pytest.mark.parametrize("log_shape", [True, False])
def test_jacobian_against_finite_difference(kind, n_inputs, log_shape):
    tf = random_trial(kind, seed=3, n_inputs=n_inputs, log_shape=log_shape)
    points = np.random.default_rng(4).uniform(0.1, 1.5, (4, n_inputs))
    mi = MultiIndex.axis(n_inputs, 0, 2)
    jacobian = sample(tf, points, [mi], with_gradient=True)[mi].jacobian
    params = tf.parameters()
    estimate = np.empty_like(jacobian)
    for i in range(len(params)):
        step = 1e-6 * max(1.0, abs(params[i]))
        up, down = params.copy(), params.copy()
        up[i] += step
        down[i] -= step
        estimate[:, i] = (derivative(tf.with_parameters(up), points, mi)
                          - derivative(tf.with_parameters(down), points, mi)) / (2 * step)
    np.testing.assert_allclose(jacobian, estimate, rtol=1e-5, atol=1e-7 * np.abs(estimate).max())


def test_parameter_vector_round_trip():
    tf = random_trial(EnvelopeKind.RADIAL_EXP, shape=0.3)
    params = tf.parameters()
    assert params[-1] == pytest.approx(math.log(0.3))
    rebuilt = tf.with_parameters(params)
    assert rebuilt.envelope.shape == pytest.approx(0.3, rel=1e-15)
    direct = random_trial(EnvelopeKind.RADIAL_EXP, shape=0.3, log_shape=False)
    assert direct.parameters()[-1] == 0.3
    with pytest.raises(ContractViolation):
        tf.with_parameters(params[:-1])


def test_envelope_shape_must_be_positive():
    with pytest.raises(ContractViolation):
        Envelope(EnvelopeKind.GAUSSIAN_1D, 0.0)
    with pytest.raises(ContractViolation):
        TrialFunction(Envelope(EnvelopeKind.RADIAL_EXP, 1.0), constant_net(n_inputs=2))


def test_reduced_radial_is_finite_at_origin():
    tf = random_trial(EnvelopeKind.RADIAL_EXP, seed=5)
    r = np.array([[0.0], [0.5], [2.0]])
    reduced = reduced_radial(tf, r)
    assert np.all(np.isfinite(reduced))
    np.testing.assert_allclose(reduced[1:] * r[1:, 0], evaluate(tf, r[1:]), rtol=1e-14)
    with pytest.raises(ContractViolation):
        reduced_radial(random_trial(EnvelopeKind.GAUSSIAN_1D), r)


def test_zero_state_is_degenerate():
    with pytest.raises(DegenerateStateError):
        quadrature_norm(np.zeros(5), np.ones(5))


def test_deflation_with_empty_basis_is_identity():
    tf = random_trial(EnvelopeKind.GAUSSIAN_1D, seed=6)
    quad = gauss_legendre(30, -4.0, 4.0)
    state = deflate(tf, DeflationBasis(), quad)
    np.testing.assert_array_equal(state(quad.points), evaluate(tf, quad.points))


def test_deflating_a_basis_member_annihilates_it():
    quad = gauss_legendre(40, -6.0, 6.0)
    tf = random_trial(EnvelopeKind.GAUSSIAN_1D, seed=7)
    basis = DeflationBasis()
    basis.append(snapshot_of(tf, quad))
    values = deflate(tf, basis, quad)(quad.points)
    assert math.sqrt(quad.weights @ (values * values)) <= 1e-8


def test_odd_state_is_orthogonal_to_even_basis():
    axis = trapezoid(41, -5.0, 5.0)
    quad = tensor_product(axis)
    even = TrialFunction(Envelope(EnvelopeKind.GAUSSIAN_1D, 0.5), constant_net())
    odd = TrialFunction(Envelope(EnvelopeKind.GAUSSIAN_1D, 0.5), Mlp([[1.0], [-1.0]], [0.0, 0.0], [1.0, -1.0]))
    basis = DeflationBasis()
    basis.append(snapshot_of(even, quad))
    np.testing.assert_allclose(deflate(odd, basis, quad)(quad.points), evaluate(odd, quad.points), atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_deflated_state_is_orthogonal_to_every_basis_state(seed):
    quad = gauss_legendre(40, -6.0, 6.0)
    basis = DeflationBasis()
    for k in range(3):
        raw = random_trial(EnvelopeKind.GAUSSIAN_1D, seed=100 * seed + k, shape=0.5)
        state = deflate(raw, basis, quad)
        values = state(quad.points)
        norm = quadrature_norm(values, quad.weights)
        basis.append(StateSnapshot("test", (raw,), norm, float(k), tuple(state.overlaps)))
    raw = random_trial(EnvelopeKind.GAUSSIAN_1D, seed=100 * seed + 99, shape=0.5)
    values = deflate(raw, basis, quad)(quad.points)
    overlaps = basis.values(quad.points) @ (quad.weights * values)
    assert np.max(np.abs(overlaps)) <= 1e-8 * quadrature_norm(values, quad.weights)


def test_state_values_follow_snapshot_projections():
    quad = gauss_legendre(40, -6.0, 6.0)
    ground = random_trial(EnvelopeKind.GAUSSIAN_1D, seed=21, shape=0.5)
    basis = DeflationBasis()
    basis.append(snapshot_of(ground, quad))
    raw = random_trial(EnvelopeKind.GAUSSIAN_1D, seed=22, shape=0.5)
    state = deflate(raw, basis, quad)
    values = state(quad.points)
    snapshot = StateSnapshot("test", (raw,), quadrature_norm(values, quad.weights), 1.0, tuple(state.overlaps))
    np.testing.assert_allclose(state_values(snapshot, basis, quad.points), values / snapshot.norm, rtol=1e-12)


def test_basis_rejects_inconsistent_snapshots():
    quad = gauss_legendre(10, -1.0, 1.0)
    snapshot = snapshot_of(random_trial(EnvelopeKind.GAUSSIAN_1D), quad)
    basis = DeflationBasis()
    with pytest.raises(ContractViolation):
        basis.append(StateSnapshot("test", snapshot.trials, 1.0, 0.0, (0.5,)))
    with pytest.raises(ContractViolation):
        StateSnapshot("test", snapshot.trials, 0.0, 0.0)


def test_snapshot_file_round_trip(tmp_path):
    tf = random_trial(EnvelopeKind.RADIAL_EXP, seed=8, shape=0.25, log_shape=False)
    snapshot = StateSnapshot("muonic-schrodinger", (tf,), 1.2345678901234567, -10.47, (0.1, -2e-9))
    path = tmp_path / "state_0.snapshot"
    write_snapshot(str(path), snapshot)
    loaded = read_snapshot(str(path))
    assert loaded.problem_id == "muonic-schrodinger"
    assert loaded.norm == snapshot.norm
    assert loaded.eigenvalue == snapshot.eigenvalue
    assert loaded.projections == snapshot.projections
    assert loaded.trials[0].log_shape is False
    assert loaded.trials[0].envelope == tf.envelope
    np.testing.assert_array_equal(loaded.trials[0].parameters(), tf.parameters())
