import types

import numpy as np
import pytest
import scipy.sparse as sp

from femref import (
    MESH_REFERENCE,
    AssembledSystem,
    Mesh2D,
    assemble,
    basis_eval,
    check_residuals,
    dump_matrix,
    element_matrices,
    match_reference,
    shift_invert_eigs,
    solve_mesh,
    mesh_table,
)
from utils import ContractViolation, FactorizationError, ResidualCheckError, SingularElementError

# 1D quadratic element matrices on [0, 1], nodes {0, 1/2, 1}
LINE_STIFFNESS = np.array([[7.0, -8.0, 1.0], [-8.0, 16.0, -8.0], [1.0, -8.0, 7.0]]) / 3.0
LINE_MASS = np.array([[4.0, 2.0, -1.0], [2.0, 16.0, 2.0], [-1.0, 2.0, 4.0]]) / 30.0


def pencil(stiffness, mass):
    return types.SimpleNamespace(stiffness=sp.csr_matrix(stiffness), mass=sp.csr_matrix(mass))


def unit_element():
    return np.array([[[p / 2, q / 2] for p in range(3) for q in range(3)]])


def test_lagrange_property():
    for a in range(9):
        for b in range(9):
            p, q = divmod(b, 3)
            value, _, _ = basis_eval(a, p / 2, q / 2)
            assert value == pytest.approx(1.0 if a == b else 0.0, abs=1e-15)


def test_partition_of_unity():
    xi, eta = np.random.default_rng(0).uniform(0, 1, (2, 20))
    values = np.array([basis_eval(a, xi, eta) for a in range(9)])
    np.testing.assert_allclose(values[:, 0].sum(axis=0), 1.0, rtol=1e-14)
    np.testing.assert_allclose(values[:, 1].sum(axis=0), 0.0, atol=1e-13)
    np.testing.assert_allclose(values[:, 2].sum(axis=0), 0.0, atol=1e-13)


def test_basis_eval_rejects_bad_input():
    with pytest.raises(ContractViolation):
        basis_eval(9, 0.5, 0.5)
    with pytest.raises(ContractViolation):
        basis_eval(0, 1.5, 0.5)


def test_laplacian_element_matrix():
    stiffness, mass = element_matrices(unit_element(), lambda p: np.zeros(len(p)), kinetic=1.0)
    expected = np.kron(LINE_STIFFNESS, LINE_MASS) + np.kron(LINE_MASS, LINE_STIFFNESS)
    np.testing.assert_allclose(stiffness[0], expected, atol=1e-13)
    np.testing.assert_allclose(mass[0], np.kron(LINE_MASS, LINE_MASS), atol=1e-15)


def test_inverted_element_is_singular():
    flipped = unit_element()[:, :, ::-1]
    with pytest.raises(SingularElementError) as info:
        element_matrices(flipped, lambda p: np.zeros(len(p)))
    assert info.value.element_id == 0


def test_mesh_layout():
    mesh = Mesh2D(2)
    assert mesh.nodes_per_axis == 5
    assert mesh.n_nodes == 25
    assert len(mesh.boundary) == 16
    assert mesh.connectivity.shape == (4, 9)
    assert Mesh2D(29).n_nodes == 3481
    np.testing.assert_allclose(mesh.coordinates[mesh.connectivity[0, 4]], [-3.0, -3.0])
    with pytest.raises(ContractViolation):
        Mesh2D(0)


def test_mass_matrix_integrates_the_box():
    system = assemble(Mesh2D(3), dirichlet=False)
    assert system.mass.sum() == pytest.approx(144.0, rel=1e-12)


def test_assembled_matrices_are_symmetric():
    system = assemble(Mesh2D(4))
    assert isinstance(system, AssembledSystem)
    assert abs(system.stiffness - system.stiffness.T).max() == 0.0
    assert abs(system.mass - system.mass.T).max() == 0.0


def test_dirichlet_rows():
    system = assemble(Mesh2D(3))
    boundary = system.boundary
    diagonal = system.mass.diagonal()
    assert np.count_nonzero(diagonal == 0.0) == len(boundary)
    np.testing.assert_array_equal(system.stiffness.diagonal()[boundary], 1.0)
    assert np.count_nonzero(system.stiffness[boundary].toarray()) == len(boundary)


def test_decoupled_pencil():
    eigenvalues = shift_invert_eigs(pencil(np.diag([1.0, 2.0]), np.eye(2)), shift=0.0, count=2)
    np.testing.assert_allclose(eigenvalues, [1.0, 2.0], rtol=1e-12)


def test_infinite_eigenvalue_is_dropped():
    eigenvalues = shift_invert_eigs(pencil(np.diag([1.0, 2.0, 3.0]), np.diag([1.0, 1.0, 0.0])), 0.0, 3)
    np.testing.assert_allclose(eigenvalues, [1.0, 2.0], rtol=1e-12)


def test_singular_shift():
    with pytest.raises(FactorizationError):
        shift_invert_eigs(pencil(np.diag([1.0, 2.0]), np.eye(2)), shift=1.0, count=1)


def test_inaccurate_eigenpair_is_an_error():
    stiffness, mass = sp.csr_matrix(np.diag([1.0, 2.0])), sp.csr_matrix(np.eye(2))
    vectors = np.eye(2)
    check_residuals(stiffness, mass, [1.0, 2.0], vectors)
    with pytest.raises(ResidualCheckError) as info:
        check_residuals(stiffness, mass, [1.0, 2.001], vectors)
    assert info.value.index == 1
    assert info.value.residual == pytest.approx(0.0005, rel=1e-9)


def test_eigenvectors_solve_the_pencil():
    system = assemble(Mesh2D(5))
    eigenvalues, vectors = shift_invert_eigs(system, count=3, return_vectors=True)
    for k, eps in enumerate(eigenvalues):
        residual = system.stiffness @ vectors[:, k] - eps * (system.mass @ vectors[:, k])
        assert np.linalg.norm(residual) <= 1e-8 * np.linalg.norm(system.stiffness @ vectors[:, k])


def test_eleven_by_eleven_mesh():
    result = solve_mesh(11)
    assert result["unknowns"] == 23 ** 2
    eigenvalues = result["eigenvalues"]
    assert len(eigenvalues) == 7
    # the E pair of the n=2 shell sits below the first n=3 level
    assert eigenvalues[5] < 3.5 < eigenvalues[6]
    np.testing.assert_allclose(match_reference(eigenvalues, MESH_REFERENCE[11]), MESH_REFERENCE[11], atol=1e-3)


def test_match_reference_skips_the_unlisted_state():
    computed = [1.0, 2.0, 2.0001, 2.95, 2.99, 2.995, 3.9]
    np.testing.assert_array_equal(match_reference(computed, (1.0, 2.0, 2.0, 2.95, 2.995, 3.9)),
                                  [1.0, 2.0, 2.0001, 2.95, 2.995, 3.9])
    np.testing.assert_array_equal(match_reference(computed, (1.0, 2.0, 2.0, 2.95, 2.99, 3.9)),
                                  [1.0, 2.0, 2.0001, 2.95, 2.99, 3.9])
    with pytest.raises(ContractViolation):
        match_reference(computed[:5], MESH_REFERENCE[29])


def test_table_layout():
    table = mesh_table((5, 7))
    assert list(table.columns) == ["5x5", "7x7"]
    assert list(table.index) == [1, 2, 3, 4, 5, 6, 7]
    assert table.attrs["unknowns"] == {"5x5": 121, "7x7": 225}


def test_matrix_dump(tmp_path):
    path = tmp_path / "mass.txt"
    dump_matrix(sp.diags([1.0, 2.0]), str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "row,col,value"
    assert len(lines) == 3


@pytest.mark.slow
@pytest.mark.parametrize("n, tolerance", [(5, 2e-3), (7, 1e-3), (16, 1e-3), (21, 1e-3), (29, 1e-3)])
def test_published_meshes(n, tolerance):
    eigenvalues = solve_mesh(n)["eigenvalues"]
    np.testing.assert_allclose(match_reference(eigenvalues, MESH_REFERENCE[n]), MESH_REFERENCE[n], atol=tolerance)


@pytest.mark.slow
def test_ground_level_decreases_with_refinement():
    table = mesh_table((11, 16, 21, 29))
    ground = table.loc[1].to_numpy()
    assert np.all(np.diff(ground) < 0)
    assert ground[-1] == pytest.approx(0.9986, abs=1e-3)
