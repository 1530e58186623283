"""
Finite-element reference solver for the Henon-Heiles eigenproblem.
Biquadratic (9-node) Galerkin elements on a square box with homogeneous
Dirichlet boundary, 3 x 3 Gauss quadrature per element, sparse assembly and a
shift-and-invert Arnoldi eigensolve of the pencil K psi = eps M psi.

Shift-and-invert operator: C = (K - shift M)^-1 M, whose eigenvalues are
theta = 1 / (eps - shift). Boundary rows of M are zero, so the infinite
eigenvalues of the pencil land exactly on theta = 0 and are dropped.
"""
import logging
import time

import attrs
import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.sparse.linalg import LinearOperator, eigs, splu

from problems import henon_heiles_potential
from quadrature import gauss_legendre
from utils import (
    ContractViolation,
    EigenSolverError,
    FactorizationError,
    ResidualCheckError,
    SingularElementError,
    save_results_to_csv,
)

logger = logging.getLogger(__name__)

BOX = (-6.0, 6.0)
DEFAULT_SHIFT = 0.1
# The published tables skip one state of the n=2 E pair, so seven levels cover them
DEFAULT_COUNT = 7
ARNOLDI_SUBSPACE = 30

# Systems this small are solved densely; ARPACK needs count < n - 1
DENSE_LIMIT = 64

# theta below this fraction of the largest |theta| is an infinite pencil eigenvalue
ZERO_THETA = 1e-12
IMAGINARY_TOLERANCE = 1e-8
RESIDUAL_TOLERANCE = 1e-8

MESH_SIZES = (5, 7, 11, 16, 21, 29)

# Published eigenvalues per mesh size, used for cross-checks through match_reference
MESH_REFERENCE = {
    5: (1.0075, 2.1988, 2.2001, 3.2495, 3.2878, 4.4347),
    7: (0.9997, 2.0852, 2.0862, 3.0159, 3.0515, 4.1139),
    11: (1.0015, 2.0037, 2.0037, 2.9767, 3.0065, 3.9868),
    16: (0.9994, 1.9930, 1.9930, 2.9648, 2.9943, 3.9433),
    21: (0.9989, 1.9911, 1.9911, 2.9593, 2.9885, 3.9323),
    29: (0.9986, 1.9901, 1.9901, 2.9571, 2.9857, 3.9262),
}

# Quadratic Lagrange polynomials on the nodes {0, 1/2, 1} and their derivatives
_LAGRANGE = (
    (lambda t: 2.0 * t * t - 3.0 * t + 1.0, lambda t: 4.0 * t - 3.0),
    (lambda t: 4.0 * t - 4.0 * t * t, lambda t: 4.0 - 8.0 * t),
    (lambda t: 2.0 * t * t - t, lambda t: 4.0 * t - 1.0),
)


@attrs.frozen(eq=False, slots=False)
class Mesh2D:
    """
    n_elements x n_elements biquadratic elements on box x box.

    Node (i, j) (i along x, j along y) has index i * (2 n_elements + 1) + j.
    Local node a = 3 p + q of an element sits at (xi, eta) = (p/2, q/2).
    """

    n_elements: int = attrs.field()
    box: tuple = BOX

    @n_elements.validator
    def _check_elements(self, attribute, value):
        if int(value) != value or value < 1:
            raise ContractViolation(f"Mesh needs at least one element per axis, got {value}")

    @property
    def nodes_per_axis(self):
        return 2 * self.n_elements + 1

    @property
    def n_nodes(self):
        return self.nodes_per_axis ** 2

    @property
    def coordinates(self):
        axis = np.linspace(self.box[0], self.box[1], self.nodes_per_axis)
        x, y = np.meshgrid(axis, axis, indexing="ij")
        return np.stack([x.ravel(), y.ravel()], axis=1)

    @property
    def boundary(self):
        last = self.nodes_per_axis - 1
        i, j = np.divmod(np.arange(self.n_nodes), self.nodes_per_axis)
        return np.flatnonzero((i == 0) | (i == last) | (j == 0) | (j == last))

    @property
    def connectivity(self):
        """(n_elements^2, 9) global node indices; element id = ex * n_elements + ey."""
        n, stride = self.n_elements, self.nodes_per_axis
        ex, ey = np.divmod(np.arange(n * n), n)
        p, q = np.divmod(np.arange(9), 3)
        return (2 * ex[:, None] + p[None, :]) * stride + (2 * ey[:, None] + q[None, :])


@attrs.frozen(eq=False)
class AssembledSystem:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    boundary: np.ndarray
    mesh: Mesh2D

    @property
    def dimension(self):
        return self.stiffness.shape[0]


def basis_eval(local_index, xi, eta):
    """
    Biquadratic shape function of one local node and its reference derivatives.

    Args:
        local_index (int): 0..8, node (p, q) = divmod(local_index, 3)
        xi (float | ndarray): Reference coordinate in [0, 1]
        eta (float | ndarray): Reference coordinate in [0, 1]

    Returns:
        tuple: (value, d/dxi, d/deta)
    """
    if local_index not in range(9):
        raise ContractViolation(f"Local node index must be 0..8, got {local_index}")
    xi, eta = np.asarray(xi, dtype=float), np.asarray(eta, dtype=float)
    if np.any((xi < 0) | (xi > 1) | (eta < 0) | (eta > 1)):
        raise ContractViolation("Reference coordinates must lie in [0, 1]^2")
    p, q = divmod(local_index, 3)
    (lp, dlp), (lq, dlq) = _LAGRANGE[p], _LAGRANGE[q]
    return lp(xi) * lq(eta), dlp(xi) * lq(eta), lp(xi) * dlq(eta)


def _reference_tables():
    """Shape values (G, 9), reference gradients (G, 9, 2) and weights (G,) at the 3 x 3 Gauss points."""
    rule = gauss_legendre(3, 0.0, 1.0)
    xi, eta = (axis.ravel() for axis in np.meshgrid(rule.nodes, rule.nodes, indexing="ij"))
    weights = np.outer(rule.weights, rule.weights).ravel()
    values = np.empty((len(xi), 9))
    gradients = np.empty((len(xi), 9, 2))
    for a in range(9):
        values[:, a], gradients[:, a, 0], gradients[:, a, 1] = basis_eval(a, xi, eta)
    return values, gradients, weights


def element_matrices(coordinates, potential, kinetic=0.5):
    """
    Local stiffness and mass matrices of a batch of elements.

    Args:
        coordinates (ndarray): (E, 9, 2) node coordinates in local node order
        potential (callable): Points (P, 2) -> V (P,)
        kinetic (float): Coefficient of the Laplacian, H = -kinetic Laplacian + V

    Returns:
        tuple: (K_local (E, 9, 9), M_local (E, 9, 9))
    """
    values, gradients, weights = _reference_tables()
    # jacobian[e, g, d, k] = d x_d / d xi_k
    jacobian = np.einsum("ead,gak->egdk", coordinates, gradients)
    det = jacobian[..., 0, 0] * jacobian[..., 1, 1] - jacobian[..., 0, 1] * jacobian[..., 1, 0]
    bad = np.flatnonzero((det <= 0).any(axis=1))
    if len(bad):
        raise SingularElementError(f"Element {bad[0]} has a non-positive Jacobian determinant",
                                   element_id=int(bad[0]))

    inverse = np.linalg.inv(jacobian)
    physical = np.einsum("gak,egkd->egad", gradients, inverse)
    points = np.einsum("ga,ead->egd", values, coordinates)
    v = np.asarray(potential(points.reshape(-1, 2)), dtype=float).reshape(det.shape)

    scale = weights * det
    stiffness = kinetic * np.einsum("eg,egad,egbd->eab", scale, physical, physical)
    stiffness += np.einsum("eg,ga,gb->eab", scale * v, values, values)
    mass = np.einsum("eg,ga,gb->eab", scale, values, values)
    return stiffness, mass


def assemble(mesh, potential=henon_heiles_potential, kinetic=0.5, dirichlet=True):
    """
    Global stiffness and mass matrices.

    Args:
        mesh (Mesh2D): The mesh
        potential (callable): Points (P, 2) -> V (P,)
        kinetic (float): Coefficient of the Laplacian
        dirichlet (bool): Impose psi = 0 on the boundary (K rows become identity rows, M rows zero)

    Returns:
        AssembledSystem: Symmetric sparse K and M
    """
    connectivity = mesh.connectivity
    coordinates = mesh.coordinates[connectivity]
    stiffness_local, mass_local = element_matrices(coordinates, potential, kinetic)

    rows = np.repeat(connectivity, 9, axis=1).ravel()
    cols = np.tile(connectivity, (1, 9)).ravel()
    shape = (mesh.n_nodes, mesh.n_nodes)
    stiffness = sp.coo_matrix((stiffness_local.ravel(), (rows, cols)), shape=shape).tocsr()
    mass = sp.coo_matrix((mass_local.ravel(), (rows, cols)), shape=shape).tocsr()
    stiffness = ((stiffness + stiffness.T) * 0.5).tocsr()
    mass = ((mass + mass.T) * 0.5).tocsr()

    boundary = mesh.boundary
    if dirichlet:
        interior = np.ones(mesh.n_nodes)
        interior[boundary] = 0.0
        keep = sp.diags(interior)
        stiffness = (keep @ stiffness @ keep + sp.diags(1.0 - interior)).tocsr()
        mass = (keep @ mass @ keep).tocsr()
        mass.eliminate_zeros()
    logger.debug("Assembled %dx%d mesh: %d unknowns, %d non-zeros in K",
                 mesh.n_elements, mesh.n_elements, mesh.n_nodes, stiffness.nnz)
    return AssembledSystem(stiffness, mass, boundary, mesh)


def shift_invert_eigs(system, shift=DEFAULT_SHIFT, count=DEFAULT_COUNT, return_vectors=False):
    """
    Finite eigenvalues of K psi = eps M psi closest to the shift.

    Args:
        system (AssembledSystem): Pencil (any object with sparse `stiffness` and `mass`)
        shift (float): sigma; K - sigma M must be nonsingular
        count (int): Number of eigenvalues wanted
        return_vectors (bool): Also return the eigenvectors as columns

    Returns:
        ndarray | tuple: Eigenvalues sorted ascending, and eigenvectors when requested

    Raises:
        FactorizationError: if K - sigma M cannot be factorized
        ResidualCheckError: if an eigenpair misses RESIDUAL_TOLERANCE
    """
    if int(count) != count or count < 1:
        raise ContractViolation(f"Eigenvalue count must be a positive integer, got {count}")
    stiffness = sp.csc_matrix(system.stiffness, dtype=float)
    mass = sp.csc_matrix(system.mass, dtype=float)
    n = stiffness.shape[0]
    try:
        factor = splu(stiffness - shift * mass)
    except RuntimeError as e:
        raise FactorizationError(f"K - {shift} M is singular ({e}); choose a different shift") from e

    if n <= DENSE_LIMIT or count >= n - 1:
        theta, vectors = scipy.linalg.eig(factor.solve(mass.toarray()))
    else:
        operator = LinearOperator((n, n), matvec=lambda x: factor.solve(mass @ x), dtype=float)
        start = np.random.default_rng(0).standard_normal(n)
        theta, vectors = eigs(operator, k=count, which="LM", v0=start,
                              ncv=min(n, max(ARNOLDI_SUBSPACE, 2 * count + 1)))

    scale = np.max(np.abs(theta), initial=0.0)
    finite = np.abs(theta) > ZERO_THETA * scale
    theta, vectors = theta[finite], vectors[:, finite]
    imaginary = np.abs(theta.imag) > IMAGINARY_TOLERANCE * np.abs(theta)
    if np.any(imaginary):
        raise EigenSolverError(f"Complex eigenvalues {theta[imaginary]} of a symmetric pencil")

    eigenvalues = shift + 1.0 / theta.real
    order = np.argsort(eigenvalues)[:count]
    eigenvalues, vectors = eigenvalues[order], np.real(vectors[:, order])
    check_residuals(stiffness, mass, eigenvalues, vectors)
    return (eigenvalues, vectors) if return_vectors else eigenvalues


def check_residuals(stiffness, mass, eigenvalues, vectors, tolerance=RESIDUAL_TOLERANCE):
    """
    Raise ResidualCheckError when |K psi - eps M psi| / |K psi| exceeds the tolerance for any pair.
    """
    for k, eps in enumerate(eigenvalues):
        k_psi = stiffness @ vectors[:, k]
        residual = np.linalg.norm(k_psi - eps * (mass @ vectors[:, k])) / np.linalg.norm(k_psi)
        if not residual <= tolerance:
            raise ResidualCheckError(f"Eigenpair {k} (eps={eps:.6f}) has relative residual {residual:.2e}, "
                                     f"above {tolerance:.0e}", index=k, residual=residual)


def solve_mesh(n_elements, shift=DEFAULT_SHIFT, count=DEFAULT_COUNT):
    """
    Assemble and solve the Henon-Heiles pencil on one mesh.

    Returns:
        dict: mesh, unknowns, eigenvalues, wall_time
    """
    start = time.perf_counter()
    mesh = Mesh2D(n_elements)
    eigenvalues = shift_invert_eigs(assemble(mesh), shift, count)
    wall_time = time.perf_counter() - start
    logger.info("FEM %dx%d (%d unknowns): %s in %.2fs", n_elements, n_elements, mesh.n_nodes,
                ", ".join(f"{e:.4f}" for e in eigenvalues), wall_time)
    return {"mesh": n_elements, "unknowns": mesh.n_nodes, "eigenvalues": eigenvalues, "wall_time": wall_time}


def match_reference(eigenvalues, reference):
    """
    Computed eigenvalues paired with a reference list that omits some states.

    Each reference value takes a distinct computed eigenvalue, minimizing the total
    absolute difference. The published tables keep one member of a near-degenerate
    pair, and which member depends on the mesh.

    Returns:
        ndarray: Matched eigenvalues, ascending like the reference
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if len(eigenvalues) < len(reference):
        raise ContractViolation(f"Need at least {len(reference)} eigenvalues, got {len(eigenvalues)}")
    _, cols = linear_sum_assignment(np.abs(reference[:, None] - eigenvalues[None, :]))
    return np.sort(eigenvalues[cols])


def mesh_table(sizes=MESH_SIZES, shift=DEFAULT_SHIFT, count=DEFAULT_COUNT):
    """
    Lowest eigenvalues for several mesh sizes, one column per mesh.

    Args:
        sizes (iterable of int): Elements per axis
        shift (float): Shift for the eigensolve
        count (int): Eigenvalues per mesh

    Returns:
        DataFrame: Index "level" 1..count, columns "<n>x<n>", plus attrs["unknowns"] and attrs["wall_time"]
    """
    columns = {}
    unknowns, wall_times = {}, {}
    for n in sizes:
        result = solve_mesh(n, shift, count)
        label = f"{n}x{n}"
        columns[label] = result["eigenvalues"]
        unknowns[label] = result["unknowns"]
        wall_times[label] = result["wall_time"]
    table = pd.DataFrame(columns, index=pd.RangeIndex(1, count + 1, name="level"))
    table.attrs["unknowns"] = unknowns
    table.attrs["wall_time"] = wall_times
    return table


def dump_matrix(matrix, path):
    """Write a sparse matrix as (row, col, value) rows."""
    coo = sp.coo_matrix(matrix)
    save_results_to_csv(pd.DataFrame({"row": coo.row, "col": coo.col, "value": coo.data}), path)
