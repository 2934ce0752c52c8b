import logging
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sp_la

RESIDUAL_TOL = 1e-10


class SingularMatrixError(RuntimeError):
    pass


class ConstraintError(ValueError):
    pass


def element_matrices(coords):
    """
    Exact P1 integrals on triangles.

    Parameters
    ----------
        coords : array (n_tri, 3, 2) or (3, 2)
            vertex coordinates, counter-clockwise

    Returns
    -------
        mass, stiffness : arrays (n_tri, 3, 3)
        grads : array (n_tri, 3, 2), constant gradients of the hat functions
        area : array (n_tri,)
    """
    coords = np.asarray(coords, dtype=float)
    single = coords.ndim == 2
    if single:
        coords = coords[np.newaxis]

    x = coords[:, :, 0]
    y = coords[:, :, 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    if np.any(area <= 0.0):
        raise ValueError("degenerate or clockwise triangle (area {})".format(area.min()))

    grads = np.empty(coords.shape)
    grads[:, 0, 0] = y[:, 1] - y[:, 2]
    grads[:, 1, 0] = y[:, 2] - y[:, 0]
    grads[:, 2, 0] = y[:, 0] - y[:, 1]
    grads[:, 0, 1] = x[:, 2] - x[:, 1]
    grads[:, 1, 1] = x[:, 0] - x[:, 2]
    grads[:, 2, 1] = x[:, 1] - x[:, 0]
    grads /= (2.0 * area)[:, None, None]

    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
    mass = area[:, None, None] * local[None] / 12.0
    stiffness = area[:, None, None] * np.einsum('eik,ejk->eij', grads, grads)

    if single:
        return mass[0], stiffness[0], grads[0], area[0]
    return mass, stiffness, grads, area


def interval_matrices(xs):
    """
    P1 mass and stiffness on a 1D grid with nodes `xs` (ascending).
    """
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    lengths = np.diff(xs)
    if np.any(lengths <= 0.0):
        raise ValueError("interval grid must be strictly increasing")
    rows = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    me = lengths[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]])[None] / 6.0
    ke = np.array([[1.0, -1.0], [-1.0, 1.0]])[None] / lengths[:, None, None]
    return _scatter(rows, rows, me, (n, n)), _scatter(rows, rows, ke, (n, n))


def _scatter(row_dofs, col_dofs, local, shape):
    k_r = row_dofs.shape[1]
    k_c = col_dofs.shape[1]
    r = np.repeat(row_dofs, k_c, axis=1).ravel()
    c = np.tile(col_dofs, (1, k_r)).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


class DofMap(object):
    """
    (node, component) -> global dof, component-blocked: every component
    owns a contiguous range of `num_nodes` dofs, in the order given by
    `components`.
    """

    FLUID = ('ux', 'uy', 'p')
    SCALAR = ('s',)

    def __init__(self, num_nodes, components=SCALAR):
        self.num_nodes = num_nodes
        self.components = tuple(components)

    @property
    def num_dofs(self):
        return self.num_nodes * len(self.components)

    def offset(self, component):
        return self.components.index(component) * self.num_nodes

    def dof(self, node, component):
        if np.any(np.asarray(node) >= self.num_nodes) or np.any(np.asarray(node) < 0):
            raise IndexError("node out of range for {} nodes".format(self.num_nodes))
        return self.offset(component) + np.asarray(node)

    def dofs(self, component):
        return np.arange(self.num_nodes) + self.offset(component)

    def encode(self):
        return {'nodes': self.num_nodes, 'components': list(self.components), 'dofs': self.num_dofs}


def assemble(mesh, dofmap, rule):
    """
    Sum scattered element matrices into a CSR matrix.

    `rule(coords)` receives the (n_tri, 3, 2) vertex coordinates and
    returns an iterable of (row component, column component, local
    matrices (n_tri, 3, 3)). Elements are visited in mesh order, so the
    result is bitwise reproducible.
    """
    tri = mesh.triangles
    n = dofmap.num_dofs
    coords = mesh.nodes[tri]
    rows, cols, vals = [], [], []
    for row_comp, col_comp, local in rule(coords):
        r = dofmap.dof(tri, row_comp)
        c = dofmap.dof(tri, col_comp)
        rows.append(np.repeat(r, 3, axis=1).ravel())
        cols.append(np.tile(c, (1, 3)).ravel())
        vals.append(np.asarray(local, dtype=float).ravel())
    if not rows:
        return sp.csr_matrix((n, n))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    if rows.size and (rows.max() >= n or cols.max() >= n):
        raise IndexError("element dof outside [0, {})".format(n))
    mat = sp.coo_matrix((np.concatenate(vals), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def scalar_mass_rule(coords):
    mass, _, _, _ = element_matrices(coords)
    yield 's', 's', mass


def lump_mass(matrix):
    """
    Row-sum (lumped) diagonal of a mass matrix.
    """
    return sp.diags(np.asarray(matrix.sum(axis=1)).ravel()).tocsr()


def scalar_stiffness_rule(coords):
    _, stiffness, _, _ = element_matrices(coords)
    yield 's', 's', stiffness


def boundary_mass(mesh, edges, num_dofs, dof_of_node=None, weights=None):
    """
    1D P1 mass matrix over a set of boundary edges, scattered into a
    (num_dofs x num_dofs) matrix through `dof_of_node`.
    """
    if dof_of_node is None:
        dof_of_node = lambda n: n
    p = mesh.nodes[edges]
    lengths = np.hypot(p[:, 1, 0] - p[:, 0, 0], p[:, 1, 1] - p[:, 0, 1])
    if weights is not None:
        lengths = lengths * weights
    me = lengths[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]])[None] / 6.0
    dofs = dof_of_node(edges)
    return _scatter(dofs, dofs, me, (num_dofs, num_dofs))


def boundary_load(mesh, edges, num_dofs, dof_of_node=None):
    """
    Vector of int_edge phi_i ds (edge hat-function integrals).
    """
    if dof_of_node is None:
        dof_of_node = lambda n: n
    p = mesh.nodes[edges]
    lengths = np.hypot(p[:, 1, 0] - p[:, 0, 0], p[:, 1, 1] - p[:, 0, 1])
    out = np.zeros(num_dofs)
    np.add.at(out, dof_of_node(edges).ravel(), np.repeat(lengths / 2.0, 2))
    return out


class DirichletConditions(object):
    """
    Prescribed dof values. Adding a dof twice with different values is
    an error.
    """

    def __init__(self, num_dofs):
        self.num_dofs = num_dofs
        self._values = {}

    def add(self, dofs, values=0.0):
        dofs = np.atleast_1d(np.asarray(dofs, dtype=np.int64))
        values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
        for d, v in zip(dofs, values):
            d = int(d)
            if d < 0 or d >= self.num_dofs:
                raise IndexError("dof {} outside [0, {})".format(d, self.num_dofs))
            if d in self._values and self._values[d] != v:
                raise ConstraintError("dof {} prescribed both {} and {}".format(d, self._values[d], v))
            self._values[d] = float(v)
        return self

    @property
    def constrained(self):
        return np.array(sorted(self._values), dtype=np.int64)

    @property
    def values(self):
        return np.array([self._values[d] for d in sorted(self._values)])

    @property
    def free(self):
        mask = np.ones(self.num_dofs, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    def expand(self, x_free):
        x = np.zeros(self.num_dofs)
        x[self.free] = x_free
        x[self.constrained] = self.values
        return x


class ConstrainedSystem(object):
    """
    Result of symmetric elimination: the free-free block, the lifting
    block used to move prescribed values to the right-hand side, and the
    conditions themselves.
    """

    def __init__(self, matrix, bc):
        matrix = sp.csr_matrix(matrix)
        self.bc = bc
        free = bc.free
        cons = bc.constrained
        self.matrix = matrix[free][:, free].tocsc()
        self._coupling = matrix[free][:, cons]
        self._shift = self._coupling @ bc.values if cons.size else np.zeros(free.size)

    def reduce(self, b):
        return np.asarray(b, dtype=float)[self.bc.free] - self._shift

    def expand(self, x_free):
        return self.bc.expand(x_free)


def apply_dirichlet(matrix, rhs, bc):
    """
    Eliminate the dofs in `bc` symmetrically. Returns the constrained
    system and the reduced right-hand side.
    """
    system = ConstrainedSystem(matrix, bc)
    return system, system.reduce(rhs)


class LinearSolver(object):
    """
    Sparse LU factorization kept for repeated solves with one matrix.
    """

    def __init__(self, matrix, label='system'):
        matrix = sp.csc_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("matrix must be square, got {}".format(matrix.shape))
        self.matrix = matrix
        self.label = label
        try:
            self._lu = sp_la.splu(matrix) if matrix.shape[0] else None
        except RuntimeError as e:
            raise SingularMatrixError("{}: {}".format(label, e))
        logging.debug("Factorized {} ({} dofs, {} nonzeros)".format(label, matrix.shape[0], matrix.nnz))

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self._lu is None:
            return np.zeros(0)
        x = self._lu.solve(b)
        scale = np.linalg.norm(b)
        # two rounds of iterative refinement at most
        for _ in range(2):
            if not np.all(np.isfinite(x)):
                raise SingularMatrixError("{}: non-finite solution, matrix is numerically singular".format(self.label))
            r = b - self.matrix @ x
            if np.linalg.norm(r) <= RESIDUAL_TOL * scale:
                return x
            x = x + self._lu.solve(r)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("{}: non-finite solution, matrix is numerically singular".format(self.label))
        rel = np.linalg.norm(b - self.matrix @ x) / scale
        if rel > 1e-6:
            raise SingularMatrixError("{}: relative residual {:.3e}, matrix is rank deficient".format(self.label, rel))
        if rel > RESIDUAL_TOL:
            logging.warning("{}: relative residual {:.3e} above {:.0e}".format(self.label, rel, RESIDUAL_TOL))
        return x


def solve_linear(matrix, b):
    return LinearSolver(matrix).solve(b)
