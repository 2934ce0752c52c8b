import logging
import numpy as np

GAMMA1 = 'Gamma1'
GAMMA2 = 'Gamma2'
SIGMA = 'Sigma'
GAMMA4 = 'Gamma4'

BOUNDARY_TAGS = [GAMMA1, GAMMA2, SIGMA, GAMMA4]

LENGTH = 6.0
RADIUS = 0.5
H_BASE = 0.1
MAX_NODES = 2000000


class MeshError(ValueError):
    pass


class StructuredMesh(object):
    """
    Triangulation of the rectangle [0, length] x [0, radius] built from
    square cells of side h, each cut along the lower-left to upper-right
    diagonal. Nodes are numbered row by row (x fastest) so the top row,
    the interface Sigma, is a contiguous block ordered by ascending x.

    Immutable after construction.
    """

    def __init__(self, length, radius, h):
        nx = int(round(length / h))
        ny = int(round(radius / h))
        if nx < 1 or ny < 1 or abs(nx * h - length) > 1e-9 * length \
                or abs(ny * h - radius) > 1e-9 * radius:
            raise MeshError("domain {} x {} is not divisible by h = {}".format(length, radius, h))

        self.length = length
        self.radius = radius
        self.h = h
        self.nx = nx
        self.ny = ny

        # coordinates from integer indices keep nested grids bitwise nested
        ix, iy = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
        self.nodes = np.column_stack([ix.ravel() * (length / nx), iy.ravel() * (radius / ny)])
        self.nodes[:, 0][ix.ravel() == nx] = length
        self.nodes[:, 1][iy.ravel() == ny] = radius
        self.nodes.setflags(write=False)

        ci, cj = np.meshgrid(np.arange(nx), np.arange(ny))
        n0 = (cj * (nx + 1) + ci).ravel()
        n1 = n0 + 1
        n2 = n0 + nx + 2
        n3 = n0 + nx + 1
        tri = np.empty((2 * n0.size, 3), dtype=np.int64)
        tri[0::2] = np.column_stack([n0, n1, n2])
        tri[1::2] = np.column_stack([n0, n2, n3])
        self.triangles = tri
        self.triangles.setflags(write=False)

        self.boundary_tags = self._tag_boundary_edges()
        self.interface_nodes = np.arange(ny * (nx + 1), (ny + 1) * (nx + 1))
        self.interface_nodes.setflags(write=False)

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def node(self, i, j):
        return j * (self.nx + 1) + i

    def _tag_boundary_edges(self):
        nx, ny = self.nx, self.ny
        tags = {}
        for i in range(nx):
            tags[(self.node(i, 0), self.node(i + 1, 0))] = GAMMA1
            tags[(self.node(i, ny), self.node(i + 1, ny))] = SIGMA
        for j in range(ny):
            tags[(self.node(0, j), self.node(0, j + 1))] = GAMMA2
            tags[(self.node(nx, j), self.node(nx, j + 1))] = GAMMA4
        return tags

    def boundary_edges(self, tag):
        """
        Edges carrying `tag` as an (n, 2) array, in traversal order.
        """
        edges = [e for e, t in self.boundary_tags.items() if t == tag]
        return np.array(edges, dtype=np.int64).reshape(-1, 2)

    def boundary_nodes(self, tag):
        """
        Nodes of a boundary segment for condition application. Corners go
        to the Dirichlet-dominant segment: Sigma keeps its end points,
        Gamma1 keeps its corners, Gamma2/Gamma4 only own their interior.
        """
        nx, ny = self.nx, self.ny
        if tag == SIGMA:
            return self.interface_nodes
        if tag == GAMMA1:
            return np.arange(0, nx + 1)
        if tag == GAMMA2:
            return np.array([self.node(0, j) for j in range(1, ny)], dtype=np.int64)
        if tag == GAMMA4:
            return np.array([self.node(nx, j) for j in range(1, ny)], dtype=np.int64)
        raise MeshError("unknown boundary tag {}".format(tag))

    def signed_areas(self):
        p = self.nodes[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def dump(self, path):
        """
        Plain-text listing: node count, one "x y" per node, triangle
        count, one "i j k" per triangle (zero based).
        """
        with open(path, 'w') as f:
            f.write("{}\n".format(self.num_nodes))
            for x, y in self.nodes:
                f.write("{!r} {!r}\n".format(float(x), float(y)))
            f.write("{}\n".format(self.num_triangles))
            for i, j, k in self.triangles:
                f.write("{} {} {}\n".format(i, j, k))

    def encode(self):
        return {
            'length': self.length,
            'radius': self.radius,
            'h': self.h,
            'nodes': self.num_nodes,
            'triangles': self.num_triangles,
            'interface_nodes': len(self.interface_nodes)
        }


def mesh_size(rate, h_base=H_BASE):
    if rate < 0:
        raise MeshError("refinement rate must be non-negative, got {}".format(rate))
    return h_base / 2 ** rate


def build_mesh(rate, length=LENGTH, radius=RADIUS, h_base=H_BASE, max_nodes=MAX_NODES):
    h = mesh_size(rate, h_base)
    count = (int(round(length / h)) + 1) * (int(round(radius / h)) + 1)
    if count > max_nodes:
        raise MeshError("rate {} needs {} nodes, above the cap of {}".format(rate, count, max_nodes))
    mesh = StructuredMesh(length, radius, h)
    logging.debug("Built mesh at rate {}: {}".format(rate, mesh.encode()))
    return mesh


def interface_submesh(mesh):
    """
    Sigma as [(node index, x), ...] sorted by x.
    """
    xs = mesh.nodes[mesh.interface_nodes, 0]
    return [(int(n), float(x)) for n, x in zip(mesh.interface_nodes, xs)]


def interface_coordinates(mesh):
    return np.array([x for _, x in interface_submesh(mesh)])
