import numpy as np
import pytest

from jaggedfsi.mesh import (GAMMA1, GAMMA2, GAMMA4, SIGMA, MeshError, StructuredMesh,
                            build_mesh, interface_coordinates, interface_submesh, mesh_size)


@pytest.fixture(scope="module")
def coarse():
    return build_mesh(0)


def test_rate_zero_counts(coarse):
    assert coarse.num_nodes == 366
    assert coarse.num_triangles == 600
    assert len(coarse.interface_nodes) == 61


def test_rate_one_counts():
    mesh = build_mesh(1)
    assert mesh.num_nodes == 121 * 11
    assert mesh.num_triangles == 2400
    assert len(mesh.interface_nodes) == 121


def test_areas_positive_and_sum(coarse):
    areas = coarse.signed_areas()
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(3.0, rel=1e-12)


def test_interface_is_top_row_in_ascending_x(coarse):
    xy = coarse.nodes[coarse.interface_nodes]
    assert np.all(xy[:, 1] == 0.5)
    assert np.all(np.diff(xy[:, 0]) > 0)
    assert xy[0, 0] == 0.0 and xy[-1, 0] == 6.0


def test_boundary_edge_lengths(coarse):
    for tag, total in ((GAMMA1, 6.0), (SIGMA, 6.0), (GAMMA2, 0.5), (GAMMA4, 0.5)):
        edges = coarse.boundary_edges(tag)
        p = coarse.nodes[edges]
        assert np.hypot(*(p[:, 1] - p[:, 0]).T).sum() == pytest.approx(total)


def test_corner_ownership(coarse):
    gamma1 = set(coarse.boundary_nodes(GAMMA1).tolist())
    gamma2 = set(coarse.boundary_nodes(GAMMA2).tolist())
    sigma = set(coarse.boundary_nodes(SIGMA).tolist())
    assert coarse.node(0, 0) in gamma1 and coarse.node(0, 0) not in gamma2
    assert coarse.node(0, coarse.ny) in sigma and coarse.node(0, coarse.ny) not in gamma2
    assert len(gamma2) == coarse.ny - 1


def test_nested_interface_coordinates():
    coarse = interface_coordinates(build_mesh(0))
    fine = interface_coordinates(build_mesh(2))
    assert np.array_equal(fine[::4], coarse)


def test_interface_submesh_pairs(coarse):
    pairs = interface_submesh(coarse)
    assert pairs[0] == (int(coarse.interface_nodes[0]), 0.0)
    assert len(pairs) == 61


def test_immutable(coarse):
    with pytest.raises(ValueError):
        coarse.nodes[0, 0] = 1.0


def test_mesh_size():
    assert mesh_size(3) == pytest.approx(0.0125)
    with pytest.raises(MeshError):
        mesh_size(-1)


def test_non_divisible_domain():
    with pytest.raises(MeshError):
        StructuredMesh(6.0, 0.5, 0.07)


def test_node_cap():
    with pytest.raises(MeshError):
        build_mesh(3, max_nodes=1000)


def test_dump(tmp_path, coarse):
    path = tmp_path / "mesh.txt"
    coarse.dump(str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "366"
    assert lines[367] == "600"
    assert len(lines) == 1 + 366 + 1 + 600


@pytest.mark.parametrize("rate", [0, 1])
def test_every_node_survives_refinement(rate):
    coarse = build_mesh(rate)
    fine = build_mesh(rate + 1)
    coarse_ids = [coarse.node(i, j) for j in range(coarse.ny + 1) for i in range(coarse.nx + 1)]
    fine_ids = [fine.node(2 * i, 2 * j) for j in range(coarse.ny + 1) for i in range(coarse.nx + 1)]
    assert np.array_equal(fine.nodes[fine_ids], coarse.nodes[coarse_ids])


def test_rate_zero_nodes_are_rate_two_nodes():
    coarse = set(map(tuple, build_mesh(0).nodes.tolist()))
    fine = set(map(tuple, build_mesh(2).nodes.tolist()))
    assert coarse <= fine


def test_rebuild_is_identical():
    a = build_mesh(1)
    b = build_mesh(1)
    assert np.array_equal(a.nodes, b.nodes)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.interface_nodes, b.interface_nodes)
    for tag in (GAMMA1, GAMMA2, SIGMA, GAMMA4):
        assert np.array_equal(a.boundary_edges(tag), b.boundary_edges(tag))
    assert a.encode() == b.encode()
