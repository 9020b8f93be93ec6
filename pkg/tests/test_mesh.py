"""Mesh construction, geometry, diamond cells, node interpolation weights."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trifvm.errors import DegenerateDiamond, TopologyError
from trifvm.mesh import (build_diamonds, build_mesh, load_mesh, node_weights,
                         save_mesh, structured_triangulation, validate_mesh)
from trifvm.partition import single_subdomain
from trifvm.transport import (Field, apply_boundary_conditions, classify_faces,
                              dirichlet_node_data, dirichlet_values,
                              face_gradients, node_values)

from conftest import dirichlet_bc


def test_structured_counts():
    n = 5
    m = structured_triangulation(n)
    assert m.triangles.shape == (2 * n * n, 3)
    assert m.points.shape == ((n + 1) * (n + 1), 2)
    # interior edges shared by 2 cells + 4n boundary edges
    assert m.face_cells.shape[0] == 3 * n * n + 2 * n


def test_euler_formula():
    for n in (2, 3, 7):
        m = structured_triangulation(n)
        # V - E + F = 1 for a planar triangulation of a disk-like region
        assert m.points.shape[0] - m.face_cells.shape[0] + m.triangles.shape[0] == 1


@settings(max_examples=10, deadline=None)
@given(n=st.integers(min_value=1, max_value=8))
def test_geometry_invariants(n):
    m = structured_triangulation(n)
    validate_mesh(m)
    assert np.isclose(m.areas.sum(), 1.0, rtol=0, atol=1e-13)
    # unit normals, positive lengths and areas
    assert np.allclose(np.hypot(m.face_normals[:, 0], m.face_normals[:, 1]),
                       1.0, atol=1e-13)
    assert (m.face_lengths > 0).all() and (m.areas > 0).all()


def test_normals_point_left_to_right():
    m = structured_triangulation(3)
    for f in range(m.face_cells.shape[0]):
        left, right = m.face_cells[f]
        other = m.centroids[right] if right >= 0 else m.face_midpoints[f]
        d = other - m.centroids[left]
        assert d @ m.face_normals[f] > 0


def test_divergence_of_constant_is_zero():
    # sum of signed face normals times lengths vanishes per cell
    m = structured_triangulation(4)
    flux = m.face_normals * m.face_lengths[:, None]
    per_cell = (flux[m.cell_faces] *
                m.cell_face_signs[:, :, None]).sum(axis=1)
    assert np.abs(per_cell).max() < 1e-13


def test_boundary_labels():
    m = structured_triangulation(4)
    labels = set(m.face_labels)
    assert {"left", "right", "top", "bottom"} <= labels
    boundary = m.face_cells[:, 1] < 0
    for f in np.flatnonzero(boundary):
        assert m.face_labels[f] != "interior"
        x, y = m.face_midpoints[f]
        side = m.face_labels[f]
        expect = {"left": x == 0.0, "right": x == 1.0,
                  "bottom": y == 0.0, "top": y == 1.0}[side]
        assert expect


def test_save_load_round_trip(tmp_path):
    m = structured_triangulation(3)
    p = tmp_path / "m.txt"
    save_mesh(m, p)
    back = load_mesh(p)
    assert np.array_equal(back.points, m.points)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.face_cells, m.face_cells)
    assert back.face_labels == m.face_labels


def test_build_mesh_rejects_bad_topology():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(TopologyError):
        build_mesh(pts, np.array([[0, 1, 5]]))  # node out of range
    with pytest.raises(TopologyError):
        build_mesh(pts, np.array([[0, 1, 1]]))  # repeated node


def test_diamond_linear_exactness():
    # the two-cell-plus-two-node gradient is exact for affine fields
    m = structured_triangulation(6)
    sub = single_subdomain(m)
    dia = build_diamonds(m)
    w = node_weights(m)
    a, b, c = 0.7, -1.3, 2.1
    lin = lambda x, y: a + b * x + c * y
    u = Field(lin(m.centroids[:, 0], m.centroids[:, 1]))
    bc = dirichlet_bc(lin)
    kind = classify_faces(sub, bc)
    bvals = apply_boundary_conditions(
        sub, u, kind, dirichlet_values(sub, bc, kind),
        dirichlet_node_data(sub, bc, kind))
    grad = face_gradients(sub, u, node_values(sub, u, w), dia, bvals)
    assert np.abs(grad[:, 0] - b).max() < 1e-12
    assert np.abs(grad[:, 1] - c).max() < 1e-12


def test_node_weights_reproduce_linear():
    # exact wherever the least-squares stencil holds; the corner stencils
    # degenerate and are flagged for the boundary treatment to pin instead
    m = structured_triangulation(5)
    sub = single_subdomain(m)
    w = node_weights(m)
    lin = lambda x, y: 2.0 - 0.5 * x + 3.0 * y
    u = Field(lin(m.centroids[:, 0], m.centroids[:, 1]))
    vals = node_values(sub, u, w)
    exact = lin(m.points[:, 0], m.points[:, 1])
    good = ~w.fallback
    assert np.abs(vals[good] - exact[good]).max() < 1e-12
    corners = {0, 5, 30, 35}
    assert set(np.flatnonzero(w.fallback)) <= corners


def test_node_weights_cell_order_changes_stencil_order_not_values():
    m = structured_triangulation(4)
    sub = single_subdomain(m)
    w_nat = node_weights(m)
    w_ord = node_weights(m, cell_order=sub.cells_l2g)
    u = Field(np.linspace(0.0, 1.0, m.triangles.shape[0]))
    a = node_values(sub, u, w_nat)
    b = node_values(sub, u, w_ord)
    assert np.allclose(a, b, rtol=0, atol=1e-14)


def test_degenerate_diamond_raises():
    # zero-area triangle collapses the diamond around its faces
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.0], [0.5, 1.0]])
    with pytest.raises((DegenerateDiamond, TopologyError)):
        mesh = build_mesh(pts, np.array([[0, 1, 2], [0, 1, 3]]))
        build_diamonds(mesh)
