"""Mesh construction, refinement, file IO, Delaunay, coefficient fields."""

import numpy as np
import pytest

from hcurl_amg.mesh import (
    assign_mu_regions,
    assign_mu_stripes,
    checkerboard_boxes,
    delaunay_mesh,
    load_mesh,
    mesh_from_cells,
    refine,
    save_mesh,
    uniform_mu,
    uniform_quad_mesh,
    uniform_tri_mesh,
)


def euler_characteristic(mesh):
    return mesh.nv - mesh.ne + mesh.nc


def check_mesh_invariants(mesh):
    # global orientation: tail < head on every edge
    assert np.all(mesh.edges[:, 0] < mesh.edges[:, 1])
    # interior edges have 2 incident cells, boundary edges 1
    counts = np.zeros(mesh.ne, dtype=int)
    for c in range(mesh.nc):
        for e in mesh.cell_edges[c]:
            counts[e] += 1
    assert np.array_equal(counts == 1, mesh.boundary_edge)
    assert np.array_equal(counts[~mesh.boundary_edge], np.full((~mesh.boundary_edge).sum(), 2))
    # boundary vertices = endpoints of boundary edges
    bv = np.zeros(mesh.nv, dtype=bool)
    bv[mesh.edges[mesh.boundary_edge].ravel()] = True
    assert np.array_equal(bv, mesh.boundary_vertex)
    # CCW cells
    for cell in mesh.cells:
        pts = mesh.vertices[cell]
        x, y = pts[:, 0], pts[:, 1]
        assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) > 0


def test_uniform_tri_counts():
    m0 = uniform_tri_mesh(0)
    assert (m0.nv, m0.nc, m0.ne) == (4, 2, 5)
    m1 = uniform_tri_mesh(1)
    assert (m1.nv, m1.nc, m1.ne) == (9, 8, 16)
    for L in range(4):
        m = uniform_tri_mesh(L)
        assert euler_characteristic(m) == 1
        check_mesh_invariants(m)


def test_uniform_quad_counts():
    m1 = uniform_quad_mesh(1)
    assert (m1.nv, m1.nc, m1.ne) == (9, 4, 12)
    m0 = uniform_quad_mesh(0)
    assert (m0.nc, m0.ne) == (1, 4)
    for L in range(3):
        m = uniform_quad_mesh(L)
        assert m.nv == (2 ** L + 1) ** 2
        assert m.nc == 4 ** L
        assert m.ne == 2 * 2 ** L * (2 ** L + 1)
        assert euler_characteristic(m) == 1
        check_mesh_invariants(m)


def meshes_isomorphic(a, b):
    """Coordinate-keyed isomorphism check (same geometry, any numbering)."""
    def key(p):
        return (round(p[0], 12), round(p[1], 12))

    va = {key(p): i for i, p in enumerate(a.vertices)}
    vb = {key(p): i for i, p in enumerate(b.vertices)}
    if set(va) != set(vb):
        return False
    to_b = {va[k]: vb[k] for k in va}
    ea = {frozenset(e) for e in a.edges}
    eb = {frozenset((to_b[e[0]], to_b[e[1]])) for e in a.edges}
    if {frozenset(e) for e in b.edges} != eb or len(ea) != len(eb):
        return False
    ca = {frozenset(to_b[v] for v in cell) for cell in a.cells}
    cb = {frozenset(cell) for cell in b.cells}
    return ca == cb


def test_refine_tri_matches_uniform():
    fine, rmap = refine(uniform_tri_mesh(0))
    assert meshes_isomorphic(fine, uniform_tri_mesh(1))
    fine2, _ = refine(uniform_tri_mesh(1))
    assert meshes_isomorphic(fine2, uniform_tri_mesh(2))


def test_refine_quad_matches_uniform():
    fine, _ = refine(uniform_quad_mesh(0))
    assert meshes_isomorphic(fine, uniform_quad_mesh(1))
    fine2, _ = refine(uniform_quad_mesh(1))
    assert meshes_isomorphic(fine2, uniform_quad_mesh(2))


@pytest.mark.parametrize("maker", [uniform_tri_mesh, uniform_quad_mesh])
def test_refine_children_structure(maker):
    coarse = maker(1)
    fine, rmap = refine(coarse)
    check_mesh_invariants(fine)
    assert fine.nc == 4 * coarse.nc
    for e in range(coarse.ne):
        c1, c2 = rmap.coarse_edge_children[e]
        shared = set(fine.edges[c1]) & set(fine.edges[c2])
        assert len(shared) == 1  # the midpoint
        endpoints = (set(fine.edges[c1]) | set(fine.edges[c2])) - shared
        assert endpoints == set(coarse.edges[e])
        # children ordered tail-to-head
        assert coarse.edges[e, 0] in fine.edges[c1]
        assert coarse.edges[e, 1] in fine.edges[c2]
        # the midpoint is flagged as such in the vertex parent map
        (m,) = shared
        assert rmap.vertex_kind[m] == 1 and rmap.vertex_parent[m] == e


def test_load_save_roundtrip():
    text = "4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n"
    mesh = load_mesh(text)
    assert mesh.ne == 5 and mesh.boundary_edge.sum() == 4
    again = load_mesh(save_mesh(mesh))
    assert np.array_equal(again.cells, mesh.cells)
    assert np.allclose(again.vertices, mesh.vertices)


def test_load_fixes_cw_cells_with_warning():
    text = "4 2\n0 0\n1 0\n1 1\n0 1\n2 1 0\n0 2 3\n"
    with pytest.warns(UserWarning):
        mesh = load_mesh(text)
    check_mesh_invariants(mesh)


def test_load_rejects_malformed():
    with pytest.raises(ValueError):
        load_mesh("3 1\n0 0\n1 0\n")  # missing data
    with pytest.raises(ValueError):
        load_mesh("4 1\n0 0\n1 0\n1 1\n0 1\n0 1\n")  # 2-vertex cell
    with pytest.raises(ValueError):
        load_mesh("4 1\n0 0\n1 0\n1 1\n0 1\n0 1 2\n")  # vertex 3 dangling


def test_load_delaunay_scale_mesh():
    mesh = delaunay_mesh(60, seed=3)
    assert mesh.nc >= 80  # roughly Fig 4a scale
    text = save_mesh(mesh)
    again = load_mesh(text)
    assert euler_characteristic(again) == 1
    check_mesh_invariants(again)


def test_delaunay_corners_only():
    mesh = delaunay_mesh(4, seed=0)
    assert mesh.nc == 2 and mesh.nv == 4
    check_mesh_invariants(mesh)


def brute_force_circumcircle_check(mesh):
    for cell in mesh.cells:
        p0, p1, p2 = mesh.vertices[cell]
        ax, ay = p0
        d = 2.0 * (ax * (p1[1] - p2[1]) + p1[0] * (p2[1] - ay) + p2[0] * (ay - p1[1]))
        ux = ((ax**2 + ay**2) * (p1[1] - p2[1]) + (p1[0]**2 + p1[1]**2) * (p2[1] - ay)
              + (p2[0]**2 + p2[1]**2) * (ay - p1[1])) / d
        uy = ((ax**2 + ay**2) * (p2[0] - p1[0]) + (p1[0]**2 + p1[1]**2) * (ax - p2[0])
              + (p2[0]**2 + p2[1]**2) * (p1[0] - ax)) / d
        radius = np.hypot(ax - ux, ay - uy)
        dists = np.hypot(mesh.vertices[:, 0] - ux, mesh.vertices[:, 1] - uy)
        inside = dists < radius * (1 - 1e-10)
        inside[cell] = False
        assert not inside.any(), "circumcircle contains a mesh point"


def test_delaunay_empty_circumcircle_and_determinism():
    m1 = delaunay_mesh(30, seed=7)
    brute_force_circumcircle_check(m1)
    check_mesh_invariants(m1)
    m2 = delaunay_mesh(30, seed=7)
    assert np.array_equal(m1.cells, m2.cells)
    assert np.array_equal(m1.vertices, m2.vertices)


def test_stripes():
    m = uniform_tri_mesh(1)
    mu = assign_mu_stripes(m, 1)
    left = m.cell_centroids()[:, 0] < 0.5
    assert np.all(mu.mu[left] == 10.0) and np.all(mu.mu[~left] == 0.1)
    m0 = uniform_tri_mesh(0)
    assert np.all(assign_mu_stripes(m0, 0).mu == 10.0)
    const = assign_mu_stripes(m, 1, hi=2.5, lo=2.5)
    assert np.all(const.mu == 2.5)


def test_regions():
    m = uniform_tri_mesh(2)
    assert np.all(assign_mu_regions(m, [], default=3.0).mu == 3.0)
    whole = assign_mu_regions(m, [((0, 0, 1, 1), 7.0)], default=1.0)
    assert np.all(whole.mu == 7.0)
    # 4x4 checkerboard equals the direct per-cell predicate
    boxes = checkerboard_boxes(4)
    mu = assign_mu_regions(m, boxes, default=1.0)
    for c, (x, y) in enumerate(m.cell_centroids()):
        i, j = min(int(x * 4), 3), min(int(y * 4), 3)
        assert mu.mu[c] == (0.1 if (i + j) % 2 else 10.0)


def test_region_inheritance_under_refinement():
    coarse = uniform_tri_mesh(2)
    boxes = checkerboard_boxes(4)
    mu_c = assign_mu_regions(coarse, boxes)
    fine, rmap = refine(coarse)
    mu_f = assign_mu_regions(fine, boxes)
    for c in range(coarse.nc):
        for ch in rmap.cell_children[c]:
            assert mu_f.mu[ch] == mu_c.mu[c]


def test_coefficient_positivity():
    with pytest.raises(ValueError):
        uniform_mu(uniform_tri_mesh(0), value=-1.0)
