"""OSS-l1 smoother contracts: fixed point, adjointness, energy decrease."""

import numpy as np
import pytest

from hcurl_amg.fem import assemble
from hcurl_amg.mesh import uniform_mu, uniform_tri_mesh
from hcurl_amg.smoothers import (
    build_l1_jacobi,
    build_patches,
    l1_jacobi_matrix,
    smooth,
)
from hcurl_amg.sparse import csr


def tri_system(L=2, beta=0.01):
    mesh = uniform_tri_mesh(L)
    return assemble(mesh, uniform_mu(mesh), beta=beta)


def test_l1_matrix_values():
    A = csr([[2.0, -1.0], [-1.0, 2.0]])
    M = l1_jacobi_matrix(A)
    assert np.allclose(M.toarray(), np.diag([3.0, 3.0]))
    D = csr(np.diag([4.0, 2.5]))
    assert np.allclose(l1_jacobi_matrix(D).toarray(), D.toarray())
    s = tri_system()
    l1 = build_l1_jacobi(s.A)
    assert np.all(l1.d >= s.A.diagonal() - 1e-15)


def test_patches_cover_and_match_incidence():
    s = tri_system(1)
    ps = build_patches(s.A, s.G)
    covered = np.zeros(s.n, dtype=bool)
    for p in ps.patches:
        covered[p] = True
    assert covered.all()
    # interior-vertex patch size equals the number of incident free edges
    Gc = s.G.tocsc()
    for v in range(Gc.shape[1]):
        rows = Gc.indices[Gc.indptr[v]:Gc.indptr[v + 1]]
        assert len(ps.patches[v]) == len(np.unique(rows))


def test_single_column_gradient_single_patch():
    A = csr(np.diag([2.0, 3.0, 4.0]))
    G = csr(np.array([[1.0], [-1.0], [0.0]]))
    ps = build_patches(A, G)
    assert ps.patches[0].tolist() == [0, 1]
    # dof 2 is uncovered and gets a singleton
    assert any(p.tolist() == [2] for p in ps.patches)


def test_fixed_point_invariance():
    s = tri_system()
    rng = np.random.default_rng(0)
    x_star = rng.standard_normal(s.n)
    b = s.A @ x_star
    ps = build_patches(s.A, s.G)
    l1 = build_l1_jacobi(s.A)
    for direction in ("forward", "backward", "symmetric"):
        x = smooth(s.A, ps, l1, x_star, b, direction)
        assert np.max(np.abs(x - x_star)) <= 1e-12 * max(1.0, np.abs(x_star).max())


def test_single_patch_covering_everything_solves():
    A = csr(np.array([[4.0, 1.0], [1.0, 3.0]]))
    G = csr(np.array([[1.0, -1.0], [-1.0, 1.0]]))  # both dofs in each patch
    ps = build_patches(A, G)
    l1 = build_l1_jacobi(A)
    b = np.array([1.0, 2.0])
    x = smooth(A, ps, l1, np.zeros(2), b, "forward")
    assert np.linalg.norm(A @ x - b) <= 1e-13


def a_norm(A, e):
    return float(np.sqrt(e @ (A @ e)))


def test_energy_monotonicity():
    s = tri_system(2)
    ps = build_patches(s.A, s.G)
    l1 = build_l1_jacobi(s.A)
    rng = np.random.default_rng(1)
    x_star = rng.standard_normal(s.n)
    b = s.A @ x_star
    for direction in ("forward", "backward", "symmetric"):
        for trial in range(5):
            x0 = rng.standard_normal(s.n)
            before = a_norm(s.A, x0 - x_star)
            x1 = smooth(s.A, ps, l1, x0, b, direction)
            after = a_norm(s.A, x1 - x_star)
            assert after < before, f"{direction}: {after} !< {before}"


def test_symmetric_error_propagator_is_a_selfadjoint():
    s = tri_system(1)
    ps = build_patches(s.A, s.G)
    l1 = build_l1_jacobi(s.A)

    def apply_E(e):
        # error propagation of one symmetric application on the homogeneous system
        x = smooth(s.A, ps, l1, -e, np.zeros(s.n), "symmetric")
        return -x

    rng = np.random.default_rng(2)
    for _ in range(5):
        e1 = rng.standard_normal(s.n)
        e2 = rng.standard_normal(s.n)
        lhs = apply_E(e1) @ (s.A @ e2)
        rhs = e1 @ (s.A @ apply_E(e2))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)


def test_forward_backward_are_mutually_adjoint():
    s = tri_system(1)
    ps = build_patches(s.A, s.G)
    l1 = build_l1_jacobi(s.A)

    def apply_dir(e, direction):
        return -smooth(s.A, ps, l1, -e, np.zeros(s.n), direction)

    rng = np.random.default_rng(3)
    for _ in range(5):
        e1, e2 = rng.standard_normal((2, s.n))
        lhs = apply_dir(e1, "forward") @ (s.A @ e2)
        rhs = e1 @ (s.A @ apply_dir(e2, "backward"))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)


def test_smooth_shape_check():
    s = tri_system(1)
    ps = build_patches(s.A, s.G)
    l1 = build_l1_jacobi(s.A)
    with pytest.raises(ValueError):
        smooth(s.A, ps, l1, np.zeros(3), np.zeros(s.n))
    with pytest.raises(ValueError):
        smooth(s.A, ps, l1, np.zeros(s.n), np.zeros(s.n), "sideways")


def test_threaded_patch_build_matches_serial(monkeypatch):
    s = tri_system(2)
    serial = build_patches(s.A, s.G)
    monkeypatch.setenv("HCURL_AMG_THREADS", "4")
    threaded = build_patches(s.A, s.G)
    assert len(serial.patches) == len(threaded.patches)
    for a, b in zip(serial.factors, threaded.factors):
        assert np.array_equal(a, b)
