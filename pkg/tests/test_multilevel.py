"""Hierarchy construction, V-cycle, AMG iteration, PCG."""

import numpy as np
import pytest

from hcurl_amg.fem import assemble
from hcurl_amg.mesh import (
    assign_mu_stripes,
    refinement_chain,
    uniform_mu,
    uniform_tri_mesh,
)
from hcurl_amg.multilevel import (
    Hierarchy,
    Level,
    amg_solve,
    build_hierarchy,
    operator_complexity,
    pcg,
    vcycle,
)
from hcurl_amg.sparse import cholesky, csr, max_abs


def tri_setup(L, beta=0.01, stripes=False):
    meshes, rmaps = refinement_chain(uniform_tri_mesh(0), L)
    mesh = meshes[-1]
    mu = assign_mu_stripes(mesh, L) if stripes else uniform_mu(mesh)
    system = assemble(mesh, mu, beta=beta)
    return meshes, rmaps, system


def test_alg_hierarchy_depth_and_coarse_size():
    meshes, rmaps, system = tri_setup(2)
    h = build_hierarchy(system, "alg")
    assert h.depth >= 2
    assert h.levels[-1].n <= 32 or h.stalled


def test_single_level_direct_solve():
    meshes, rmaps, system = tri_setup(1)  # 8 free DoFs <= 32
    h = build_hierarchy(system, "alg")
    assert h.depth == 1
    rng = np.random.default_rng(0)
    x_star = rng.standard_normal(system.n)
    b = system.A @ x_star
    x = vcycle(h, b)
    assert np.linalg.norm(x - x_star) <= 1e-10 * np.linalg.norm(x_star)


@pytest.mark.parametrize("method", ["geo", "ref", "alg"])
def test_hierarchy_galerkin_consistency_and_spd(method):
    meshes, rmaps, system = tri_setup(3)
    h = build_hierarchy(system, method, meshes=meshes, rmaps=rmaps)
    assert h.depth >= 2
    for ell in range(h.depth - 1):
        lvl, nxt = h.levels[ell], h.levels[ell + 1]
        rebuilt = csr(0.5 * ((lvl.P.T @ (lvl.A @ lvl.P))
                             + (lvl.P.T @ (lvl.A @ lvl.P)).T))
        assert max_abs(csr(rebuilt - nxt.A)) == 0.0
        assert max_abs(csr(lvl.A - lvl.A.T)) == 0.0
    cholesky(h.levels[-1].A)  # coarsest SPD


def test_methods_require_meshes():
    meshes, rmaps, system = tri_setup(2)
    with pytest.raises(ValueError):
        build_hierarchy(system, "geo")
    with pytest.raises(ValueError):
        build_hierarchy(system, "nope", meshes=meshes, rmaps=rmaps)


def test_vcycle_zero_rhs():
    meshes, rmaps, system = tri_setup(2)
    h = build_hierarchy(system, "alg")
    x = vcycle(h, np.zeros(system.n))
    assert np.all(x == 0.0)


def test_vcycle_preconditioner_spd_sampling():
    meshes, rmaps, system = tri_setup(3, stripes=True)
    for method in ("geo", "ref", "alg"):
        h = build_hierarchy(system, method, meshes=meshes, rmaps=rmaps)
        rng = np.random.default_rng(1)
        for _ in range(4):
            r1, r2 = rng.standard_normal((2, system.n))
            b1, b2 = vcycle(h, r1), vcycle(h, r2)
            lhs, rhs = b1 @ r2, r1 @ b2
            assert abs(lhs - rhs) <= 1e-9 * max(abs(lhs), abs(rhs))
            assert r1 @ b1 > 0.0


def test_amg_solve_zero_iterations_at_solution():
    meshes, rmaps, system = tri_setup(2)
    h = build_hierarchy(system, "alg")
    rng = np.random.default_rng(2)
    x_star = rng.standard_normal(system.n)
    b = system.A @ x_star
    x, report = amg_solve(h, b, x0=x_star, tol=1e-8)
    assert report.iterations == 0 and report.converged
    assert len(report.residual_history) == 0


def test_amg_solve_converges_history_monotone():
    meshes, rmaps, system = tri_setup(3)
    h = build_hierarchy(system, "ref", meshes=meshes, rmaps=rmaps)
    n = system.n
    b = np.arange(1.0, n + 1.0)
    x, report = amg_solve(h, b, x0=np.zeros(n), tol=1e-8)
    assert report.converged
    assert report.iterations == len(report.residual_history)
    assert np.all(np.diff(report.residual_history) < 0)
    assert np.linalg.norm(system.A @ x - b) <= 1e-8 * np.linalg.norm(b) * 1.01


def test_amg_divergence_guard():
    # a wildly wrong 'preconditioner': hierarchy for a different matrix
    meshes, rmaps, system = tri_setup(2)
    h = build_hierarchy(system, "alg")
    bad = Hierarchy([Level(A=csr(-1.0 * system.A.toarray()),
                           G=h.levels[0].G,
                           coarse_factor=cholesky(csr(np.eye(system.n))))],
                    "alg")
    # patch the single level so the "solve" amplifies the error
    bad.levels[0].coarse_factor = cholesky(csr(np.eye(system.n) * 1e-3))
    x, report = amg_solve(bad, np.ones(system.n), tol=1e-14, maxit=50)
    assert not report.converged
    assert report.iterations < 50 and "diverged" in report.note


def test_pcg_identity_and_exact_preconditioner():
    A = csr(np.diag([1.0, 2.0, 3.0]))
    b = np.array([1.0, 1.0, 1.0])
    x, report = pcg(A, b, precond=lambda r: r, tol=1e-12)
    assert report.converged and report.iterations <= 3
    Ainv = np.diag([1.0, 0.5, 1.0 / 3.0])
    x, report = pcg(A, b, precond=lambda r: Ainv @ r, tol=1e-12)
    assert report.converged and report.iterations == 1


def test_pcg_breakdown_on_indefinite():
    A = csr(np.diag([1.0, -1.0]))
    with pytest.raises(RuntimeError):
        pcg(A, np.ones(2), precond=lambda r: r, tol=1e-10)


def test_pcg_beats_standalone_amg():
    meshes, rmaps, system = tri_setup(3, stripes=True)
    h = build_hierarchy(system, "ref", meshes=meshes, rmaps=rmaps)
    n = system.n
    b = np.arange(1.0, n + 1.0)
    rng = np.random.default_rng(3)
    x0 = rng.uniform(-1, 1, n)
    _, amg_rep = amg_solve(h, b, x0=x0, tol=1e-8)
    _, pcg_rep = pcg(system.A, b, precond=lambda r: vcycle(h, r), x0=x0, tol=1e-8)
    assert pcg_rep.converged and amg_rep.converged
    assert pcg_rep.iterations <= amg_rep.iterations


def test_operator_complexity_values():
    meshes, rmaps, system = tri_setup(1)
    h1 = build_hierarchy(system, "alg")
    assert operator_complexity(h1) == 1.0
    lvl = Level(A=system.A, G=system.G, P=csr(np.eye(system.n)))
    h2 = Hierarchy([lvl, Level(A=system.A.copy(), G=system.G)], "alg")
    assert operator_complexity(h2) == 2.0
    meshes, rmaps, system = tri_setup(3)
    h3 = build_hierarchy(system, "alg")
    assert operator_complexity(h3) >= 1.0


def a_norm(A, e):
    return float(np.sqrt(e @ (A @ e)))


@pytest.mark.parametrize("method", ["ref", "alg"])
def test_two_grid_propagator_contracts(method):
    meshes, rmaps, system = tri_setup(2)
    h = build_hierarchy(system, method, meshes=meshes, rmaps=rmaps, max_levels=2)
    A = system.A
    rng = np.random.default_rng(4)
    for _ in range(5):
        e = rng.standard_normal(system.n)
        # error propagation of one V-cycle on the homogeneous problem
        e_new = e - vcycle(h, A @ e)
        assert a_norm(A, e_new) < a_norm(A, e)


def test_solve_determinism():
    meshes, rmaps, system = tri_setup(2)
    h = build_hierarchy(system, "alg")
    b = np.arange(1.0, system.n + 1.0)
    x0 = np.random.default_rng(5).uniform(-1, 1, system.n)
    x1, r1 = amg_solve(h, b, x0=x0.copy(), tol=1e-8)
    x2, r2 = amg_solve(h, b, x0=x0.copy(), tol=1e-8)
    assert np.array_equal(x1, x2)
    assert np.array_equal(r1.residual_history, r2.residual_history)
