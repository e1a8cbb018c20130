"""Hierarchy construction (Geo / Ref / Alg), V-cycle, AMG iteration, PCG.

The three coarsening methods share the Galerkин template: coarse operators
are always P^T A P, restriction is P^T, every non-coarsest level carries an
OSS-l1 smoother, and the coarsest level is solved directly.

* Geo: canonical edge-element interpolation between nested meshes, coarse
  gradient re-read from the coarse mesh;
* Ref: refinement-based interior/exterior splitting + sparse approximate
  ideal interpolation, coarse gradient R G I_C;
* Alg: fully algebraic splitting from (A, G) alone.

Coarse-level gradients are renormalized to +-1 entries (a pure rescaling
that preserves the incidence pattern and range) so every level looks like a
fresh (A, G) problem to the splitting and smoother machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import build_gradient
from .smoothers import build_l1_jacobi, build_patches, smooth
from .sparse import cholesky, csr, galerkin_product, solve
from .splitting import build_algebraic_splitting, build_refinement_splitting
from .transfer import geometric_interp, sparse_ideal_interp

__all__ = ["Level", "Hierarchy", "SolveReport", "build_hierarchy", "vcycle",
           "amg_solve", "pcg", "operator_complexity"]


@dataclass
class Level:
    A: sp.csr_matrix
    G: sp.csr_matrix
    P: sp.csr_matrix = None            # absent on the coarsest level
    patches: object = None
    l1: object = None
    coarse_factor: object = None       # coarsest level only
    splitting: object = None           # Ref/Alg diagnostic

    @property
    def n(self):
        return self.A.shape[0]


@dataclass
class Hierarchy:
    levels: list
    method: str
    stalled: bool = False
    notes: list = field(default_factory=list)

    @property
    def depth(self):
        return len(self.levels)


@dataclass
class SolveReport:
    iterations: int
    residual_history: np.ndarray
    converged: bool
    operator_complexity: float
    note: str = ""


def _normalized_gradient(Gc):
    """Coarse gradient rescaled to +-1 entries (sign pattern)."""
    G = csr(Gc)
    G.data = np.sign(G.data)
    return csr(G)


def build_hierarchy(system, method, meshes=None, rmaps=None, max_levels=20,
                    min_coarse=32, theta=0.25):
    """Build a multilevel hierarchy for one of the methods "geo"/"ref"/"alg".

    Geo and Ref need the nested mesh chain (coarsest first) with the
    refinement maps between consecutive meshes; Alg works from (A, G) alone.
    Coarsening stops at min_coarse DoFs, at max_levels, or when a step yields
    no pairs / no reduction (recorded as a stall).
    """
    if method in ("geo", "ref") and (meshes is None or rmaps is None):
        raise ValueError(f"method {method!r} requires the nested mesh chain")
    levels = []
    notes = []
    stalled = False
    A, G = system.A, system.G
    mesh_pos = len(meshes) - 1 if meshes is not None else 0
    edge_to_dof = system.free_edges
    finest_dof_edges = edge_to_dof_inverse(system.free_edges, system.n)
    splitting = None

    while True:
        n = A.shape[0]
        if n <= min_coarse or len(levels) + 1 >= max_levels:
            break
        if method in ("geo", "ref") and mesh_pos == 0:
            if n > min_coarse:
                stalled = True
                notes.append(f"mesh chain exhausted at {n} DoFs")
            break

        if method == "geo":
            fine_mesh, coarse_mesh = meshes[mesh_pos], meshes[mesh_pos - 1]
            rmap = rmaps[mesh_pos - 1]
            Gc_mesh, fe_c, _ = build_gradient(coarse_mesh, dirichlet=True)
            P = geometric_interp(coarse_mesh, fine_mesh, rmap,
                                 fine_edge_to_dof=edge_to_dof,
                                 coarse_edge_to_dof=fe_c)
            G_next = Gc_mesh
            next_edge_to_dof = fe_c
            splitting = None
        elif method == "ref":
            fine_mesh, coarse_mesh = meshes[mesh_pos], meshes[mesh_pos - 1]
            rmap = rmaps[mesh_pos - 1]
            splitting = build_refinement_splitting(coarse_mesh, fine_mesh, rmap,
                                                   edge_to_dof, n)
            if splitting.n_pairs == 0:
                stalled = True
                notes.append("refinement splitting produced no pairs")
                break
            ts = sparse_ideal_interp(A, splitting, mode="refinement", G=G)
            P = ts.P
            G_next = _normalized_gradient(ts.Gc)
            next_edge_to_dof = np.full(coarse_mesh.ne, -1, dtype=np.int64)
            next_edge_to_dof[splitting.pair_mesh_edges] = np.arange(splitting.n_pairs)
        elif method == "alg":
            splitting = build_algebraic_splitting(
                A, G, theta=theta,
                dof_edges=finest_dof_edges if not levels else None)
            if splitting.n_pairs == 0 or splitting.n_pairs >= n:
                stalled = splitting.n_pairs == 0
                if stalled:
                    notes.append("algebraic coarsening found no pairs")
                break
            ts = sparse_ideal_interp(A, splitting, mode="algebraic", G=G)
            P = ts.P
            G_next = _normalized_gradient(ts.Gc)
            next_edge_to_dof = None
        else:
            raise ValueError(f"unknown method {method!r}")

        if P.shape[1] == 0 or P.shape[1] >= n:
            stalled = True
            notes.append(f"no size reduction ({n} -> {P.shape[1]})")
            break

        levels.append(Level(A=A, G=G, P=P,
                            patches=build_patches(A, G),
                            l1=build_l1_jacobi(A),
                            splitting=splitting))
        A = galerkin_product(P, A)
        G = G_next
        edge_to_dof = next_edge_to_dof
        if method in ("geo", "ref"):
            mesh_pos -= 1

    levels.append(Level(A=A, G=G, coarse_factor=cholesky(A)))
    return Hierarchy(levels, method, stalled, notes)


def edge_to_dof_inverse(edge_to_dof, n):
    """DoF -> mesh edge map (inverse of a free-edge map)."""
    if edge_to_dof is None:
        return None
    inv = np.full(n, -1, dtype=np.int64)
    for e in np.flatnonzero(edge_to_dof >= 0):
        inv[edge_to_dof[e]] = e
    return inv


def _cycle(levels, ell, b):
    lvl = levels[ell]
    if lvl.P is None:
        return solve(lvl.coarse_factor, b)
    x = smooth(lvl.A, lvl.patches, lvl.l1, np.zeros_like(b), b, "forward")
    r = b - lvl.A @ x
    x = x + lvl.P @ _cycle(levels, ell + 1, lvl.P.T @ r)
    return smooth(lvl.A, lvl.patches, lvl.l1, x, b, "backward")


def vcycle(h, b, x=None):
    """One V(1,1) cycle; with an initial iterate it acts on the residual
    equation, which is the same linear operation."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != h.levels[0].n:
        raise ValueError("rhs does not match the finest level")
    if x is None:
        return _cycle(h.levels, 0, b)
    x = np.asarray(x, dtype=np.float64)
    return x + _cycle(h.levels, 0, b - h.levels[0].A @ x)


def operator_complexity(h):
    """Sum of operator nonzeros over the finest-level nonzeros."""
    return float(sum(lvl.A.nnz for lvl in h.levels)) / float(h.levels[0].A.nnz)


def amg_solve(h, b, x0=None, tol=1e-8, maxit=500):
    """Standalone V-cycle iteration to a relative-residual tolerance."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    A = h.levels[0].A
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, np.zeros(0), True,
                                             operator_complexity(h))
    history = []
    rel = np.linalg.norm(b - A @ x) / bnorm
    converged = rel <= tol
    note = ""
    growth = 0
    it = 0
    while not converged and it < maxit:
        x = vcycle(h, b, x)
        prev = rel
        rel = np.linalg.norm(b - A @ x) / bnorm
        history.append(rel)
        it += 1
        if rel <= tol:
            converged = True
            break
        growth = growth + 1 if rel > prev else 0
        if growth >= 5:
            note = "diverged: residual grew over 5 consecutive iterations"
            break
    return x, SolveReport(it, np.array(history), converged,
                          operator_complexity(h), note)


def pcg(A, b, precond, x0=None, tol=1e-8, maxit=500, oc=1.0):
    """Preconditioned conjugate gradients with relative-residual stopping.

    ``precond`` maps a residual to a preconditioned residual and must be SPD;
    a nonpositive curvature p^T A p signals a non-SPD input and raises.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, np.zeros(0), True, oc)
    r = b - A @ x
    history = []
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol:
        return x, SolveReport(0, np.zeros(0), True, oc)
    z = precond(r)
    p = z.copy()
    rz = r @ z
    converged = False
    it = 0
    while it < maxit:
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            raise RuntimeError(f"PCG breakdown: p^T A p = {pAp:.3e} (non-SPD operator)")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rel = np.linalg.norm(r) / bnorm
        history.append(rel)
        if rel <= tol:
            converged = True
            break
        z = precond(r)
        rz_new = r @ z
        if rz_new <= 0.0:
            raise RuntimeError("PCG breakdown: preconditioner is not SPD")
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(it, np.array(history), converged, oc)
