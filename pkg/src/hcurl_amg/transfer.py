"""Interpolation operators and the coarse gradient.

The workhorse is the sparse approximate ideal interpolation

    P_app = (I - S_I (S_I^T A S_I)^{-1} S_I^T A) R^T,

an interior A-harmonic extension of the pair-averaged coarse variables.  The
interior block decomposes by connected components of its graph, so the
extension is a sequence of independent local solves.  A dense reference ideal
interpolation (test oracle) and the geometric edge-element interpolation
complete the set; the coarse gradient keeps the nonzero columns of R G.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .sparse import cholesky, csr, dense_cholesky, solve
from .splitting import realize_RS

__all__ = [
    "TransferSet",
    "sparse_ideal_interp",
    "ideal_interp_dense",
    "geometric_interp",
    "coarse_gradient",
    "interior_components",
]

_DENSE_COMPONENT_CUTOFF = 4096


@dataclass
class TransferSet:
    """Interpolation P (n x n_c), its left inverse R, the coarse gradient Gc,
    and the nodal columns kept from R G."""

    P: sp.csr_matrix
    R: sp.csr_matrix
    Gc: sp.csr_matrix
    coarse_node_cols: np.ndarray


def interior_components(A_II):
    """Connected components of the interior-block graph, as index lists."""
    ncomp, labels = connected_components(A_II, directed=False)
    return [np.flatnonzero(labels == c) for c in range(ncomp)]


def coarse_gradient(R, G, mode="refinement", coarse_nodes=None):
    """Coarse gradient Gc = R G I_C.

    In refinement mode the injection I_C keeps every nonzero column of R G;
    in algebraic mode it keeps the coarse nodal set (dropping any member
    whose column happens to vanish, so Gc never carries empty columns).
    """
    RG = csr(R @ G)
    col_nnz = np.diff(RG.tocsc().indptr)
    if mode == "refinement":
        cols = np.flatnonzero(col_nnz > 0)
    elif mode == "algebraic":
        if coarse_nodes is None:
            raise ValueError("algebraic mode needs the coarse nodal set")
        cols = np.asarray(sorted(coarse_nodes), dtype=np.int64)
        cols = cols[col_nnz[cols] > 0]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    Gc = csr(RG[:, cols]) if len(cols) else sp.csr_matrix((RG.shape[0], 0))
    return Gc, cols


def sparse_ideal_interp(A, split, mode="refinement", G=None):
    """Sparse approximate ideal interpolation and coarse gradient.

    The interior correction solves A_II Z = S_I^T A R^T one connected
    component at a time (dense Cholesky per component below the cutoff);
    breakdown in a component reports the failing pivot, which on the
    unshifted operator signals a singular interior block.

    Returns a TransferSet; Gc/columns are computed when G is given.
    """
    R, S_I, S_E = realize_RS(split)
    Rt = csr(R.T)
    interior = split.interior_dofs
    n, n_c = split.n, split.n_pairs

    if len(interior) == 0 or n_c == 0:
        P = Rt
    else:
        A_int_rows = A[interior, :]
        W = csr(A_int_rows @ Rt)                      # S_I^T A R^T
        A_II = csr(A_int_rows[:, interior])
        rows, cols, vals = [], [], []
        for comp in interior_components(A_II):
            Wc = W[comp, :].tocsc()
            keep = np.flatnonzero(np.diff(Wc.indptr) > 0)
            if len(keep) == 0:
                continue
            rhs = np.asarray(Wc[:, keep].todense())
            Acc = A_II[comp][:, comp]
            if len(comp) <= _DENSE_COMPONENT_CUTOFF:
                L = dense_cholesky(Acc.toarray())
                Z = scipy.linalg.cho_solve((L, True), rhs)
            else:
                Z = solve(cholesky(Acc), rhs)
            rr, cc = np.nonzero(Z)
            rows.extend(interior[comp[rr]].tolist())
            cols.extend(keep[cc].tolist())
            vals.extend((-Z[rr, cc]).tolist())
        correction = csr((vals, (rows, cols)), shape=(n, n_c))
        P = csr(Rt + correction)

    if G is not None:
        Gc, ccols = coarse_gradient(R, G, mode=mode, coarse_nodes=split.coarse_nodes)
    else:
        Gc, ccols = sp.csr_matrix((n_c, 0)), np.zeros(0, dtype=np.int64)
    return TransferSet(P, R, Gc, ccols)


def ideal_interp_dense(A, R, S, dense_cap=2000, lstsq=False):
    """Dense reference ideal interpolation (I - S (S^T A S)^{-1} S^T A) R^T.

    Test oracle only.  With lstsq=True the inner solve uses a least-squares
    pseudo-solution, which is what the unshifted (singular S^T A^s S) checks
    need: the system is consistent there and any solution gives the same
    A^s-seminorm behaviour.
    """
    n = A.shape[0]
    if n > dense_cap:
        raise ValueError(f"problem size {n} exceeds the dense cap {dense_cap}")
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
    Sd = S.toarray() if sp.issparse(S) else np.asarray(S)
    Rd = R.toarray() if sp.issparse(R) else np.asarray(R)
    M = Sd.T @ Ad @ Sd
    rhs = Sd.T @ Ad @ Rd.T
    if lstsq:
        X = np.linalg.lstsq(M, rhs, rcond=None)[0]
    else:
        L = dense_cholesky(0.5 * (M + M.T))
        X = scipy.linalg.cho_solve((L, True), rhs)
    return Rd.T - Sd @ X


def _tri_basis(coords):
    """Whitney basis callables of a triangle, one per CCW local edge."""
    Amat = np.column_stack([np.ones(3), coords])
    lam_coeff = np.linalg.inv(Amat).T
    grads = lam_coeff[:, 1:]

    def lam(i, x):
        return lam_coeff[i, 0] + lam_coeff[i, 1] * x[0] + lam_coeff[i, 2] * x[1]

    def make(i, j):
        return lambda x: lam(i, x) * grads[j] - lam(j, x) * grads[i]

    return [make(0, 1), make(1, 2), make(2, 0)]


def _quad_basis(coords):
    """Edge basis callables of an axis-aligned rectangle (CCW local edges)."""
    x0, y0 = coords[0]
    hx = coords[1, 0] - coords[0, 0]
    hy = coords[3, 1] - coords[0, 1]
    s = 1.0 / (hx * hy)

    return [
        lambda x: np.array([(y0 + hy - x[1]) * s, 0.0]),   # bottom, +x
        lambda x: np.array([0.0, (x[0] - x0) * s]),        # right,  +y
        lambda x: np.array([-(x[1] - y0) * s, 0.0]),       # top,    -x
        lambda x: np.array([0.0, -(x0 + hx - x[0]) * s]),  # left,   -y
    ]

_GAUSS2 = (np.array([-1.0, 1.0]) / np.sqrt(3.0) + 1.0) / 2.0


def geometric_interp(coarse_mesh, fine_mesh, rmap, fine_edge_to_dof=None,
                     coarse_edge_to_dof=None):
    """Canonical edge-element interpolation between nested meshes.

    Entry (fine edge e, coarse edge E) is the tangential line integral of
    the coarse basis of E along e (unit-integral convention), evaluated by
    two-point Gauss quadrature; children of a coarse edge receive +-1/2.
    Index maps restrict to free DoFs; None keeps all edges.
    """
    if fine_edge_to_dof is None:
        fine_edge_to_dof = np.arange(fine_mesh.ne)
    if coarse_edge_to_dof is None:
        coarse_edge_to_dof = np.arange(coarse_mesh.ne)
    n_f = int(fine_edge_to_dof.max() + 1) if np.any(fine_edge_to_dof >= 0) else 0
    n_c = int(coarse_edge_to_dof.max() + 1) if np.any(coarse_edge_to_dof >= 0) else 0

    k = coarse_mesh.cells.shape[1]
    basis_of = _tri_basis if k == 3 else _quad_basis
    visited = np.zeros(fine_mesh.ne, dtype=bool)
    rows, cols, vals = [], [], []
    for T in range(coarse_mesh.nc):
        funcs = basis_of(coarse_mesh.vertices[coarse_mesh.cells[T]])
        tdofs = coarse_edge_to_dof[coarse_mesh.cell_edges[T]]
        tsigns = coarse_mesh.cell_edge_signs[T]
        fine_edges = {int(e) for fc in rmap.cell_children[T]
                      for e in fine_mesh.cell_edges[fc]}
        for e in sorted(fine_edges):
            if visited[e]:
                continue
            visited[e] = True
            fdof = fine_edge_to_dof[e]
            if fdof < 0:
                continue
            p = fine_mesh.vertices[fine_mesh.edges[e, 0]]
            q = fine_mesh.vertices[fine_mesh.edges[e, 1]]
            tangent = q - p
            for a in range(k):
                if tdofs[a] < 0:
                    continue
                # local basis follows the CCW traversal; flip to the coarse
                # edge's stored tail->head orientation
                acc = 0.0
                for t in _GAUSS2:
                    acc += 0.5 * (funcs[a](p + t * tangent) @ tangent)
                val = tsigns[a] * acc
                if abs(val) > 1e-12:
                    rows.append(int(fdof))
                    cols.append(int(tdofs[a]))
                    vals.append(val)
    return csr((vals, (rows, cols)), shape=(n_f, n_c))
