"""OSS-l1 relaxation: multiplicative Schwarz over nodal edge patches composed
with an l1-Jacobi step.

One forward application is a patch sweep (for each node patch in order,
solve the local block against the current residual) followed by one l1-Jacobi
update.  The backward variant is its A-adjoint (Jacobi first, then the
reverse-order sweep), so pre/post smoothing in a V(1,1) cycle are mutually
adjoint and the cycle is a valid SPD preconditioner.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .sparse import NotPositiveDefiniteError, csr, dense_cholesky
from .utils import thread_map

__all__ = ["PatchSet", "L1Jacobi", "build_patches", "build_l1_jacobi",
           "smooth", "l1_jacobi_matrix"]


@dataclass
class PatchSet:
    """Per-node edge patches with their dense Cholesky factors.

    patches[v] holds the DoFs of the edges incident to node v in the level's
    gradient; DoFs in no patch get singleton patches so everything is covered.
    update_rows/update_blocks cache the nonzero rows of A[:, patch] and the
    dense block A[rows, patch], so one patch solve touches O(local) entries
    of the maintained residual instead of a full-length vector.
    """

    patches: list
    factors: list
    update_rows: list
    update_blocks: list


@dataclass
class L1Jacobi:
    """Diagonal l1 smoother, d_i = sum_j |A_ij| (so d_i >= A_ii > 0)."""

    d: np.ndarray


def build_l1_jacobi(A):
    d = np.asarray(abs(A).sum(axis=1)).ravel()
    return L1Jacobi(d)


def l1_jacobi_matrix(A):
    """The explicit smoother matrix M = diag(d); used by the two-grid measure."""
    return csr(sp.diags(build_l1_jacobi(A).d))


def build_patches(A, G_level):
    """Vertex patches read off the level gradient: patch v = nonzero rows of
    column v.  Uncovered DoFs become singletons; each block is factored once."""
    n = A.shape[0]
    Gc = G_level.tocsc()
    patches = []
    covered = np.zeros(n, dtype=bool)
    for v in range(Gc.shape[1]):
        rows = Gc.indices[Gc.indptr[v]:Gc.indptr[v + 1]]
        if len(rows) == 0:
            continue
        patch = np.unique(rows)
        patches.append(patch)
        covered[patch] = True
    for dof in np.flatnonzero(~covered):
        patches.append(np.array([dof]))

    Acsc = A.tocsc()

    def factor(item):
        pid, patch = item
        cols = Acsc[:, patch]
        rows = np.unique(cols.indices)
        block = np.asarray(cols[rows, :].todense())
        sub = block[np.searchsorted(rows, patch), :]
        try:
            return dense_cholesky(sub), rows, block
        except NotPositiveDefiniteError as err:
            raise NotPositiveDefiniteError(err.pivot,
                                           f"singular patch block {pid}") from err

    results = thread_map(factor, list(enumerate(patches)))
    factors = [r[0] for r in results]
    update_rows = [r[1] for r in results]
    update_blocks = [r[2] for r in results]
    return PatchSet(patches, factors, update_rows, update_blocks)


def _schwarz_sweep(ps, x, r, order):
    for p in order:
        patch = ps.patches[p]
        d = scipy.linalg.cho_solve((ps.factors[p], True), r[patch])
        x[patch] += d
        r[ps.update_rows[p]] -= ps.update_blocks[p] @ d


def _jacobi_step(A, l1, x, r):
    d = r / l1.d
    x += d
    r -= A @ d


def smooth(A, patches, l1, x, b, direction="forward"):
    """One OSS-l1 application; returns the updated iterate.

    forward  = Schwarz sweep then l1-Jacobi;
    backward = the A-adjoint (l1-Jacobi then reverse sweep);
    symmetric = forward followed by backward.
    """
    if A.shape[0] != len(b) or len(x) != len(b):
        raise ValueError("shape mismatch")
    x = np.array(x, dtype=np.float64)
    r = b - A @ x
    m = len(patches.patches)
    if direction == "forward":
        _schwarz_sweep(patches, x, r, range(m))
        _jacobi_step(A, l1, x, r)
    elif direction == "backward":
        _jacobi_step(A, l1, x, r)
        _schwarz_sweep(patches, x, r, range(m - 1, -1, -1))
    elif direction == "symmetric":
        _schwarz_sweep(patches, x, r, range(m))
        _jacobi_step(A, l1, x, r)
        _jacobi_step(A, l1, x, r)
        _schwarz_sweep(patches, x, r, range(m - 1, -1, -1))
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return x
