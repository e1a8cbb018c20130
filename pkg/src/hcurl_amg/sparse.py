"""Sparse linear-algebra kernels shared by the whole solver stack.

Matrices are scipy CSR (``scipy.sparse.csr_matrix``) with sorted, duplicate-free
columns and no explicitly stored zeros; vectors are 1-D float64 numpy arrays.
``validate`` checks the structural contract and is used throughout the test
suite.  The only factorization offered is a sparse Cholesky (scipy has none),
with a reverse-Cuthill-McKee fill-reducing ordering and a dense fast path for
small matrices.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

# Below this size a permuted dense Cholesky is both faster and more robust
# than the pure-python sparse one; the factor is converted back to CSR.
_DENSE_CHOLESKY_CUTOFF = 4096

# Pivots below this fraction of the largest diagonal count as breakdown:
# exactly singular blocks reach ~1e-16 relative through roundoff, while the
# contract only promises matrices with condition number <= 1e8 (pivots
# >= ~1e-8 relative), so the floor separates the two cleanly.
_PIVOT_RTOL = 1e-13

__all__ = [
    "NotPositiveDefiniteError",
    "CholeskyFactor",
    "validate",
    "csr",
    "spmv",
    "transpose",
    "matmat",
    "galerkin_product",
    "extract_submatrix",
    "cholesky",
    "solve",
    "max_abs",
    "write_matrix_market",
    "read_matrix_market",
]


class NotPositiveDefiniteError(RuntimeError):
    """Cholesky pivot breakdown; ``pivot`` is the failing index (post-ordering)."""

    def __init__(self, pivot, message=None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


def csr(a, shape=None):
    """Coerce ``a`` (dense array, sparse matrix, or (data,(i,j)) triple) to
    canonical CSR: sorted columns, duplicates summed, exact zeros removed."""
    m = sp.csr_matrix(a, shape=shape, dtype=np.float64)
    m.sum_duplicates()
    m.sort_indices()
    m.eliminate_zeros()
    return m


def validate(A):
    """Check the structural invariants of a CSR matrix; raise ValueError on violation.

    Verified: row_offsets nondecreasing with the right length and total,
    strictly increasing in-range column indices per row, and no stored zeros.
    """
    if not sp.issparse(A) or A.format != "csr":
        raise ValueError("expected a CSR matrix")
    n, m = A.shape
    indptr, indices, data = A.indptr, A.indices, A.data
    if len(indptr) != n + 1:
        raise ValueError("row_offsets has wrong length")
    if indptr[0] != 0 or indptr[-1] != len(data) or np.any(np.diff(indptr) < 0):
        raise ValueError("row_offsets not a nondecreasing 0..nnz sequence")
    if len(indices) and (indices.min() < 0 or indices.max() >= m):
        raise ValueError("column index out of range")
    for i in range(n):
        cols = indices[indptr[i]:indptr[i + 1]]
        if len(cols) > 1 and np.any(np.diff(cols) <= 0):
            raise ValueError(f"row {i}: column indices not strictly increasing")
    if np.any(data == 0.0):
        raise ValueError("explicitly stored zero entry")
    return True


def spmv(A, x):
    """Sparse matrix-vector product y = A x."""
    x = np.asarray(x, dtype=np.float64)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def transpose(A):
    """Transpose, returned in canonical CSR form."""
    return csr(A.T)


def matmat(A, B):
    """Exact sparse product A @ B (sorted, compressed)."""
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    return csr(A @ B)


def galerkin_product(P, A):
    """Galerkin triple product P^T A P, symmetrized as (M + M^T)/2.

    The symmetrization removes the roundoff asymmetry of the sparse triple
    product so that coarse operators of symmetric A are exactly symmetric.
    """
    if A.shape[0] != A.shape[1] or A.shape[0] != P.shape[0]:
        raise ValueError(f"dimension mismatch: P {P.shape}, A {A.shape}")
    M = P.T @ (A @ P)
    return csr(0.5 * (M + M.T))


def extract_submatrix(A, rows, cols):
    """Block A[rows, cols] in the order given by the two index sets.

    Duplicate or out-of-range indices are rejected.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    for idx, bound, what in ((rows, A.shape[0], "row"), (cols, A.shape[1], "column")):
        if idx.size and (idx.min() < 0 or idx.max() >= bound):
            raise ValueError(f"{what} index out of range")
        if len(np.unique(idx)) != len(idx):
            raise ValueError(f"duplicated {what} index")
    return csr(A[rows][:, cols] if rows.size and cols.size
               else sp.csr_matrix((len(rows), len(cols))))


def max_abs(A):
    """Largest absolute entry of a sparse matrix (0 for an empty one)."""
    return float(np.max(np.abs(A.data))) if A.nnz else 0.0


@dataclass
class CholeskyFactor:
    """Sparse Cholesky factorization P A P^T = L L^T.

    ``ordering`` is the fill-reducing permutation (row i of the factored
    matrix is ``ordering[i]`` of the original), ``factor`` the lower-triangular
    CSR factor with positive diagonal.
    """

    ordering: np.ndarray
    factor: sp.csr_matrix

    def __post_init__(self):
        # dense copy of L for fast repeated triangular solves on small systems
        n = self.factor.shape[0]
        self._dense_l = self.factor.toarray() if n <= _DENSE_CHOLESKY_CUTOFF else None

    @property
    def n(self):
        return self.factor.shape[0]


def _diag_scale(diag):
    return float(np.max(np.abs(diag))) if len(diag) else 0.0


def _dense_cholesky_with_pivot(Ad, scale=None):
    """Column-by-column dense Cholesky that reports the failing pivot index."""
    n = Ad.shape[0]
    if scale is None:
        scale = _diag_scale(np.diag(Ad))
    L = np.zeros_like(Ad)
    for j in range(n):
        d = Ad[j, j] - L[j, :j] @ L[j, :j]
        if d <= _PIVOT_RTOL * scale or not np.isfinite(d):
            raise NotPositiveDefiniteError(j)
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1:, j] = (Ad[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def dense_cholesky(Ad):
    """Dense lower Cholesky with breakdown detection.

    LAPACK does the factorization; a relative pivot floor catches the
    near-zero pivots that an exactly singular matrix acquires through
    roundoff, re-running the slow column loop to name the failing index.
    """
    n = Ad.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    scale = _diag_scale(np.diag(Ad))
    try:
        L = np.linalg.cholesky(Ad)
    except np.linalg.LinAlgError:
        _dense_cholesky_with_pivot(Ad, scale)  # raises with the pivot index
        raise  # pragma: no cover - unreachable
    pivots = np.diag(L) ** 2
    if pivots.min() <= _PIVOT_RTOL * scale:
        raise NotPositiveDefiniteError(int(np.argmin(pivots)),
                                       f"pivot {pivots.min():.3e} below the "
                                       f"breakdown floor (near-singular block)")
    return L


def _sparse_cholesky_with_pivot(A):
    """Up-looking sparse Cholesky on CSR input (already permuted).

    Row-oriented: row j of L solves L[:j,:j] x = A[j,:j]^T.  Kept in python
    lists; only used above the dense cutoff, which the solver path never hits.
    """
    n = A.shape[0]
    Ac = A.tocsc()
    rows_idx = [None] * n   # column index lists per row of L
    rows_val = [None] * n
    diag = np.zeros(n)
    col_rows = [[] for _ in range(n)]  # rows below the diagonal per column
    scale = _diag_scale(A.diagonal())
    for j in range(n):
        # scatter A[j, :j+1]
        a_cols = Ac.indices[Ac.indptr[j]:Ac.indptr[j + 1]]
        a_vals = Ac.data[Ac.indptr[j]:Ac.indptr[j + 1]]
        keep = a_cols <= j
        work = dict(zip(a_cols[keep].tolist(), a_vals[keep].tolist()))
        # fill-in pattern of the triangular solve: positions reachable from the
        # rhs pattern through the directed graph of L (column c feeds row r>c)
        stack = [c for c in work if c < j]
        seen = set(stack)
        reach = []
        while stack:
            c = stack.pop()
            reach.append(c)
            for r in col_rows[c]:
                if r not in seen:
                    seen.add(r)
                    stack.append(r)
        lj_idx, lj_val = [], []
        for c in sorted(reach):
            v = work.get(c, 0.0)
            ci, cv = rows_idx[c], rows_val[c]
            if ci:
                v -= np.dot([work.get(k, 0.0) for k in ci], cv)
            v /= diag[c]
            work[c] = v
            lj_idx.append(c)
            lj_val.append(v)
        d = work.get(j, 0.0) - (np.dot(lj_val, lj_val) if lj_val else 0.0)
        if d <= _PIVOT_RTOL * scale or not np.isfinite(d):
            raise NotPositiveDefiniteError(j)
        diag[j] = np.sqrt(d)
        rows_idx[j] = lj_idx
        rows_val[j] = lj_val
        for c in lj_idx:
            col_rows[c].append(j)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for j in range(n):
        indptr[j + 1] = indptr[j] + len(rows_idx[j]) + 1
    indices = np.empty(indptr[-1], dtype=np.int32)
    data = np.empty(indptr[-1])
    for j in range(n):
        s = indptr[j]
        k = len(rows_idx[j])
        indices[s:s + k] = rows_idx[j]
        data[s:s + k] = rows_val[j]
        indices[s + k] = j
        data[s + k] = diag[j]
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def cholesky(A, check_symmetry=True):
    """Sparse Cholesky factorization of an SPD matrix.

    Symmetry is checked to 1e-12 relative; positivity is detected during the
    factorization and reported with the failing pivot index, which signals a
    singular interior block to the splitting layer.

    Returns
    -------
    CholeskyFactor
    """
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if check_symmetry:
        asym = max_abs(csr(A - A.T))
        scale = max_abs(A)
        if scale > 0 and asym > 1e-12 * scale:
            raise ValueError(f"matrix not symmetric: asymmetry {asym:.3e}")
    if n == 0:
        return CholeskyFactor(np.zeros(0, dtype=np.int64), sp.csr_matrix((0, 0)))
    perm = np.asarray(reverse_cuthill_mckee(A, symmetric_mode=True), dtype=np.int64)
    Ap = A[perm][:, perm].tocsr()
    if n <= _DENSE_CHOLESKY_CUTOFF:
        return CholeskyFactor(perm, csr(dense_cholesky(Ap.toarray())))
    return CholeskyFactor(perm, _sparse_cholesky_with_pivot(Ap))


def solve(factor, b):
    """Solve A x = b (or a block of right-hand sides) using a CholeskyFactor."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != factor.n:
        raise ValueError(f"dimension mismatch: factor {factor.n}, rhs {b.shape}")
    if factor.n == 0:
        return b.copy()
    bp = b[factor.ordering]
    if factor._dense_l is not None:
        y = scipy.linalg.solve_triangular(factor._dense_l, bp, lower=True)
        xp = scipy.linalg.solve_triangular(factor._dense_l.T, y, lower=False)
    else:
        L = factor.factor
        y = sp.linalg.spsolve_triangular(L, bp, lower=True)
        xp = sp.linalg.spsolve_triangular(L.T.tocsr(), y, lower=False)
    x = np.empty_like(bp)
    x[factor.ordering] = xp
    return x


def write_matrix_market(A, path):
    """Export in MatrixMarket coordinate format (1-based, real general)."""
    scipy.io.mmwrite(path, sp.coo_matrix(A), field="real", symmetry="general")


def read_matrix_market(path):
    """Import a MatrixMarket file as canonical CSR."""
    return csr(scipy.io.mmread(path))


def mm_to_string(A):
    """MatrixMarket text of a matrix, for fixtures and debugging."""
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, sp.coo_matrix(A), field="real", symmetry="general")
    return buf.getvalue().decode()
