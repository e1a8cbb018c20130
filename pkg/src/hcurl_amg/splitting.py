"""Coarse/fine variable construction for the edge space.

Two routes build the same structure: an interior/exterior splitting where
each exterior *pair* of edge DoFs forms one coarse variable (a row of R with
entries +-1/sqrt(2)) and every other DoF stays interior (a Euclidean column
of S_I).

* refinement route: pairs are the two children of each free coarse edge,
  meeting at the edge midpoint;
* algebraic route: the gradient is boundary-augmented, a nodal dual operator
  is coarsened by a classical C/F pass, and pairs are unique distance-two
  paths i -> k -> j between coarse nodes.

Signs follow the path traversal: a DoF enters with +1 when its stored
tail->head orientation agrees with the traversal direction.  That makes each
R row orthogonal to the matching gradient restriction in S_E, which is what
the Schur-kernel identity needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .sparse import csr

__all__ = [
    "ExteriorPair",
    "Splitting",
    "AugmentedGradient",
    "NodalSplit",
    "augment_gradient",
    "nodal_dual",
    "classical_cf",
    "nodal_cf",
    "build_algebraic_splitting",
    "build_refinement_splitting",
    "realize_RS",
    "realize_RS_unnormalized",
    "dump_splitting",
    "parse_splitting",
]

INV_SQRT2 = 1.0 / np.sqrt(2.0)


class ExteriorPair(NamedTuple):
    dof1: int
    dof2: int
    sign1: int
    sign2: int
    tail: int   # node i
    mid: int    # node k
    head: int   # node j


@dataclass
class Splitting:
    """Exterior pair list + interior DoF set over n edge DoFs.

    Node indices live in the builder's nodal space: mesh vertices for the
    refinement route, (augmented) gradient columns for the algebraic route.
    ``dof_edges`` optionally maps system DoFs back to mesh edges so the
    coarsening pattern can be drawn.
    """

    pairs: list
    interior_dofs: np.ndarray
    n: int
    dof_edges: np.ndarray = field(default=None)
    pair_mesh_edges: np.ndarray = field(default=None)  # refinement route only
    coarse_nodes: np.ndarray = field(default=None)     # algebraic route: c_G

    @property
    def n_pairs(self):
        return len(self.pairs)

    def exterior_dofs(self):
        out = []
        for p in self.pairs:
            out.extend((p.dof1, p.dof2))
        return np.array(sorted(out), dtype=np.int64)


@dataclass
class AugmentedGradient:
    Gtilde: sp.csr_matrix
    boundary_cols: np.ndarray


@dataclass
class NodalSplit:
    c_G: np.ndarray
    f_G: np.ndarray


def augment_gradient(G):
    """Append one column per single-nonzero row so every boundary-touching
    edge row regains two opposite-sign entries.

    A row with value delta at its single nonzero receives -delta in a fresh
    column; the new column indices form the artificial boundary set B.  Rows
    with two nonzeros pass through; rows with no nonzeros (edges pinned to
    the boundary at both ends) are left alone and simply stay interior
    downstream.  Rows with more than two nonzeros are not a gradient.
    """
    G = csr(G)
    nnz_per_row = np.diff(G.indptr)
    if np.any(nnz_per_row > 2):
        raise ValueError(f"row {int(np.argmax(nnz_per_row > 2))} has more than 2 nonzeros")
    if G.nnz and np.any(np.abs(G.data) != 1.0):
        raise ValueError("gradient entries must be +-1")
    single = np.flatnonzero(nnz_per_row == 1)
    m = G.shape[1]
    if len(single) == 0:
        return AugmentedGradient(G, np.arange(0, dtype=np.int64))
    rows = single
    cols = m + np.arange(len(single))
    vals = np.array([-G.data[G.indptr[r]] for r in single])
    extra = csr((vals, (rows, cols - m)), shape=(G.shape[0], len(single)))
    Gt = csr(sp.hstack([G, extra]))
    return AugmentedGradient(Gt, cols.astype(np.int64))


def nodal_dual(A, Gtilde):
    """Nodal dual operator G~^T A G~ (symmetrized)."""
    if A.shape[1] != Gtilde.shape[0]:
        raise ValueError(f"dimension mismatch: A {A.shape}, Gtilde {Gtilde.shape}")
    M = Gtilde.T @ (A @ Gtilde)
    return csr(0.5 * (M + M.T))


def _strong_adjacency(Anodal, theta):
    """Directed strong-connection lists: j is strong for i when
    |a_ij| >= theta * max_{k != i} |a_ik|."""
    n = Anodal.shape[0]
    A = Anodal.tocsr()
    strong = [[] for _ in range(n)]
    strong_to = [[] for _ in range(n)]
    for i in range(n):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        cols = A.indices[lo:hi]
        vals = np.abs(A.data[lo:hi])
        off = cols != i
        if not off.any():
            continue
        thresh = theta * vals[off].max()
        for j, v in zip(cols[off], vals[off]):
            if v >= thresh:
                strong[i].append(int(j))
                strong_to[j].append(i)
    return strong, strong_to


def _graph_neighbors(Anodal):
    n = Anodal.shape[0]
    A = Anodal.tocsr()
    nbrs = []
    for i in range(n):
        cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
        nbrs.append(cols[cols != i])
    return nbrs


UNASSIGNED, COARSE, FINE = 0, 1, 2


def classical_cf(Anodal, c_init=(), f_init=(), theta=0.25):
    """One-pass C/F coloring with prescribed initial sets.

    Strong connections use |a_ij| >= theta * max_k |a_ik|.  The greedy pass
    repeatedly promotes the unassigned node with the most strong neighbors
    already marked fine (ties to the lowest index) and then marks *all* its
    graph neighbors fine, so no two chosen coarse nodes are ever adjacent.
    Boundary-prescribed coarse sets seed the fine front, which then sweeps
    inward and keeps the coloring aligned with the mesh structure.
    """
    n = Anodal.shape[0]
    c_init = np.asarray(list(c_init), dtype=np.int64)
    f_init = np.asarray(list(f_init), dtype=np.int64)
    if len(np.intersect1d(c_init, f_init)) > 0:
        raise ValueError("initial coarse and fine sets overlap")
    state = np.full(n, UNASSIGNED, dtype=np.int8)
    state[c_init] = COARSE
    state[f_init] = FINE

    strong, strong_to = _strong_adjacency(Anodal, theta)
    nbrs = _graph_neighbors(Anodal)
    measure = np.zeros(n, dtype=np.int64)
    for j in np.flatnonzero(state == FINE):
        for i in strong_to[j]:
            measure[i] += 1

    unassigned = int(np.sum(state == UNASSIGNED))
    while unassigned > 0:
        masked = np.where(state == UNASSIGNED, measure, -1)
        i = int(np.argmax(masked))  # ties resolve to the lowest index
        state[i] = COARSE
        unassigned -= 1
        for j in nbrs[i]:
            if state[j] == UNASSIGNED:
                state[j] = FINE
                unassigned -= 1
                for k in strong_to[j]:
                    measure[k] += 1
    C = np.flatnonzero(state == COARSE)
    F = np.flatnonzero(state == FINE)
    return C, F


def nodal_cf(A, Gtilde, bcols, theta=0.25):
    """C/F splitting of the nodal dual with prescribed boundary nodes.

    The artificial boundary columns B start coarse, their neighbors start
    fine, and the returned coarse set excludes B again.
    """
    Anodal = nodal_dual(A, Gtilde)
    bcols = np.asarray(bcols, dtype=np.int64)
    nbrs = _graph_neighbors(Anodal)
    f_init = set()
    for b in bcols:
        f_init.update(int(j) for j in nbrs[b])
    f_init -= set(bcols.tolist())
    C, F = classical_cf(Anodal, c_init=bcols, f_init=sorted(f_init), theta=theta)
    c_G = np.setdiff1d(C, bcols)
    return NodalSplit(c_G, F), Anodal


def _edge_lookup(Gtilde):
    """Map (min node, max node) -> (row, value at min, value at max) for
    every two-nonzero row of the gradient."""
    lookup = {}
    indptr, indices, data = Gtilde.indptr, Gtilde.indices, Gtilde.data
    for r in range(Gtilde.shape[0]):
        lo, hi = indptr[r], indptr[r + 1]
        if hi - lo != 2:
            continue
        u, v = indices[lo], indices[hi - 1]
        lookup[(int(u), int(v))] = (r, data[lo], data[hi - 1])
    return lookup


def build_algebraic_splitting(A, G, theta=0.25, dof_edges=None):
    """Fully algebraic interior/exterior splitting (boundary augmentation,
    nodal coarsening, unique distance-two path matching).

    Coarse-node pairs (i, j), i < j, are visited in ascending order; a pair
    is accepted when a mutual nodal-graph neighbor k exists that is not
    already used, with both path edge DoFs (i,k) and (k,j) present in the
    gradient and still unpaired.  Pairs entirely inside the artificial
    boundary set are skipped, as are pairs with no valid k.
    """
    aug = augment_gradient(G)
    Gt, bset = aug.Gtilde, set(aug.boundary_cols.tolist())
    nsplit, Anodal = nodal_cf(A, Gt, aug.boundary_cols, theta=theta)
    coarse = np.union1d(nsplit.c_G, aug.boundary_cols)

    nbrs = _graph_neighbors(Anodal)
    nbr_sets = [set(x.tolist()) for x in nbrs]
    lookup = _edge_lookup(Gt)

    n = A.shape[0]
    available = np.ones(n, dtype=bool)
    used_mid = set()
    pairs = []
    coarse_set = set(coarse.tolist())
    for i in coarse:
        i = int(i)
        # ascending candidates j > i at nodal distance two
        two_away = set()
        for k in nbrs[i]:
            two_away.update(nbr_sets[k])
        candidates = sorted(j for j in two_away if j > i and j in coarse_set)
        for j in candidates:
            if i in bset and j in bset:
                continue
            for k in sorted(nbr_sets[i] & nbr_sets[j]):
                if k in used_mid:
                    continue
                e1 = lookup.get((min(i, k), max(i, k)))
                e2 = lookup.get((min(k, j), max(k, j)))
                if e1 is None or e2 is None:
                    continue
                if e1[0] == e2[0] or not (available[e1[0]] and available[e2[0]]):
                    continue
                g1 = e1[1] if min(i, k) == k else e1[2]   # Gtilde[dof1, k]
                g2 = e2[1] if min(k, j) == k else e2[2]   # Gtilde[dof2, k]
                pairs.append(ExteriorPair(e1[0], e2[0], int(np.sign(g1)),
                                          int(-np.sign(g2)), i, int(k), j))
                available[e1[0]] = available[e2[0]] = False
                used_mid.add(int(k))
                break
    interior = np.flatnonzero(available)
    return Splitting(pairs, interior, n, dof_edges=dof_edges,
                     coarse_nodes=nsplit.c_G)


def build_refinement_splitting(coarse_mesh, fine_mesh, rmap, edge_to_dof, n):
    """Interior/exterior splitting read off one geometric refinement step.

    One pair per coarse edge whose two children map to live DoFs
    (``edge_to_dof`` sends fine-mesh edges to system DoFs, -1 where
    eliminated); the midpoint is the path node, signs follow the coarse
    tail -> midpoint -> head traversal against the stored fine orientations.
    """
    pairs = []
    pair_edges = []
    available = np.ones(n, dtype=bool)
    dof_edges = np.full(n, -1, dtype=np.int64)
    for e in np.flatnonzero(edge_to_dof >= 0):
        dof_edges[edge_to_dof[e]] = e
    for E in range(coarse_mesh.ne):
        c1, c2 = rmap.coarse_edge_children[E]
        d1, d2 = int(edge_to_dof[c1]), int(edge_to_dof[c2])
        if d1 < 0 or d2 < 0:
            continue
        t, h = map(int, coarse_mesh.edges[E])
        mid = int(np.intersect1d(fine_mesh.edges[c1], fine_mesh.edges[c2])[0])
        # +1 when the stored fine orientation agrees with the traversal
        sign1 = 1 if fine_mesh.edges[c1][1] == mid else -1
        sign2 = 1 if fine_mesh.edges[c2][0] == mid else -1
        pairs.append(ExteriorPair(d1, d2, sign1, sign2, t, mid, h))
        pair_edges.append(E)
        available[d1] = available[d2] = False
    interior = np.flatnonzero(available)
    return Splitting(pairs, interior, n, dof_edges=dof_edges,
                     pair_mesh_edges=np.array(pair_edges, dtype=np.int64))


def realize_RS(split):
    """Materialize (R, S_I, S_E) from a splitting.

    R has one row per pair with entries sign/sqrt(2); S_E holds the matching
    normalized gradient restrictions (sign1, -sign2)/sqrt(2); S_I injects the
    interior Euclidean basis.
    """
    Ri, Rj, Rv, Si, Sj, Sv = _rs_triplets(split, INV_SQRT2)
    n, np_ = split.n, split.n_pairs
    R = csr((Rv, (Ri, Rj)), shape=(np_, n))
    S_E = csr((Sv, (Si, Sj)), shape=(n, np_))
    n_int = len(split.interior_dofs)
    S_I = csr((np.ones(n_int), (split.interior_dofs, np.arange(n_int))),
              shape=(n, n_int))
    return R, S_I, S_E


def realize_RS_unnormalized(split):
    """Same pattern with +-1 entries (sqrt(2)-scaled R and S_E).

    All entries are exactly representable, so orthogonality identities can be
    tested bit-exactly: R2 S2 = 0, S2^T S2 = 2I, R2 R2^T = 2I.
    """
    Ri, Rj, Rv, Si, Sj, Sv = _rs_triplets(split, 1.0)
    n, np_ = split.n, split.n_pairs
    R2 = csr((Rv, (Ri, Rj)), shape=(np_, n))
    S2_E = csr((Sv, (Si, Sj)), shape=(n, np_))
    return R2, S2_E


def _rs_triplets(split, scale):
    Ri, Rj, Rv, Si, Sj, Sv = [], [], [], [], [], []
    for p, pair in enumerate(split.pairs):
        Ri += [p, p]
        Rj += [pair.dof1, pair.dof2]
        Rv += [pair.sign1 * scale, pair.sign2 * scale]
        Si += [pair.dof1, pair.dof2]
        Sj += [p, p]
        Sv += [pair.sign1 * scale, -pair.sign2 * scale]
    return Ri, Rj, Rv, Si, Sj, Sv


def dump_splitting(split):
    """One line per pair: i k j dof1 sign1 dof2 sign2 (plus an n header)."""
    lines = [f"n {split.n}"]
    for p in split.pairs:
        lines.append(f"{p.tail} {p.mid} {p.head} {p.dof1} {p.sign1} {p.dof2} {p.sign2}")
    return "\n".join(lines) + "\n"


def parse_splitting(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n "):
        raise ValueError("missing size header")
    n = int(lines[0].split()[1])
    pairs = []
    taken = set()
    for ln in lines[1:]:
        t, k, h, d1, s1, d2, s2 = (int(x) for x in ln.split())
        pairs.append(ExteriorPair(d1, d2, s1, s2, t, k, h))
        taken.update((d1, d2))
    interior = np.array(sorted(set(range(n)) - taken), dtype=np.int64)
    return Splitting(pairs, interior, n)
