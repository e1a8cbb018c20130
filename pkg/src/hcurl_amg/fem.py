"""Lowest-order edge-element assembly of the shifted curl-curl operator.

Builds A = A^s(mu) + beta * A^m on a 2D mesh together with the signed
edge-vertex incidence (discrete gradient) G.  The degree of freedom of an
edge is the tangential line integral along its stored tail->head direction
(unit-integral convention), which fixes all element constants.  Dirichlet
conditions (zero tangential trace) are imposed by eliminating boundary edge
rows/columns and boundary vertex columns of G.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import csr

__all__ = [
    "CurlCurlSystem",
    "assemble",
    "build_gradient",
    "interior_node_rows",
    "tri_element_matrices",
    "quad_element_matrices",
]


@dataclass
class CurlCurlSystem:
    """Assembled curl-curl system on the free (non-Dirichlet) edge DoFs.

    A = As + beta * Am, all symmetric CSR on the free edges.  G maps free
    (interior) vertex columns to free edge rows with entries +1 at the head
    and -1 at the tail.  free_edges / free_nodes map mesh edge and vertex
    indices to system indices (-1 where eliminated).
    """

    A: sp.csr_matrix
    As: sp.csr_matrix
    Am: sp.csr_matrix
    G: sp.csr_matrix
    beta: float
    free_edges: np.ndarray
    free_nodes: np.ndarray

    @property
    def n(self):
        return self.A.shape[0]


def tri_element_matrices(coords):
    """Whitney 1-form stiffness and mass matrices of one triangle.

    Local edges follow the CCW traversal (0,1), (1,2), (2,0); the basis of
    edge (i, j) is W_ij = lambda_i grad(lambda_j) - lambda_j grad(lambda_i),
    whose tangential integral along i->j is 1.  curl W_ij = 1/area for CCW
    pairs, so the (unweighted) stiffness is the rank-one matrix ones/area.
    """
    p0, p1, p2 = coords
    d1, d2 = p1 - p0, p2 - p0
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    if area <= 0:
        raise ValueError("triangle is degenerate or clockwise")
    # grad(lambda_i): rotate the opposite side by 90 degrees / (2 area)
    g = np.empty((3, 2))
    g[0] = (p1[1] - p2[1], p2[0] - p1[0])
    g[1] = (p2[1] - p0[1], p0[0] - p2[0])
    g[2] = (p0[1] - p1[1], p1[0] - p0[0])
    g /= 2.0 * area

    S = np.full((3, 3), 1.0 / area)

    gram = g @ g.T
    # integral of lambda_p * lambda_q over the triangle
    I2 = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
    edges = [(0, 1), (1, 2), (2, 0)]
    M = np.empty((3, 3))
    for a, (i, j) in enumerate(edges):
        for b, (k, l) in enumerate(edges):
            M[a, b] = (gram[j, l] * I2[i, k] - gram[j, k] * I2[i, l]
                       - gram[i, l] * I2[j, k] + gram[i, k] * I2[j, l])
    return S, M


def quad_element_matrices(coords):
    """Edge-element stiffness and mass matrices of one axis-aligned rectangle.

    Local edges follow the CCW traversal; each reference basis function has
    curl = 1 and unit tangential integral along the traversal direction, so
    the (unweighted) stiffness is ones/(hx*hy).
    """
    hx = coords[1, 0] - coords[0, 0]
    hy = coords[3, 1] - coords[0, 1]
    axis_aligned = (abs(coords[1, 1] - coords[0, 1]) < 1e-12 * max(hx, hy)
                    and abs(coords[3, 0] - coords[0, 0]) < 1e-12 * max(hx, hy))
    if not axis_aligned or hx <= 0 or hy <= 0:
        raise NotImplementedError("only axis-aligned rectangles are supported")
    S = np.full((4, 4), 1.0 / (hx * hy))
    sx, sy = hy / hx, hx / hy
    M = np.array([
        [sx / 3, 0.0, -sx / 6, 0.0],
        [0.0, sy / 3, 0.0, -sy / 6],
        [-sx / 6, 0.0, sx / 3, 0.0],
        [0.0, -sy / 6, 0.0, sy / 3],
    ])
    return S, M


def build_gradient(mesh, dirichlet=True):
    """Signed edge-vertex incidence G restricted to free edges and nodes.

    Returns (G, free_edges, free_nodes); G[e, head] = +1, G[e, tail] = -1.
    """
    if dirichlet:
        free_e = ~mesh.boundary_edge
        free_v = ~mesh.boundary_vertex
    else:
        free_e = np.ones(mesh.ne, dtype=bool)
        free_v = np.ones(mesh.nv, dtype=bool)
    free_edges = np.full(mesh.ne, -1, dtype=np.int64)
    free_edges[free_e] = np.arange(free_e.sum())
    free_nodes = np.full(mesh.nv, -1, dtype=np.int64)
    free_nodes[free_v] = np.arange(free_v.sum())

    rows, cols, vals = [], [], []
    for e in np.flatnonzero(free_e):
        tail, head = mesh.edges[e]
        r = free_edges[e]
        if free_nodes[head] >= 0:
            rows.append(r)
            cols.append(free_nodes[head])
            vals.append(1.0)
        if free_nodes[tail] >= 0:
            rows.append(r)
            cols.append(free_nodes[tail])
            vals.append(-1.0)
    G = csr((vals, (rows, cols)), shape=(int(free_e.sum()), int(free_v.sum())))
    return G, free_edges, free_nodes


def assemble(mesh, mu, beta, dirichlet=True):
    """Assemble the curl-curl system A = A^s(mu) + beta A^m.

    Parameters
    ----------
    mesh : Mesh2D
    mu : CoefficientField
        Positive piecewise-constant coefficient (stiffness weight is 1/mu).
    beta : float
        Nonnegative zeroth-order shift.
    dirichlet : bool
        Eliminate boundary edges (tangential trace zero) and boundary vertex
        columns of G.  With False the full natural system is returned, which
        is what the quad stencil diagnostics use.
    """
    if mesh.nc == 0:
        raise ValueError("empty mesh")
    if beta < 0:
        raise ValueError("shift must be nonnegative")
    muv = mu.mu
    if len(muv) != mesh.nc:
        raise ValueError("coefficient field does not match the mesh")

    k = mesh.cells.shape[1]
    element = tri_element_matrices if k == 3 else quad_element_matrices
    rows, cols, s_vals, m_vals = [], [], [], []
    for c in range(mesh.nc):
        S, M = element(mesh.vertices[mesh.cells[c]])
        signs = mesh.cell_edge_signs[c].astype(np.float64)
        D = np.outer(signs, signs)
        S = S * D / muv[c]
        M = M * D
        ge = mesh.cell_edges[c]
        for a in range(k):
            for b in range(k):
                rows.append(ge[a])
                cols.append(ge[b])
                s_vals.append(S[a, b])
                m_vals.append(M[a, b])

    shape = (mesh.ne, mesh.ne)
    As_full = csr((s_vals, (rows, cols)), shape=shape)
    Am_full = csr((m_vals, (rows, cols)), shape=shape)

    G, free_edges, free_nodes = build_gradient(mesh, dirichlet)
    keep = np.flatnonzero(free_edges >= 0)
    As = csr(As_full[keep][:, keep])
    Am = csr(Am_full[keep][:, keep])
    As = csr(0.5 * (As + As.T))
    Am = csr(0.5 * (Am + Am.T))
    A = csr(As + beta * Am) if beta > 0 else As.copy()
    A = csr(0.5 * (A + A.T))
    return CurlCurlSystem(A, As, Am, G, float(beta), free_edges, free_nodes)


def interior_node_rows(system):
    """Rows of G with a single nonzero: free edges touching the boundary.

    These are the rows Algorithm 1-style boundary augmentation acts on.
    """
    counts = np.diff(system.G.indptr)
    return np.flatnonzero(counts == 1)
