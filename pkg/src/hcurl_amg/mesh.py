"""2D triangular/quadrilateral meshes with globally oriented edges.

Every edge is stored tail < head (global orientation convention); per-cell
orientation signs record whether the counterclockwise traversal of a cell
agrees with the stored direction.  Uniform refinement keeps parent maps so
transfer operators can be built level by level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mesh2D",
    "RefinementMap",
    "CoefficientField",
    "mesh_from_cells",
    "uniform_tri_mesh",
    "uniform_quad_mesh",
    "refine",
    "load_mesh",
    "save_mesh",
    "delaunay_mesh",
    "uniform_mu",
    "assign_mu_stripes",
    "assign_mu_regions",
]


@dataclass
class Mesh2D:
    """Oriented 2D mesh (all triangles or all quadrilaterals).

    vertices : (nv, 2) float coordinates
    cells : (nc, 3|4) vertex indices, counterclockwise
    edges : (ne, 2) vertex indices with tail < head
    cell_edges : (nc, k) edge index of each local cell side
    cell_edge_signs : (nc, k) +1 where the CCW traversal runs tail->head
    boundary_edge / boundary_vertex : boolean flags
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray = field(default=None)
    cell_edges: np.ndarray = field(default=None)
    cell_edge_signs: np.ndarray = field(default=None)
    boundary_edge: np.ndarray = field(default=None)
    boundary_vertex: np.ndarray = field(default=None)

    @property
    def nv(self):
        return len(self.vertices)

    @property
    def nc(self):
        return len(self.cells)

    @property
    def ne(self):
        return len(self.edges)

    def cell_centroids(self):
        return self.vertices[self.cells].mean(axis=1)


@dataclass
class RefinementMap:
    """Parent bookkeeping of one uniform refinement step.

    coarse_edge_children : (ne_coarse, 2) fine edge indices, ordered
        tail-to-head along the coarse edge (the two halves meet at the
        edge midpoint)
    vertex_kind / vertex_parent : fine vertex provenance; kind 0 = coarse
        vertex, 1 = edge midpoint, 2 = cell center, parent the matching index
    cell_children : (nc_coarse, 4) fine cell indices
    """

    coarse_edge_children: np.ndarray
    vertex_kind: np.ndarray
    vertex_parent: np.ndarray
    cell_children: np.ndarray


@dataclass
class CoefficientField:
    """Piecewise-constant positive coefficient, one value per cell."""

    mu: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if np.any(self.mu <= 0):
            raise ValueError("coefficient values must be positive")


def _cell_local_sides(k):
    return [(a, (a + 1) % k) for a in range(k)]


def _signed_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def mesh_from_cells(vertices, cells, fix_orientation=False):
    """Derive edges, orientations and boundary flags from vertices + cells.

    Edges are sorted lexicographically by (tail, head), which makes the
    numbering independent of the cell order.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    cells = np.asarray(cells, dtype=np.int64)
    if cells.ndim != 2 or cells.shape[1] not in (3, 4):
        raise ValueError("cells must be (nc, 3) or (nc, 4)")
    nv = len(vertices)
    if cells.size and (cells.min() < 0 or cells.max() >= nv):
        raise ValueError("cell vertex index out of range")
    used = np.zeros(nv, dtype=bool)
    used[cells.ravel()] = True
    if not used.all():
        raise ValueError(f"dangling vertex {int(np.flatnonzero(~used)[0])}")
    for c in range(len(cells)):
        if _signed_area(vertices[cells[c]]) <= 0:
            if not fix_orientation:
                raise ValueError(f"cell {c} is not counterclockwise")
            warnings.warn(f"cell {c} was not counterclockwise; flipped")
            cells[c] = cells[c, ::-1]

    k = cells.shape[1]
    sides = _cell_local_sides(k)
    edge_index = {}
    edge_count = {}
    for cell in cells:
        for a, b in sides:
            key = (min(cell[a], cell[b]), max(cell[a], cell[b]))
            edge_count[key] = edge_count.get(key, 0) + 1
    edges = np.array(sorted(edge_count), dtype=np.int64).reshape(-1, 2)
    for i, key in enumerate(map(tuple, edges)):
        edge_index[key] = i

    nc = len(cells)
    cell_edges = np.empty((nc, k), dtype=np.int64)
    cell_edge_signs = np.empty((nc, k), dtype=np.int64)
    for c, cell in enumerate(cells):
        for s, (a, b) in enumerate(sides):
            t, h = int(cell[a]), int(cell[b])
            e = edge_index[(min(t, h), max(t, h))]
            cell_edges[c, s] = e
            cell_edge_signs[c, s] = 1 if t < h else -1

    boundary_edge = np.array([edge_count[tuple(e)] == 1 for e in edges])
    if np.any(np.array(list(edge_count.values())) > 2):
        raise ValueError("non-manifold edge (more than two incident cells)")
    boundary_vertex = np.zeros(nv, dtype=bool)
    boundary_vertex[edges[boundary_edge].ravel()] = True
    return Mesh2D(vertices, cells, edges, cell_edges, cell_edge_signs,
                  boundary_edge, boundary_vertex)


def uniform_tri_mesh(L):
    """Uniform triangulation of the unit square with (2^L+1)^2 vertices.

    Each grid square is split along its lower-left/upper-right diagonal.
    """
    if L < 0:
        raise ValueError("refinement level must be >= 0")
    n = 2 ** L
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01 = v00 + 1, v00 + n + 1
            v11 = v01 + 1
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    return mesh_from_cells(vertices, np.array(cells))


def uniform_quad_mesh(L):
    """Uniform quadrilateral mesh of the unit square, 4^L cells."""
    if L < 0:
        raise ValueError("refinement level must be >= 0")
    n = 2 ** L
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            cells.append((v00, v00 + 1, v00 + n + 2, v00 + n + 1))
    return mesh_from_cells(vertices, np.array(cells))


def refine(mesh):
    """One uniform refinement sweep.

    Triangles refine red (edge midpoints, 4 children); quadrilaterals gain a
    center vertex and split into 4.  Returns the fine mesh and the parent map.
    """
    nv, ne, nc = mesh.nv, mesh.ne, mesh.nc
    k = mesh.cells.shape[1]
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    if k == 3:
        fine_vertices = np.vstack([mesh.vertices, midpoints])
    else:
        centers = mesh.cell_centroids()
        fine_vertices = np.vstack([mesh.vertices, midpoints, centers])

    sides = _cell_local_sides(k)

    def mid(c, a, b):
        # midpoint vertex of the coarse edge on cell side (a, b)
        return nv + mesh.cell_edges[c, sides.index((a, b))]

    fine_cells = []
    cell_children = np.empty((nc, 4), dtype=np.int64)
    for c in range(nc):
        if k == 3:
            v0, v1, v2 = mesh.cells[c]
            m01, m12, m20 = mid(c, 0, 1), mid(c, 1, 2), mid(c, 2, 0)
            children = [(v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)]
        else:
            v0, v1, v2, v3 = mesh.cells[c]
            m01, m12, m23, m30 = mid(c, 0, 1), mid(c, 1, 2), mid(c, 2, 3), mid(c, 3, 0)
            ctr = nv + ne + c
            children = [(v0, m01, ctr, m30), (m01, v1, m12, ctr),
                        (ctr, m12, v2, m23), (m30, ctr, m23, v3)]
        cell_children[c] = np.arange(len(fine_cells), len(fine_cells) + 4)
        fine_cells.extend(children)

    fine = mesh_from_cells(fine_vertices, np.array(fine_cells))

    fine_edge_index = {tuple(e): i for i, e in enumerate(fine.edges)}
    children = np.empty((ne, 2), dtype=np.int64)
    for e in range(ne):
        t, h = mesh.edges[e]
        m = nv + e
        children[e, 0] = fine_edge_index[(min(t, m), max(t, m))]
        children[e, 1] = fine_edge_index[(min(h, m), max(h, m))]

    vertex_kind = np.zeros(len(fine_vertices), dtype=np.int8)
    vertex_parent = np.zeros(len(fine_vertices), dtype=np.int64)
    vertex_parent[:nv] = np.arange(nv)
    vertex_kind[nv:nv + ne] = 1
    vertex_parent[nv:nv + ne] = np.arange(ne)
    if k == 4:
        vertex_kind[nv + ne:] = 2
        vertex_parent[nv + ne:] = np.arange(nc)

    return fine, RefinementMap(children, vertex_kind, vertex_parent, cell_children)


def refinement_chain(base, nrefine):
    """Refine ``base`` repeatedly; returns (meshes coarse->fine, maps)."""
    meshes = [base]
    rmaps = []
    for _ in range(nrefine):
        fine, rmap = refine(meshes[-1])
        meshes.append(fine)
        rmaps.append(rmap)
    return meshes, rmaps


def load_mesh(text):
    """Parse the plain-text mesh format.

    Line 1 is "NV NC", then NV lines "x y", then NC lines of 3 (or 4)
    0-based vertex indices.  Clockwise cells are flipped with a warning.
    """
    tokens = [ln.split() for ln in text.splitlines() if ln.strip()]
    try:
        nv, nc = int(tokens[0][0]), int(tokens[0][1])
        vertices = np.array([[float(t[0]), float(t[1])] for t in tokens[1:1 + nv]])
        cell_rows = tokens[1 + nv:1 + nv + nc]
        if len(vertices) != nv or len(cell_rows) != nc:
            raise IndexError
        width = len(cell_rows[0])
        if width not in (3, 4) or any(len(r) != width for r in cell_rows):
            raise ValueError("cells must all have 3 or 4 vertices")
        cells = np.array([[int(v) for v in r] for r in cell_rows])
    except (IndexError, ValueError) as err:
        raise ValueError(f"malformed mesh file: {err}") from err
    return mesh_from_cells(vertices, cells, fix_orientation=True)


def save_mesh(mesh):
    """Serialize a mesh in the same text format load_mesh reads."""
    lines = [f"{mesh.nv} {mesh.nc}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [" ".join(str(int(v)) for v in cell) for cell in mesh.cells]
    return "\n".join(lines) + "\n"


def _circumcircle(p0, p1, p2):
    ax, ay = p0
    bx, by = p1
    cx, cy = p2
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return np.array([np.inf, np.inf]), np.inf
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
          + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
          + (cx * cx + cy * cy) * (bx - ax)) / d
    center = np.array([ux, uy])
    return center, float(np.hypot(*(p0 - center)))


class _DegenerateInsertion(Exception):
    pass


def _bowyer_watson(points):
    """Bowyer-Watson incremental Delaunay triangulation.

    Raises _DegenerateInsertion when a point lands on a circumcircle within
    tolerance, so the caller can perturb and retry.
    """
    pts = list(map(np.asarray, points))
    n = len(pts)
    pts.extend([np.array([-9.0, -9.0]), np.array([11.0, -9.0]), np.array([0.5, 15.0])])
    s0, s1, s2 = n, n + 1, n + 2

    def with_circle(tri):
        center, radius = _circumcircle(pts[tri[0]], pts[tri[1]], pts[tri[2]])
        return tri, center, radius

    tris = [with_circle((s0, s1, s2))]
    for ip in range(n):
        p = pts[ip]
        bad = []
        for t_idx, (tri, center, radius) in enumerate(tris):
            dist = float(np.hypot(*(p - center)))
            if abs(dist - radius) <= 1e-12 * max(radius, 1.0):
                raise _DegenerateInsertion(ip)
            if dist < radius:
                bad.append(t_idx)
        edge_count = {}
        for t_idx in bad:
            tri = tris[t_idx][0]
            for a, b in ((0, 1), (1, 2), (2, 0)):
                key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
                edge_count[key] = edge_count.get(key, 0) + 1
        hole = [e for e, cnt in edge_count.items() if cnt == 1]
        for t_idx in sorted(bad, reverse=True):
            del tris[t_idx]
        for a, b in hole:
            tri = (ip, a, b)
            if _signed_area(np.array([pts[v] for v in tri])) < 0:
                tri = (ip, b, a)
            tris.append(with_circle(tri))
    return [t for t, _, _ in tris if s0 not in t and s1 not in t and s2 not in t]


def delaunay_mesh(npoints, seed=0):
    """Delaunay triangulation of the unit square built by Bowyer-Watson.

    The point set is the four corners, evenly spaced boundary points, and
    jittered interior grid points; cocircular degeneracies are perturbed by a
    deterministic epsilon and retried once.  Same seed, same mesh.
    """
    if npoints < 4:
        raise ValueError("need at least the 4 corner points")
    rng = np.random.default_rng(seed)
    corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    points = list(corners)
    rest = npoints - 4
    if rest > 0:
        kside = min(max(int(round(np.sqrt(npoints))) - 1, 0), rest // 4)
        for s in range(1, kside + 1):
            t = s / (kside + 1)
            points += [(t, 0.0), (1.0, t), (1.0 - t, 1.0), (0.0, 1.0 - t)]
        ninner = npoints - len(points)
        if ninner > 0:
            g = int(np.ceil(np.sqrt(ninner)))
            h = 1.0 / (g + 1)
            inner = []
            for j in range(1, g + 1):
                for i in range(1, g + 1):
                    inner.append((i * h, j * h))
            inner = np.array(inner[:ninner])
            inner += rng.uniform(-0.3 * h, 0.3 * h, size=inner.shape)
            points += [tuple(p) for p in inner]
    pts = np.array(points)

    try:
        tris = _bowyer_watson(pts)
    except _DegenerateInsertion:
        # deterministic epsilon jitter of the whole point set; the square is
        # then exact only to ~1e-9, which is immaterial downstream
        eps_rng = np.random.default_rng(seed + 1)
        pts = pts + eps_rng.uniform(-1e-9, 1e-9, size=pts.shape)
        tris = _bowyer_watson(pts)
    return mesh_from_cells(pts, np.array(tris))


def uniform_mu(mesh, value=1.0):
    """Constant coefficient field."""
    return CoefficientField(np.full(mesh.nc, value))


def assign_mu_stripes(mesh, fine_level, hi=10.0, lo=0.1):
    """Vertical stripes: column c of the 2^fine_level grid columns gets
    ``hi`` when c is even and ``lo`` when c is odd."""
    ncols = 2 ** fine_level
    col = np.clip((mesh.cell_centroids()[:, 0] * ncols).astype(int), 0, ncols - 1)
    return CoefficientField(np.where(col % 2 == 0, hi, lo))


def assign_mu_regions(mesh, boxes, default=1.0):
    """First axis-aligned box containing the cell centroid wins; else default.

    ``boxes`` is a list of ((xmin, ymin, xmax, ymax), value) pairs.
    """
    mu = np.full(mesh.nc, default)
    centroids = mesh.cell_centroids()
    assigned = np.zeros(mesh.nc, dtype=bool)
    for (xmin, ymin, xmax, ymax), value in boxes:
        if value <= 0:
            raise ValueError("coefficient values must be positive")
        inside = (~assigned
                  & (centroids[:, 0] >= xmin) & (centroids[:, 0] <= xmax)
                  & (centroids[:, 1] >= ymin) & (centroids[:, 1] <= ymax))
        mu[inside] = value
        assigned |= inside
    return CoefficientField(mu)


def checkerboard_boxes(k=4, lo=0.1, hi=10.0):
    """k x k alternating checkerboard of coefficient boxes on the unit square."""
    h = 1.0 / k
    boxes = []
    for j in range(k):
        for i in range(k):
            value = lo if (i + j) % 2 else hi
            boxes.append(((i * h, j * h, (i + 1) * h, (j + 1) * h), value))
    return boxes
