"""Conforming triangulations of polygonal domains.

Local conventions used throughout the package:

* triangles are stored counterclockwise;
* local edge ``i`` of a triangle is opposite local vertex ``i``, i.e. it joins
  local vertices ``LOCAL_EDGES[i]`` (first index smaller);
* a global edge is stored with its lower vertex index first, its tangent runs
  from the lower to the higher vertex and its normal is that tangent rotated
  clockwise.
"""
from fractions import Fraction

import numpy as np

LOCAL_EDGES = np.array([[1, 2], [0, 2], [0, 1]])

# removed rectangles [x0, x1] x [y0, y1] inside [1, 2]^2, plus the grid granularity
_LSHAPES = {
    "omega1": ([(1, Fraction(3, 2), 1, Fraction(3, 2))], 2),
    "omega2": (
        [
            (1, Fraction(4, 3), Fraction(4, 3), Fraction(5, 3)),
            (1, Fraction(5, 3), 1, Fraction(4, 3)),
        ],
        3,
    ),
    "omega5": ([(Fraction(3, 2), 2, 1, Fraction(3, 2))], 2),
}
_LSHAPES["omega6"] = _LSHAPES["omega2"]

DOMAINS = ("unit_square",) + tuple(_LSHAPES)


def _readonly(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


class Mesh:
    """Immutable 2D simplicial mesh with edge connectivity.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    triangles : array_like, shape (nt, 3)
        Vertex indices. Clockwise triangles are reoriented.
    """

    def __init__(self, vertices, triangles):
        p = np.array(vertices, dtype=float).reshape(-1, 2)
        t = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) == 0:
            raise ValueError("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(p):
            raise ValueError("triangle references a missing vertex")

        area2 = _signed_area2(p, t)
        flip = area2 < 0
        t[flip] = t[flip][:, [0, 2, 1]]
        area2 = np.abs(area2)
        if np.any(area2 <= 1e-14 * max(1.0, np.ptp(p) ** 2)):
            raise ValueError("degenerate triangle in mesh")

        self.vertices = _readonly(p, float)
        self.triangles = _readonly(t, np.int64)
        self.areas = _readonly(0.5 * area2, float)
        self._build_edges()

    def _build_edges(self):
        t = self.triangles
        nt = len(t)
        pairs = np.sort(t[:, LOCAL_EDGES].reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.reshape(nt, 3)

        counts = np.bincount(inverse.ravel(), minlength=len(edges))
        if counts.max() > 2:
            raise ValueError("non-manifold mesh: an edge has more than 2 triangles")

        # incident triangles, lower triangle index first; -1 if boundary
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        owner = np.repeat(np.arange(nt), 3)
        flat = inverse.ravel()
        order = np.lexsort((owner, flat))
        flat, owner = flat[order], owner[order]
        first = np.ones(len(flat), dtype=bool)
        first[1:] = flat[1:] != flat[:-1]
        edge_tris[flat[first], 0] = owner[first]
        edge_tris[flat[~first], 1] = owner[~first]

        boundary_edge = edge_tris[:, 1] < 0
        boundary_vertex = np.zeros(len(self.vertices), dtype=bool)
        boundary_vertex[edges[boundary_edge].ravel()] = True

        p = self.vertices
        h_F = np.linalg.norm(p[edges[:, 1]] - p[edges[:, 0]], axis=1)

        self.edges = _readonly(edges, np.int64)
        self.tri_edges = _readonly(inverse, np.int64)
        self.edge_triangles = _readonly(edge_tris, np.int64)
        self.boundary_edges = _readonly(boundary_edge, bool)
        self.boundary_vertices = _readonly(boundary_vertex, bool)
        self.h_F = _readonly(h_F, float)
        self.h_K = _readonly(h_F[inverse].max(axis=1), float)

    # basic counts -----------------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def h(self):
        """Mesh size, the largest triangle diameter."""
        return float(self.h_K.max())

    @property
    def area(self):
        return float(self.areas.sum())

    def euler_characteristic(self):
        return self.num_vertices - self.num_edges + self.num_triangles

    # geometry -----------------------------------------------------------------

    def jacobians(self, cells=None):
        """Affine maps x = x0 + J xhat of the given cells.

        Returns ``(x0, J, detJ, Jinv)`` with shapes (c, 2), (c, 2, 2), (c,),
        (c, 2, 2).
        """
        t = self.triangles if cells is None else self.triangles[cells]
        p = self.vertices
        x0 = p[t[:, 0]]
        J = np.stack([p[t[:, 1]] - x0, p[t[:, 2]] - x0], axis=2)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(np.abs(det) < 1e-14):
            raise ValueError("degenerate Jacobian (|detJ| < 1e-14)")
        Jinv = np.empty_like(J)
        Jinv[:, 0, 0] = J[:, 1, 1] / det
        Jinv[:, 1, 1] = J[:, 0, 0] / det
        Jinv[:, 0, 1] = -J[:, 0, 1] / det
        Jinv[:, 1, 0] = -J[:, 1, 0] / det
        return x0, J, det, Jinv

    def map_points(self, ref_points, cells=None):
        """Physical coordinates of reference points, shape (c, q, 2).

        ``ref_points`` is (q, 2) shared by all cells or (c, q, 2).
        """
        x0, J, _, _ = self.jacobians(cells)
        return x0[:, None, :] + np.einsum("cij,...qj->cqi", J, ref_points)

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def edge_normals(self):
        """Unit normals of the global edges (tangent rotated clockwise)."""
        p = self.vertices
        t = p[self.edges[:, 1]] - p[self.edges[:, 0]]
        return np.column_stack([t[:, 1], -t[:, 0]]) / self.h_F[:, None]

    def edge_orientation(self):
        """Sign per (triangle, local edge): +1 when the local edge runs from the
        lower to the higher global vertex, -1 otherwise."""
        t = self.triangles
        a = t[:, LOCAL_EDGES[:, 0]]
        b = t[:, LOCAL_EDGES[:, 1]]
        return np.where(a < b, 1, -1)

    # point location -----------------------------------------------------------

    def _buckets(self):
        if getattr(self, "_bucket_cache", None) is None:
            p = self.vertices
            lo = p.min(axis=0)
            hi = p.max(axis=0)
            nb = max(1, int(np.sqrt(self.num_triangles / 2)))
            size = np.maximum((hi - lo) / nb, 1e-300)
            tp = p[self.triangles]
            bmin = np.clip(((tp.min(axis=1) - lo) / size).astype(int), 0, nb - 1)
            bmax = np.clip(((tp.max(axis=1) - lo) / size).astype(int), 0, nb - 1)
            cells, tris = [], []
            for tri in range(self.num_triangles):
                ix = np.arange(bmin[tri, 0], bmax[tri, 0] + 1)
                iy = np.arange(bmin[tri, 1], bmax[tri, 1] + 1)
                b = (ix[:, None] * nb + iy[None, :]).ravel()
                cells.append(b)
                tris.append(np.full(len(b), tri))
            cells = np.concatenate(cells)
            tris = np.concatenate(tris)
            order = np.lexsort((tris, cells))
            cells, tris = cells[order], tris[order]
            ptr = np.searchsorted(cells, np.arange(nb * nb + 1))
            self._bucket_cache = (lo, size, nb, ptr, tris)
        return self._bucket_cache

    def locate_points(self, points, tol=1e-12):
        """Locate many points at once.

        Returns ``(cells, bary)`` where ``bary`` has shape (n, 3). A point on a
        shared edge or vertex is assigned to the lowest-index triangle
        containing it. Raises ``ValueError`` if any point is outside.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        lo, size, nb, ptr, tris = self._buckets()
        scale = max(1.0, float(np.ptp(self.vertices)))
        slack = tol * scale
        ij = np.floor((pts - lo) / size).astype(int)
        # points within slack of a bucket border may belong to the neighbour
        result = np.full(len(pts), -1, dtype=np.int64)
        bary = np.zeros((len(pts), 3))
        for dx in (0, -1, 1):
            for dy in (0, -1, 1):
                todo = np.flatnonzero(result < 0)
                if len(todo) == 0:
                    break
                b = ij[todo] + [dx, dy]
                if dx or dy:
                    frac = (pts[todo] - lo) / size - ij[todo]
                    near = np.ones(len(todo), dtype=bool)
                    if dx:
                        near &= (frac[:, 0] < 1e-9) if dx < 0 else (frac[:, 0] > 1 - 1e-9)
                    if dy:
                        near &= (frac[:, 1] < 1e-9) if dy < 0 else (frac[:, 1] > 1 - 1e-9)
                    todo, b = todo[near], b[near]
                b = np.clip(b, 0, nb - 1)
                self._search(pts, todo, b[:, 0] * nb + b[:, 1], ptr, tris, slack,
                             result, bary)
        if np.any(result < 0):
            bad = pts[result < 0][0]
            raise ValueError(f"point {tuple(bad)} is outside the mesh")
        return result, bary

    def _search(self, pts, todo, bucket, ptr, tris, slack, result, bary):
        if len(todo) == 0:
            return
        counts = ptr[bucket + 1] - ptr[bucket]
        q = np.repeat(todo, counts)
        starts = np.repeat(ptr[bucket] - np.cumsum(counts) + counts, counts)
        cand = tris[starts + np.arange(counts.sum())]
        lam = _barycentric(self.vertices, self.triangles[cand], pts[q])
        ok = np.all(lam >= -slack, axis=1)
        q, cand, lam = q[ok], cand[ok], lam[ok]
        # candidates are sorted by triangle index within a bucket
        order = np.lexsort((cand, q))
        q, cand, lam = q[order], cand[order], lam[order]
        first = np.ones(len(q), dtype=bool)
        first[1:] = q[1:] != q[:-1]
        result[q[first]] = cand[first]
        lam = np.clip(lam[first], 0.0, 1.0)
        bary[q[first]] = lam / lam.sum(axis=1, keepdims=True)

    def locate_point(self, point, tol=1e-12):
        """Containing triangle and barycentric coordinates of one point."""
        cells, bary = self.locate_points(np.asarray(point, dtype=float)[None], tol)
        return int(cells[0]), bary[0]

    # io -----------------------------------------------------------------------

    def save(self, path):
        """Write the plain-text mesh format (0-based triangle indices)."""
        with open(path, "w") as fh:
            fh.write(f"{self.num_vertices}\n")
            for x, y in self.vertices:
                fh.write(f"{float(x)!r} {float(y)!r}\n")
            fh.write(f"{self.num_triangles}\n")
            for a, b, c in self.triangles:
                fh.write(f"{a} {b} {c}\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            tokens = fh.read().split()
        try:
            nv = int(tokens[0])
            coords = np.array(tokens[1:1 + 2 * nv], dtype=float).reshape(nv, 2)
            nt = int(tokens[1 + 2 * nv])
            tri = np.array(tokens[2 + 2 * nv:2 + 2 * nv + 3 * nt], dtype=np.int64)
            tri = tri.reshape(nt, 3)
        except (IndexError, ValueError) as exc:
            raise ValueError(f"malformed mesh file {path}: {exc}") from None
        return cls(coords, tri)

    def __repr__(self):
        return (f"Mesh(nv={self.num_vertices}, ne={self.num_edges}, "
                f"nt={self.num_triangles}, h={self.h:.4g})")


def _signed_area2(p, t):
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])


def _barycentric(p, tri, pts):
    a, b, c = p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    d = pts - a
    l1 = (d[:, 0] * (c[:, 1] - a[:, 1]) - d[:, 1] * (c[:, 0] - a[:, 0])) / det
    l2 = ((b[:, 0] - a[:, 0]) * d[:, 1] - (b[:, 1] - a[:, 1]) * d[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


def _grid_mesh(x0, y0, n, nx, ny, keep=None):
    """Cells of side 1/n with lower-left corner (x0, y0), each split by the
    diagonal through its lower-left and upper-right corners."""
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    if keep is not None:
        mask = keep(i, j)
        i, j = i[mask], j[mask]
    vid = lambda a, b: b * (nx + 1) + a
    v0, v1, v2, v3 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
    order = np.argsort(j * nx + i, kind="stable")
    tris = np.empty((2 * len(i), 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v0, v1, v3])[order]
    tris[1::2] = np.column_stack([v0, v3, v2])[order]

    gx, gy = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
    verts = np.column_stack([x0 + gx.ravel() / n, y0 + gy.ravel() / n])
    used, tris = np.unique(tris, return_inverse=True)
    return Mesh(verts[used], tris.reshape(-1, 3))


def generate_square_mesh(n):
    """Uniform n x n mesh of the unit square, h = sqrt(2)/n."""
    n = int(n)
    if n < 1:
        raise ValueError(f"need at least one cell per side, got n={n}")
    return _grid_mesh(0.0, 0.0, n, n, n)


def generate_lshape_mesh(domain, n):
    """Structured mesh of one of the L-shaped subdomains of [1, 2]^2.

    ``domain`` is ``"omega1"`` ([1,2]^2 minus [1,1.5]^2), ``"omega2"`` /
    ``"omega6"`` ([1,2]^2 minus [1,4/3]x[4/3,5/3] and [1,5/3]x[1,4/3]) or
    ``"omega5"`` ([1,2]^2 minus [1.5,2]x[1,1.5]). ``n`` is the number of cells
    per unit length and must be a multiple of 2 (omega1, omega5) or 3
    (omega2, omega6).
    """
    key = domain.lower()
    if key not in _LSHAPES:
        raise ValueError(f"unknown domain {domain!r}; choose from {sorted(_LSHAPES)}")
    holes, gran = _LSHAPES[key]
    n = int(n)
    if n < 1 or n % gran:
        raise ValueError(f"n={n} is not a positive multiple of {gran} for {domain}")

    def keep(i, j):
        mask = np.ones(len(i), dtype=bool)
        for xa, xb, ya, yb in holes:
            ia, ib = int((xa - 1) * n), int((xb - 1) * n)
            ja, jb = int((ya - 1) * n), int((yb - 1) * n)
            mask &= ~((i >= ia) & (i < ib) & (j >= ja) & (j < jb))
        return mask

    return _grid_mesh(1.0, 1.0, n, n, n, keep)


def domain_mesh(domain, n):
    if domain == "unit_square":
        return generate_square_mesh(n)
    return generate_lshape_mesh(domain, n)


def uniform_refine(mesh):
    """Split every triangle into four by its edge midpoints."""
    p = mesh.vertices
    nv = mesh.num_vertices
    mid = 0.5 * (p[mesh.edges[:, 0]] + p[mesh.edges[:, 1]])
    verts = np.vstack([p, mid])
    t = mesh.triangles
    m = nv + mesh.tri_edges  # midpoint of the edge opposite each local vertex
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    m_bc, m_ac, m_ab = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack(
        [
            np.column_stack([a, m_ab, m_ac]),
            np.column_stack([m_ab, b, m_bc]),
            np.column_stack([m_ac, m_bc, c]),
            np.column_stack([m_ab, m_bc, m_ac]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Mesh(verts, children)
