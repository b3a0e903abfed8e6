"""Convex domains and simplicial meshes of them.

Three domain kinds are supported: the unit square, a disc and a convex
polygon.  Meshes are immutable once built; point location keeps its walk
cache in a :class:`PointLocator` owned by the caller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import locate_batch as _locate_batch_kernel
from .errors import InvalidArgumentError, MeshError, OutOfDomainError

BARY_TOL = 1e-12

# dimension is carried on every mesh; only 2 has a code path
DIM = 2


@dataclass(frozen=True)
class UnitSquare:
    """The open unit square (0, 1)^2."""

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -tol) and np.all(x <= 1.0 + tol))

    @property
    def area(self):
        return 1.0

    @property
    def diameter(self):
        return math.sqrt(2.0)

    def max_sq_distance(self, p):
        """max over the closed domain of |x - p|^2."""
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        return float(np.max(np.sum((corners - np.asarray(p, float)) ** 2, axis=1)))

    def dist_to_closure(self, p):
        p = np.asarray(p, dtype=float)
        return float(np.linalg.norm(p - np.clip(p, 0.0, 1.0)))


@dataclass(frozen=True)
class Disc:
    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgumentError(f"disc radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def contains(self, x, tol=1e-12):
        d = np.linalg.norm(np.asarray(x, float) - np.asarray(self.center))
        return bool(d <= self.radius * (1.0 + tol))

    @property
    def area(self):
        return math.pi * self.radius ** 2

    @property
    def diameter(self):
        return 2.0 * self.radius

    def max_sq_distance(self, p):
        d = np.linalg.norm(np.asarray(p, float) - np.asarray(self.center))
        return float((d + self.radius) ** 2)

    def dist_to_closure(self, p):
        d = np.linalg.norm(np.asarray(p, float) - np.asarray(self.center))
        return float(max(d - self.radius, 0.0))

    def nearest_boundary_point(self, p):
        c = np.asarray(self.center)
        v = np.asarray(p, float) - c
        n = np.linalg.norm(v)
        if n == 0.0:
            # every boundary point is nearest; take the one along +x
            return c + np.array([self.radius, 0.0])
        return c + self.radius * v / n


@dataclass(frozen=True)
class Polygon:
    """Convex polygon, vertices listed counter-clockwise."""

    vertices: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvalidArgumentError("polygon needs at least three 2-D vertices")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross <= 0):
            raise InvalidArgumentError(
                "polygon vertices must be in strictly convex counter-clockwise position")
        object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))

    def _edges(self):
        v = np.asarray(self.vertices)
        return v, np.roll(v, -1, axis=0)

    def contains(self, x, tol=1e-12):
        a, b = self._edges()
        x = np.asarray(x, float)
        e = b - a
        w = x - a
        cross = e[:, 0] * w[:, 1] - e[:, 1] * w[:, 0]
        return bool(np.all(cross >= -tol * np.linalg.norm(e, axis=1)))

    @property
    def area(self):
        v = np.asarray(self.vertices)
        x, y = v[:, 0], v[:, 1]
        return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def diameter(self):
        v = np.asarray(self.vertices)
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=2)))

    def max_sq_distance(self, p):
        v = np.asarray(self.vertices)
        return float(np.max(np.sum((v - np.asarray(p, float)) ** 2, axis=1)))

    def dist_to_closure(self, p):
        if self.contains(p):
            return 0.0
        a, b = self._edges()
        return float(np.min(_segment_distances(np.asarray(p, float), a, b)))


ConvexDomain = UnitSquare | Disc | Polygon


def _segment_distances(x, a, b):
    """Distance from point x to each segment [a_k, b_k]."""
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", x - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(x - proj, axis=1)


def _segment_projections(x, a, b):
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", x - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return proj, t, np.linalg.norm(x - proj, axis=1)


@dataclass(eq=False)
class Mesh:
    """Conforming triangulation with interior/boundary node classification.

    Build with :func:`build_square_mesh`, :func:`build_disc_mesh` or
    :meth:`Mesh.from_arrays`; the derived fields are filled in there.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    interior_nodes: np.ndarray
    boundary_nodes: np.ndarray
    boundary_edges: np.ndarray
    h: float
    h_min: float
    shape_regularity: float
    domain: ConvexDomain
    dim: int = DIM
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_arrays(cls, vertices, triangles, domain):
        # private copies: the arrays are frozen below
        vertices = np.array(vertices, dtype=float, order="C")
        triangles = np.array(triangles, dtype=np.int64, order="C")
        a, b, c = (vertices[triangles[:, k]] for k in range(3))
        area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        flip = area2 < 0
        if np.any(flip):
            triangles[flip] = triangles[flip][:, [0, 2, 1]]
            area2 = np.abs(area2)
        if np.any(0.5 * area2 <= 1e-14):
            raise MeshError("degenerate triangle (area <= 1e-14)")

        la = np.linalg.norm(b - c, axis=1)
        lb = np.linalg.norm(c - a, axis=1)
        lc = np.linalg.norm(a - b, axis=1)
        diam = np.maximum(np.maximum(la, lb), lc)
        inradius = area2 / (la + lb + lc)

        edges = np.sort(np.concatenate(
            [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge")
        bedges = uniq[counts == 1]
        bnodes = np.unique(bedges)
        is_b = np.zeros(len(vertices), dtype=bool)
        is_b[bnodes] = True
        inodes = np.flatnonzero(~is_b)

        arrays = [vertices, triangles, inodes, bnodes, bedges]
        for arr in arrays:
            arr.setflags(write=False)
        return cls(vertices, triangles, inodes, bnodes, bedges, float(diam.max()),
                   float(diam.min()), float(np.max(diam / inradius)), domain)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def triangle_areas(self):
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def is_boundary(self):
        """Boolean mask over vertices."""
        mask = self._cache.get("is_boundary")
        if mask is None:
            mask = np.zeros(self.n_vertices, dtype=bool)
            mask[self.boundary_nodes] = True
            mask.setflags(write=False)
            self._cache["is_boundary"] = mask
        return mask

    def affine_inverses(self):
        """Per triangle, the origin vertex and the inverse of [b-a, c-a]."""
        cached = self._cache.get("affine")
        if cached is None:
            a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
            jac = np.stack([b - a, c - a], axis=2)  # columns b-a, c-a
            cached = (np.ascontiguousarray(a), np.ascontiguousarray(np.linalg.inv(jac)))
            self._cache["affine"] = cached
        return cached

    def neighbors(self):
        """neighbors[t, k] is the triangle across the edge opposite vertex k, or -1."""
        nb = self._cache.get("neighbors")
        if nb is None:
            nb = -np.ones((self.n_triangles, 3), dtype=np.int64)
            owner = {}
            for t, tri in enumerate(self.triangles.tolist()):
                for k in range(3):
                    key = tuple(sorted((tri[(k + 1) % 3], tri[(k + 2) % 3])))
                    if key in owner:
                        s, j = owner.pop(key)
                        nb[t, k] = s
                        nb[s, j] = t
                    else:
                        owner[key] = (t, k)
            self._cache["neighbors"] = nb
        return nb

    def vertex_stars(self):
        """CSR (offsets, triangle ids) of the triangles around each vertex."""
        star = self._cache.get("stars")
        if star is None:
            flat = self.triangles.ravel()
            order = np.argsort(flat, kind="stable")
            tris = order // 3
            counts = np.bincount(flat, minlength=self.n_vertices)
            offsets = np.concatenate([[0], np.cumsum(counts)])
            star = (offsets, np.ascontiguousarray(tris))
            self._cache["stars"] = star
        return star

    def buckets(self):
        """Uniform grid of triangle bounding boxes for batch location."""
        bk = self._cache.get("buckets")
        if bk is None:
            bk = _build_buckets(self)
            self._cache["buckets"] = bk
        return bk


def _build_buckets(mesh):
    v = mesh.vertices
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    n = max(1, int(math.sqrt(mesh.n_triangles / 2)))
    size = (hi - lo) / n
    size[size == 0] = 1.0
    pad = 1e-9 * max(1.0, float(np.max(hi - lo)))
    tv = v[mesh.triangles]
    tmin = np.floor((tv.min(axis=1) - pad - lo) / size).astype(np.int64).clip(0, n - 1)
    tmax = np.floor((tv.max(axis=1) + pad - lo) / size).astype(np.int64).clip(0, n - 1)
    cells = [[] for _ in range(n * n)]
    for t in range(mesh.n_triangles):
        for i in range(tmin[t, 0], tmax[t, 0] + 1):
            for j in range(tmin[t, 1], tmax[t, 1] + 1):
                cells[i * n + j].append(t)
    counts = np.array([len(c) for c in cells], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    ids = np.array([t for c in cells for t in c], dtype=np.int64)
    return lo.astype(float), size.astype(float), n, offsets, ids


def build_square_mesh(m):
    """Uniform triangulation of the unit square with m cells per side."""
    if int(m) != m or m < 2:
        raise InvalidArgumentError(f"m must be an integer >= 2, got {m}")
    m = int(m)
    g = np.arange(m + 1) / m
    xx, yy = np.meshgrid(g, g, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    idx = np.arange((m + 1) ** 2).reshape(m + 1, m + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    # split along the diagonal of positive slope (a -> c)
    tris = np.empty((2 * m * m, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])
    mesh = Mesh.from_arrays(vertices, tris, UnitSquare())
    mesh.h = math.sqrt(2.0) / m
    return mesh


def _refine(vertices, triangles):
    vertices = [tuple(p) for p in vertices]
    mid = {}
    out = []

    def midpoint(i, j):
        key = (i, j) if i < j else (j, i)
        k = mid.get(key)
        if k is None:
            p = 0.5 * (np.asarray(vertices[i]) + np.asarray(vertices[j]))
            k = len(vertices)
            vertices.append(tuple(p))
            mid[key] = k
        return k

    for a, b, c in triangles:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return np.array(vertices, dtype=float), np.array(out, dtype=np.int64)


def build_disc_mesh(domain, level):
    """Hexagon fan refined ``level`` times with radial boundary projection."""
    if not isinstance(domain, Disc):
        raise InvalidArgumentError("build_disc_mesh needs a Disc domain")
    if int(level) != level or level < 1:
        raise InvalidArgumentError(f"level must be an integer >= 1, got {level}")
    c = np.asarray(domain.center)
    r = domain.radius
    ang = np.arange(6) * math.pi / 3
    vertices = np.vstack([c, c + r * np.column_stack([np.cos(ang), np.sin(ang)])])
    triangles = np.array([(0, 1 + k, 1 + (k + 1) % 6) for k in range(6)], dtype=np.int64)
    for _ in range(int(level)):
        vertices, triangles = _refine(vertices, triangles)
        bnodes = Mesh.from_arrays(vertices, triangles, domain).boundary_nodes
        d = vertices[bnodes] - c
        vertices[bnodes] = c + r * d / np.linalg.norm(d, axis=1)[:, None]
    return Mesh.from_arrays(vertices, triangles, domain)


def build_polygon_mesh(domain, level):
    """Centroid fan of a convex polygon, uniformly refined ``level`` times."""
    if not isinstance(domain, Polygon):
        raise InvalidArgumentError("build_polygon_mesh needs a Polygon domain")
    if int(level) != level or level < 0:
        raise InvalidArgumentError(f"level must be an integer >= 0, got {level}")
    v = np.asarray(domain.vertices)
    n = len(v)
    vertices = np.vstack([v.mean(axis=0), v])
    triangles = np.array([(0, 1 + k, 1 + (k + 1) % n) for k in range(n)], dtype=np.int64)
    for _ in range(int(level)):
        vertices, triangles = _refine(vertices, triangles)
    return Mesh.from_arrays(vertices, triangles, domain)


def barycentric(mesh, t, x):
    a, inv = mesh.affine_inverses()
    l12 = inv[t] @ (np.asarray(x, float) - a[t])
    return np.array([1.0 - l12[0] - l12[1], l12[0], l12[1]])


class PointLocator:
    """Walk-from-last-hit point location; one instance per caller."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.last = 0

    def _lowest_containing(self, x, t, lam):
        # x sits on an edge or vertex of t: every triangle holding it is in
        # the star of t's dominant vertex
        offsets, ids = self.mesh.vertex_stars()
        v = self.mesh.triangles[t, int(np.argmax(lam))]
        best, best_lam = t, lam
        for s in ids[offsets[v]:offsets[v + 1]]:
            if s < best:
                ls = barycentric(self.mesh, s, x)
                if ls.min() >= -BARY_TOL:
                    best, best_lam = int(s), ls
        return best, best_lam

    def _brute(self, x):
        a, inv = self.mesh.affine_inverses()
        l12 = np.einsum("tij,tj->ti", inv, np.asarray(x, float) - a)
        lam = np.column_stack([1.0 - l12.sum(axis=1), l12])
        hit = np.flatnonzero(lam.min(axis=1) >= -BARY_TOL)
        if len(hit) == 0:
            return None
        return int(hit[0]), lam[hit[0]]

    def locate(self, x):
        mesh = self.mesh
        nb = mesh.neighbors()
        t = self.last if self.last < mesh.n_triangles else 0
        found = None
        for _ in range(mesh.n_triangles):
            lam = barycentric(mesh, t, x)
            k = int(np.argmin(lam))
            if lam[k] >= -BARY_TOL:
                found = (t, lam)
                break
            s = nb[t, k]
            if s < 0:
                break
            t = int(s)
        if found is None:
            found = self._brute(x)
            if found is None:
                return None
        t, lam = found
        if lam.min() <= BARY_TOL:
            t, lam = self._lowest_containing(x, t, lam)
        self.last = t
        return t, lam


def locate_point(mesh, x, locator=None):
    """Containing triangle and barycentric coordinates of x, or None.

    Points on shared edges or vertices resolve to the lowest triangle index.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (2,) or not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"expected a finite 2-D point, got {x!r}")
    loc = locator if locator is not None else PointLocator(mesh)
    return loc.locate(x)


def locate_points(mesh, points):
    """Vectorised :func:`locate_point`: (triangle ids, barycentrics).

    Missing points get triangle id -1.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    a, inv = mesh.affine_inverses()
    lo, size, n, offsets, ids = mesh.buckets()
    return _locate_batch_kernel(pts, a, inv, lo, size, n, offsets, ids, BARY_TOL)


def distance_to_boundary(mesh, x):
    """Distance from x in the closed mesh region to the mesh boundary."""
    x = np.asarray(x, dtype=float)
    if locate_point(mesh, x) is None:
        raise OutOfDomainError(f"point {x.tolist()} lies outside the meshed region")
    e = mesh.boundary_edges
    d = _segment_distances(x, mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]])
    return float(d.min())


def distances_to_boundary(mesh, nodes):
    """distance_to_boundary for many mesh vertices at once."""
    e = mesh.boundary_edges
    a = mesh.vertices[e[:, 0]]
    b = mesh.vertices[e[:, 1]]
    out = np.empty(len(nodes))
    for k, i in enumerate(nodes):
        out[k] = _segment_distances(mesh.vertices[i], a, b).min()
    return out


def nearest_boundary_point(mesh, x):
    """Nearest point of the mesh boundary and the edge it lies on.

    Ties go to the lowest boundary-edge index.
    """
    e = mesh.boundary_edges
    proj, t, d = _segment_projections(np.asarray(x, float), mesh.vertices[e[:, 0]],
                                      mesh.vertices[e[:, 1]])
    k = int(np.argmin(d))
    return proj[k], k, float(t[k])


def hausdorff_distance(mesh):
    """Hausdorff distance between the domain and the meshed region."""
    dom = mesh.domain
    if isinstance(dom, Disc):
        e = mesh.boundary_edges
        a = mesh.vertices[e[:, 0]]
        b = mesh.vertices[e[:, 1]]
        chord_mid = 0.5 * (a + b)
        return float(dom.radius - np.linalg.norm(chord_mid - np.asarray(dom.center), axis=1).min())
    return 0.0
