"""Continuous piecewise-linear fields and the difference operators on them.

The single-point operators here (:func:`forward_difference`,
:func:`centered_second_difference`, ...) locate every probe on the fly.
:class:`ProbeStencil` precomputes the same probes once per
(mesh, frames, delta) so the solver can evaluate them in bulk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidDataError, OutOfDomainError
from .mesh import (_segment_distances, locate_point, locate_points,
                   nearest_boundary_point)

E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])


@dataclass(eq=False)
class NodalField:
    """One value per mesh vertex, evaluated piecewise-linearly."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise InvalidDataError(
                f"expected {self.mesh.n_vertices} nodal values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidDataError("nodal values must be finite")

    def copy(self):
        return NodalField(self.mesh, self.values.copy())


@dataclass(frozen=True)
class EpsilonParams:
    """The discretisation triple (h, delta, theta)."""

    delta: float
    theta: float
    mesh_h: float
    # delta > h is the scheme's standing assumption; single-cell desk checks
    # (m = 2, delta = 1/2) need to switch it off
    scale_separation: bool = True

    def __post_init__(self):
        if not (self.mesh_h > 0 and self.delta > 0):
            raise InvalidArgumentError(
                f"need delta > 0 and h > 0, got delta={self.delta}, h={self.mesh_h}")
        if self.scale_separation and not self.delta > self.mesh_h:
            raise InvalidArgumentError(
                f"need delta > h > 0, got delta={self.delta}, h={self.mesh_h}")
        if not (0 < self.theta <= math.pi / 2):
            raise InvalidArgumentError(f"theta must lie in (0, pi/2], got {self.theta}")


def interpolate(mesh, g):
    """Lagrange interpolant: g sampled at every vertex."""
    vals = np.array([g(p) for p in mesh.vertices], dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise InvalidDataError(f"g is not finite at vertex {bad} {mesh.vertices[bad].tolist()}")
    return NodalField(mesh, vals)


def _clamped(lam):
    lam = np.maximum(lam, 0.0)
    return lam / lam.sum()


def evaluate(field, x, locator=None):
    hit = locate_point(field.mesh, x, locator)
    if hit is None:
        raise OutOfDomainError(f"point {np.asarray(x).tolist()} lies outside the meshed region")
    t, lam = hit
    return float(_clamped(lam) @ field.values[field.mesh.triangles[t]])


def delta_at_node(params, mesh, i):
    if mesh.is_boundary()[i]:
        raise InvalidArgumentError(f"node {i} is a boundary node")
    e = mesh.boundary_edges
    dist = _segment_distances(mesh.vertices[i], mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]])
    return float(min(params.delta, dist.min()))


def forward_difference(field, i, v, delta_i, locator=None):
    x = field.mesh.vertices[i]
    return (evaluate(field, x + delta_i * np.asarray(v), locator) - field.values[i]) / delta_i


def centered_second_difference(field, i, v, delta_i, locator=None):
    x = field.mesh.vertices[i]
    v = np.asarray(v, dtype=float)
    wp = evaluate(field, x + delta_i * v, locator)
    wm = evaluate(field, x - delta_i * v, locator)
    # summing the two probes first keeps the v <-> -v symmetry exact
    return ((wp + wm) - 2.0 * field.values[i]) / delta_i ** 2


def gradient_probe(field, i, delta_i, locator=None):
    return np.array([forward_difference(field, i, E1, delta_i, locator),
                     forward_difference(field, i, E2, delta_i, locator)])


def extend_to_domain(field, x):
    """Value at x in the closed domain; outside the meshed region the value
    at the nearest point of its boundary is used."""
    mesh = field.mesh
    x = np.asarray(x, dtype=float)
    hit = locate_point(mesh, x)
    if hit is not None:
        t, lam = hit
        return float(_clamped(lam) @ field.values[mesh.triangles[t]])
    if not mesh.domain.contains(x):
        raise OutOfDomainError(f"point {x.tolist()} lies outside the domain")
    _, k, t = nearest_boundary_point(mesh, x)
    a, b = mesh.boundary_edges[k]
    return float((1.0 - t) * field.values[a] + t * field.values[b])


def extend_many(field, points):
    """Vectorised :func:`extend_to_domain` (no domain-membership check)."""
    mesh = field.mesh
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    tri, lam = locate_points(mesh, pts)
    out = np.empty(len(pts))
    inside = tri >= 0
    lam_in = np.maximum(lam[inside], 0.0)
    lam_in /= lam_in.sum(axis=1)[:, None]
    out[inside] = np.einsum("pk,pk->p", lam_in, field.values[mesh.triangles[tri[inside]]])
    for p in np.flatnonzero(~inside):
        _, k, t = nearest_boundary_point(mesh, pts[p])
        a, b = mesh.boundary_edges[k]
        out[p] = (1.0 - t) * field.values[a] + t * field.values[b]
    return out


class ProbeStencil:
    """All probe locations x_i +- delta_i v_j for the frame directions.

    ``dirs`` holds the M/2 directions used by frames, with frame k made of
    columns k and k + quarter; e1 is column 0 and e2 is column ``quarter``.
    """

    def __init__(self, mesh, frames, delta):
        self.mesh = mesh
        self.frames = frames
        self.delta = float(delta)
        self.nodes = np.ascontiguousarray(mesh.interior_nodes, dtype=np.int64)
        self.dirs = np.ascontiguousarray(frames.half_directions, dtype=float)
        self.quarter = len(frames)
        if not (np.array_equal(self.dirs[0], E1) and np.array_equal(self.dirs[self.quarter], E2)):
            raise InvalidArgumentError("frame columns 0 and M/4 must be exactly e1 and e2")
        self.x = np.ascontiguousarray(mesh.vertices[self.nodes])
        n, nd = len(self.nodes), len(self.dirs)

        e = mesh.boundary_edges
        a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
        dist = np.empty(n)
        for lo in range(0, n, 512):
            xs = self.x[lo:lo + 512, None, :]
            ab = b - a
            t = np.clip(np.einsum("pej,ej->pe", xs - a, ab) / np.einsum("ej,ej->e", ab, ab),
                        0.0, 1.0)
            proj = a + t[..., None] * ab
            dist[lo:lo + 512] = np.linalg.norm(xs - proj, axis=2).min(axis=1)
        self.dist = dist
        self.dlt = np.minimum(self.delta, dist)

        sign = np.array([1.0, -1.0])
        pts = (self.x[:, None, None, :]
               + sign[None, None, :, None] * self.dlt[:, None, None, None]
               * self.dirs[None, :, None, :])
        tri, lam = locate_points(mesh, pts.reshape(-1, 2))
        if np.any(tri < 0):
            bad = int(np.flatnonzero(tri < 0)[0]) // (2 * nd)
            raise OutOfDomainError(
                f"stencil probe of node {int(self.nodes[bad])} leaves the meshed region")
        lam = np.maximum(lam, 0.0)
        lam /= lam.sum(axis=1)[:, None]
        self.pidx = np.ascontiguousarray(mesh.triangles[tri].reshape(n, nd, 2, 3))
        self.pw = np.ascontiguousarray(lam.reshape(n, nd, 2, 3))
        self.slot = -np.ones(mesh.n_vertices, dtype=np.int64)
        self.slot[self.nodes] = np.arange(n)

    def center_weights(self):
        """Weight of each node's own value in each of its probes, (n, nd, 2)."""
        return np.where(self.pidx == self.nodes[:, None, None, None], self.pw, 0.0).sum(axis=3)
