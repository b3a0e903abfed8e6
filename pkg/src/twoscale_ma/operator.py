"""Cost models A(x, p), the directional quantity Q and the two-scale operator T.

Pointwise functions (:func:`q_value`, :func:`apply_T`, ...) follow the
definitions literally on a :class:`~twoscale_ma.fe_field.NodalField`.
:class:`DiscreteOperator` evaluates the same quantities for all interior
nodes at once from a precomputed :class:`~twoscale_ma.fe_field.ProbeStencil`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .errors import ModelError
from .fe_field import (ProbeStencil, centered_second_difference, delta_at_node,
                       gradient_probe)
from .mesh import PointLocator


class CostKind(enum.Enum):
    ZERO = "zero"
    MINUS_IDENTITY = "minus_identity"
    LOG_COST = "log_cost"
    CUSTOM = "custom"


_KERNEL_CODE = {CostKind.ZERO: K.ZERO, CostKind.MINUS_IDENTITY: K.MINUS_IDENTITY,
                CostKind.LOG_COST: K.LOG_COST}


@dataclass(frozen=True)
class CostModel:
    """The matrix function A(x, p).

    ``ZERO`` gives the classical Monge-Ampere operator, ``MINUS_IDENTITY``
    comes from the quadratic cost and ``LOG_COST`` from c(x, y) = -log|x-y|.
    A ``CUSTOM`` model supplies ``callback(x, p) -> 2x2 array``.
    """

    kind: CostKind
    callback: Optional[Callable] = None
    lipschitz_hint: float = 0.0

    @classmethod
    def zero(cls):
        return cls(CostKind.ZERO)

    @classmethod
    def minus_identity(cls):
        return cls(CostKind.MINUS_IDENTITY)

    @classmethod
    def log_cost(cls):
        return cls(CostKind.LOG_COST)

    @classmethod
    def custom(cls, callback, lipschitz_hint=0.0):
        return cls(CostKind.CUSTOM, callback, float(lipschitz_hint))

    @classmethod
    def from_name(cls, name):
        try:
            kind = CostKind(name)
        except ValueError:
            raise ModelError(f"unknown cost model {name!r}") from None
        if kind is CostKind.CUSTOM:
            raise ModelError("custom cost models need a callback")
        return cls(kind)

    @property
    def p_independent(self):
        return self.kind in (CostKind.ZERO, CostKind.MINUS_IDENTITY)


def matrix_A(model, x, p):
    p = np.asarray(p, dtype=float)
    if model.kind is CostKind.ZERO:
        return np.zeros((2, 2))
    if model.kind is CostKind.MINUS_IDENTITY:
        return -np.eye(2)
    if model.kind is CostKind.LOG_COST:
        return float(p @ p) * np.eye(2) - 2.0 * np.outer(p, p)
    a = np.asarray(model.callback(np.asarray(x, float), p), dtype=float)
    if a.shape != (2, 2) or not np.all(np.isfinite(a)):
        raise ModelError(f"cost callback returned {a!r} at x={x}, p={p}")
    return 0.5 * (a + a.T)


def q_value(field, i, v, model, delta_i, locator=None):
    v = np.asarray(v, dtype=float)
    d2 = centered_second_difference(field, i, v, delta_i, locator)
    p = gradient_probe(field, i, delta_i, locator)
    return float(d2 - v @ matrix_A(model, field.mesh.vertices[i], p) @ v)


def frame_aggregate(q_pair):
    q = np.asarray(q_pair, dtype=float)
    return float(np.prod(np.maximum(q, 0.0)) - np.sum(np.maximum(-q, 0.0)))


def _frame_qs(field, i, model, frames, delta_i, locator):
    x = field.mesh.vertices[i]
    p = gradient_probe(field, i, delta_i, locator)
    a = matrix_A(model, x, p)
    out = np.empty((len(frames), 2))
    for k in range(len(frames)):
        for j, v in enumerate(frames.frame_vectors(k)):
            out[k, j] = centered_second_difference(field, i, v, delta_i, locator) - v @ a @ v
    return out


def apply_T(field, i, model, frames, params, locator=None):
    """(T value, minimising frame index) at interior node i."""
    loc = locator if locator is not None else PointLocator(field.mesh)
    d = delta_at_node(params, field.mesh, i)
    qs = _frame_qs(field, i, model, frames, d, loc)
    best, arg = np.inf, 0
    for k, pair in enumerate(qs):
        val = frame_aggregate(pair)
        if val < best:
            best, arg = val, k
    return best, arg


def residual(field, model, frames, params, f):
    """T - f at every interior node (in ``mesh.interior_nodes`` order)."""
    loc = PointLocator(field.mesh)
    out = np.empty(len(field.mesh.interior_nodes))
    for s, i in enumerate(field.mesh.interior_nodes):
        out[s] = apply_T(field, i, model, frames, params, loc)[0] - f(field.mesh.vertices[i])
    return out


def is_discretely_Q_convex(field, model, frames, params, tol=1e-9):
    """(ok, (node, frame, direction column, Q)) with the global minimiser as witness."""
    loc = PointLocator(field.mesh)
    worst = None
    for i in field.mesh.interior_nodes:
        d = delta_at_node(params, field.mesh, i)
        qs = _frame_qs(field, i, model, frames, d, loc)
        k, j = np.unravel_index(int(np.argmin(qs)), qs.shape)
        if worst is None or qs[k, j] < worst[3]:
            worst = (int(i), int(k), int(j), float(qs[k, j]))
    return worst[3] >= -tol, worst


class DiscreteOperator:
    """T and Q for every interior node, evaluated from a probe stencil.

    Built-in cost models run in compiled kernels; custom models use the
    same probe data through a NumPy path that calls the callback once per
    node.
    """

    def __init__(self, mesh, model, frames, params, stencil=None):
        self.mesh = mesh
        self.model = model
        self.frames = frames
        self.params = params
        self.stencil = stencil if stencil is not None else ProbeStencil(mesh, frames, params.delta)
        self.code = _KERNEL_CODE.get(model.kind)

    def _args(self):
        s = self.stencil
        return s.nodes, s.pidx, s.pw, s.dlt, s.dirs, s.quarter

    @property
    def compiled(self):
        return self.code is not None

    def node_qs(self, u, s, c=None):
        """Q along every stencil direction at slot s, centre value c."""
        st = self.stencil
        node = st.nodes[s]
        c = u[node] if c is None else c
        if self.compiled:
            q = np.empty(len(st.dirs))
            K.node_T(u, s, c, *self._args(), self.code, q)
            return q
        vals = np.where(st.pidx[s] == node, c, u[st.pidx[s]])
        w = np.einsum("jsk,jsk->js", st.pw[s], vals)
        d = st.dlt[s]
        p = np.array([(w[0, 0] - c) / d, (w[st.quarter, 0] - c) / d])
        a = matrix_A(self.model, st.x[s], p)
        vav = np.einsum("ji,ik,jk->j", st.dirs, a, st.dirs)
        return ((w[:, 0] + w[:, 1]) - 2.0 * c) / d ** 2 - vav

    def node_T(self, u, s, c=None):
        """(T, argmin frame) at slot s with the centre value set to c."""
        q = self.node_qs(u, s, c)
        h = self.stencil.quarter
        agg = (np.maximum(q[:h], 0.0) * np.maximum(q[h:], 0.0)
               - np.maximum(-q[:h], 0.0) - np.maximum(-q[h:], 0.0))
        k = int(np.argmin(agg))
        return float(agg[k]), k

    def T(self, u):
        """T at every interior node, plus the argmin frames."""
        u = np.ascontiguousarray(u, dtype=float)
        if self.compiled:
            return K.all_T(u, *self._args(), self.code)
        n = len(self.stencil.nodes)
        vals = np.empty(n)
        args = np.empty(n, dtype=np.int64)
        for s in range(n):
            vals[s], args[s] = self.node_T(u, s)
        return vals, args

    def Q(self, u):
        """Q for every interior node and stencil direction, shape (n, M/2)."""
        u = np.ascontiguousarray(u, dtype=float)
        if self.compiled:
            return K.all_Q(u, *self._args(), self.code)
        return np.array([self.node_qs(u, s) for s in range(len(self.stencil.nodes))])

    def residual(self, u, f_nodes):
        return self.T(u)[0] - f_nodes

    def q_convexity(self, u, tol=1e-9):
        """(ok, (node, frame, column, Q)) like :func:`is_discretely_Q_convex`."""
        qs = self.Q(u)
        h = self.stencil.quarter
        s, j = np.unravel_index(int(np.argmin(qs)), qs.shape)
        frame, col = (j, 0) if j < h else (j - h, 1)
        q = float(qs[s, j])
        return q >= -tol, (int(self.stencil.nodes[s]), int(frame), int(col), q)
