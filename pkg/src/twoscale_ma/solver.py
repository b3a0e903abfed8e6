"""Perron-type solver for the discrete two-scale problem.

The solve has three parts:

1. an initial subsolution made of an exponential barrier plus a discrete
   harmonic correction that restores the boundary data;
2. Gauss-Seidel sweeps that only raise nodal values, each node solving
   T(c) = f(x_i) by bracketing and bisection;
3. diagnostics (residual, Q margin, monotonicity) collected in a
   :class:`SolveReport`.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as K
from .directions import build_direction_net, build_frame_set
from .errors import (BarrierOverflowError, BracketError, InvalidArgumentError,
                     LinearSolverError, MeshError, NonConvergenceError,
                     SubsolutionError, TwoScaleError, UnsupportedError)
from .fe_field import EpsilonParams, NodalField, interpolate
from .mesh import Disc, UnitSquare
from .operator import CostKind, DiscreteOperator


def default_xtilde(domain):
    if isinstance(domain, UnitSquare):
        return (-2.0, -2.0)
    if isinstance(domain, Disc):
        cx, cy = domain.center
        return (cx - 3.0 * domain.radius, cy)
    v = np.asarray(domain.vertices)
    c = v.mean(axis=0)
    reach = float(np.max(np.linalg.norm(v - c, axis=1)))
    return (float(c[0] - reach - 1.0 - reach), float(c[1]))


@dataclass(frozen=True)
class SolveParams:
    delta: float
    theta: float
    root_tol: float = 1e-8
    sweep_tol: float = 1e-9
    max_sweeps: int = 10_000
    lambda0: float = 0.5
    lambda_growth: float = 2.0
    lambda_max: float = 64.0
    xtilde: Optional[tuple] = None
    cg_tol: float = 1e-12
    reverse_order: bool = False
    scale_separation: bool = True
    repair_margin: float = 1e-3

    def __post_init__(self):
        if not (self.root_tol > 0 and self.sweep_tol > 0):
            raise InvalidArgumentError("root_tol and sweep_tol must be positive")
        if not self.lambda0 > 0:
            raise InvalidArgumentError("lambda0 must be positive")
        if not self.lambda_growth > 1:
            raise InvalidArgumentError("lambda_growth must exceed 1")
        if self.max_sweeps < 1:
            raise InvalidArgumentError("max_sweeps must be >= 1")

    def epsilon(self, mesh):
        return EpsilonParams(self.delta, self.theta, mesh.h, self.scale_separation)

    def resolved_xtilde(self, domain):
        xt = self.xtilde if self.xtilde is not None else default_xtilde(domain)
        if domain.dist_to_closure(xt) < 1.0:
            raise InvalidArgumentError(
                f"barrier centre {xt} must be at distance >= 1 from the closed domain")
        return tuple(float(c) for c in xt)


@dataclass
class SolveReport:
    sweeps_used: int = 0
    residual_inf: float = math.inf
    q_min: float = -math.inf
    monotonicity_violations: int = 0
    lambda_used: float = math.nan
    wall_time: float = 0.0
    subsolution_kind: str = ""
    # per-sweep diagnostics
    max_changes: list = field(default_factory=list)
    min_increments: list = field(default_factory=list)
    min_residual_after_sweep: list = field(default_factory=list)

    def row(self):
        return {"sweeps_used": self.sweeps_used, "residual_inf": self.residual_inf,
                "q_min": self.q_min, "monotonicity_violations": self.monotonicity_violations,
                "lambda_used": self.lambda_used, "wall_time": self.wall_time}


# --- barriers ---------------------------------------------------------------

def exponential_barrier(xtilde, lam, R):
    """x -> exp(lam |x - xtilde|^2) - R."""
    if not lam > 0:
        raise InvalidArgumentError("barrier exponent must be positive")
    xt = np.asarray(xtilde, dtype=float)

    def q(x):
        r2 = float(np.sum((np.asarray(x, float) - xt) ** 2))
        arg = lam * r2
        if arg > 700.0:
            raise BarrierOverflowError(f"exp({arg:.1f}) overflows; reduce lambda or rescale")
        return math.exp(arg) - R

    return q


def barrier_offset(domain, xtilde, lam):
    """R making the exponential barrier nonpositive on the closed domain."""
    arg = lam * domain.max_sq_distance(xtilde)
    if arg > 700.0:
        raise BarrierOverflowError(f"exp({arg:.1f}) overflows; reduce lambda or rescale")
    return math.exp(arg)


def barrier_hessian(xtilde, lam, x):
    d = np.asarray(x, float) - np.asarray(xtilde, float)
    e = math.exp(lam * float(d @ d))
    return 2.0 * lam * e * (np.eye(2) + 2.0 * lam * np.outer(d, d))


def boundary_barrier(domain, z, lam):
    """Bowl through the boundary point nearest z, nonpositive on the disc.

    The centre sits on the outward ray at distance 2 * radius, so the ball
    of that radius contains the disc and touches it only at the foot point.
    """
    if not isinstance(domain, Disc):
        raise UnsupportedError("boundary_barrier needs a uniformly convex (Disc) domain")
    if not domain.contains(z):
        raise InvalidArgumentError(f"point {z} is outside the disc")
    zt = domain.nearest_boundary_point(z)
    c = np.asarray(domain.center)
    normal = (zt - c) / domain.radius
    rb = 2.0 * domain.radius
    xt = zt - rb * normal
    top = lam * rb * rb
    if top > 700.0:
        raise BarrierOverflowError(f"exp({top:.1f}) overflows; reduce lambda")
    shift = math.exp(top)

    def p(x):
        r2 = float(np.sum((np.asarray(x, float) - xt) ** 2))
        return math.exp(lam * r2) - shift

    p.foot = zt
    p.center = xt
    return p


# --- linear algebra -------------------------------------------------------

@dataclass
class LinearSystem:
    """Stiffness matrix restricted to interior nodes plus the boundary coupling."""

    full: sp.csr_matrix
    interior: sp.csr_matrix
    coupling: sp.csr_matrix
    interior_nodes: np.ndarray
    boundary_nodes: np.ndarray

    def rhs(self, boundary_values):
        return -(self.coupling @ np.asarray(boundary_values, dtype=float))


def assemble_stiffness(mesh):
    v = mesh.vertices
    t = mesh.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    area = 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    if np.any(area <= 1e-14):
        raise MeshError("degenerate triangle (area <= 1e-14)")
    # gradient of the hat at vertex k is rot(opposite edge) / (2 area)
    opp = np.stack([c - b, a - c, b - a], axis=1)
    grads = np.stack([-opp[..., 1], opp[..., 0]], axis=2) / (2.0 * area)[:, None, None]
    local = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    full = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2)
    full = 0.5 * (full + full.T)
    inn, bnd = mesh.interior_nodes, mesh.boundary_nodes
    return LinearSystem(full.tocsr(), full[inn][:, inn].tocsr(), full[inn][:, bnd].tocsr(),
                        inn, bnd)


def solve_harmonic(mesh, boundary_values, cg_tol=1e-12, system=None):
    """Discrete harmonic extension of data given on ``mesh.boundary_nodes``."""
    system = system if system is not None else assemble_stiffness(mesh)
    bvals = np.asarray(boundary_values, dtype=float)
    values = np.zeros(mesh.n_vertices)
    values[system.boundary_nodes] = bvals
    n = len(system.interior_nodes)
    if n:
        # the system is linear, so solve at unit scale to keep CG's inner
        # products finite for large barrier values
        scale = float(np.max(np.abs(bvals))) if len(bvals) else 0.0
        if not np.isfinite(scale):
            raise LinearSolverError("boundary data are not finite")
        if scale == 0.0:
            return NodalField(mesh, values)
        rhs = system.rhs(bvals / scale)
        norm = max(np.linalg.norm(rhs), np.finfo(float).tiny)
        sol, info = spla.cg(system.interior, rhs, rtol=cg_tol, atol=0.0, maxiter=10 * n)
        if info != 0:
            raise LinearSolverError(f"CG did not converge in {10 * n} iterations")
        rel = np.linalg.norm(system.interior @ sol - rhs) / norm
        if rel > max(cg_tol, 1e-13) * 10:
            raise LinearSolverError(f"CG relative residual {rel:.2e} above tolerance")
        values[system.interior_nodes] = sol * scale
    return NodalField(mesh, values)


# --- Perron iteration -----------------------------------------------------

class PerronSolver:
    """Holds the operator, data and bookkeeping for one solve."""

    def __init__(self, mesh, model, frames, params, f, g, operator=None):
        self.mesh = mesh
        self.model = model
        self.frames = frames
        self.params = params
        self.eps = params.epsilon(mesh)
        self.op = operator if operator is not None else DiscreteOperator(
            mesh, model, frames, self.eps)
        st = self.op.stencil
        self.f_nodes = np.array([f(x) for x in st.x], dtype=float)
        self.g_boundary = np.array([g(mesh.vertices[i]) for i in mesh.boundary_nodes],
                                   dtype=float)
        if not np.all(np.isfinite(self.f_nodes)) or not np.all(np.isfinite(self.g_boundary)):
            raise InvalidArgumentError("f and g must be finite at the nodes")
        self.order = np.arange(len(st.nodes), dtype=np.int64)
        if params.reverse_order:
            self.order = self.order[::-1].copy()
        # nodal values of g everywhere, used as the starting point of the repair
        self.g_full = None
        try:
            self.g_full = np.array([g(x) for x in mesh.vertices], dtype=float)
            if not np.all(np.isfinite(self.g_full)):
                self.g_full = None
        except (ArithmeticError, ValueError, TwoScaleError):
            self.g_full = None
        self.lambda_used = math.nan
        self.subsolution_kind = None
        self.bracket_cap = math.inf

    def _set_cap(self, lam, u0=None):
        g = self.g_boundary
        span = float(g.max() - g.min()) if len(g) else 0.0
        # the barrier can sit far below g; the cap must cover that depth too
        depth = float(g.max() - u0.min()) if (u0 is not None and len(g)) else 0.0
        self.bracket_cap = max(span, depth) + 10.0 * self.mesh.domain.diameter ** 2 * lam

    # (i) initial subsolution
    def init_subsolution(self):
        """First subsolution found, trying for each barrier exponent in turn:

        * ``"harmonic"``: barrier plus discrete harmonic correction;
        * ``"lifted"`` (p-independent A only): barrier shifted below g with the
          boundary nodes raised to g, which can only increase T.

        If neither works up to ``lambda_max`` a decrease-only repair sweep
        is run from the interpolant of g (``"repaired"``).
        """
        p = self.params
        if np.any(self.f_nodes <= 0):
            raise InvalidArgumentError("f must be positive at every interior node")
        xt = p.resolved_xtilde(self.mesh.domain)
        system = assemble_stiffness(self.mesh)
        bnodes = self.mesh.boundary_nodes
        lam = p.lambda0
        worst = (None, -math.inf)
        while lam <= p.lambda_max * (1 + 1e-12):
            try:
                R = barrier_offset(self.mesh.domain, xt, lam)
                qfield = interpolate(self.mesh, exponential_barrier(xt, lam, R))
            except BarrierOverflowError:
                break
            candidates = []
            try:
                w = solve_harmonic(self.mesh, self.g_boundary - qfield.values[bnodes],
                                   p.cg_tol, system)
                candidates.append(("harmonic", w.values + qfield.values))
            except LinearSolverError:
                pass
            if self.model.p_independent:
                shift = float(np.max(qfield.values[bnodes] - self.g_boundary))
                candidates.append(("lifted", qfield.values - shift))
            for kind, u0 in candidates:
                u0[bnodes] = self.g_boundary
                if not self._resolvable(u0):
                    continue
                r = self.op.residual(u0, self.f_nodes)
                if np.all(np.isfinite(r)) and np.all(r >= 0):
                    return self._accept(u0, lam, kind)
                s = int(np.argmin(r))
                if r[s] > worst[1] or worst[0] is None:
                    worst = (int(self.op.stencil.nodes[s]), float(r[s]))
            lam *= p.lambda_growth
        if self.g_full is not None:
            u0 = self._repair(self.g_full.copy())
            if u0 is not None:
                return self._accept(u0, p.lambda0, "repaired")
        raise SubsolutionError(
            f"no barrier exponent up to {p.lambda_max} gives a subsolution; worst node "
            f"{worst[0]} with residual {worst[1]:.3e}", worst[0], worst[1])

    def _resolvable(self, u0):
        """False when rounding in the second differences of u0 could exceed f/1000."""
        st = self.op.stencil
        if not len(st.nodes):
            return True
        noise = 4.0 * np.finfo(float).eps * float(np.max(np.abs(u0))) / float(st.dlt.min()) ** 2
        return bool(np.isfinite(noise) and noise <= 1e-3 * float(self.f_nodes.min()))

    def _accept(self, u0, lam, kind):
        self.lambda_used = lam
        self.subsolution_kind = kind
        self._set_cap(lam, u0)
        return NodalField(self.mesh, u0), lam

    def _repair(self, u):
        """Lower interior values until T >= (1 + margin) f everywhere, or give up."""
        p = self.params
        st = self.op.stencil
        if not self.op.compiled:
            return None
        u[self.mesh.boundary_nodes] = self.g_boundary
        target = self.f_nodes * (1.0 + p.repair_margin)
        self._set_cap(p.lambda_max, u)
        for _ in range(p.max_sweeps):
            _, failed = K.lower_sweep(u, self.order, target, p.root_tol, self.bracket_cap,
                                      st.nodes, st.pidx, st.pw, st.dlt, st.dirs, st.quarter,
                                      self.op.code)
            if failed >= 0:
                return None
            if np.all(self.op.residual(u, self.f_nodes) >= 0):
                return u
        return None

    def node_update(self, u, slot):
        """New centre value at ``slot``; flags monotonicity violations."""
        st = self.op.stencil
        fi = self.f_nodes[slot]
        tol = self.params.root_tol
        if self.op.compiled:
            q = np.empty(len(st.dirs))
            new, status, _ = K.node_update(u, slot, fi, tol, self.bracket_cap, st.nodes,
                                           st.pidx, st.pw, st.dlt, st.dirs, st.quarter,
                                           self.op.code, q)
        else:
            new, status = _node_update_py(self.op, u, slot, fi, tol, self.bracket_cap)
        if status == K.BRACKET_FAIL:
            raise BracketError(
                f"no sign change of T - f at node {int(st.nodes[slot])} within the bracket cap")
        return new, status == K.VIOLATION

    def sweep(self, u):
        """One increase-only pass; returns (max increment, min increment, violations)."""
        p = self.params
        st = self.op.stencil
        if self.op.compiled:
            before = u[st.nodes].copy()
            max_inc, viol, failed, _ = K.sweep(u, self.order, self.f_nodes, p.root_tol,
                                               self.bracket_cap, st.nodes, st.pidx, st.pw,
                                               st.dlt, st.dirs, st.quarter, self.op.code)
            if failed >= 0:
                raise BracketError(
                    f"no sign change of T - f at node {int(st.nodes[failed])} "
                    "within the bracket cap")
            incs = u[st.nodes] - before
            return float(max_inc), float(incs.min()) if len(incs) else 0.0, int(viol)
        max_inc, min_inc, viol = 0.0, math.inf, 0
        for s in self.order:
            new, flagged = self.node_update(u, s)
            inc = new - u[st.nodes[s]]
            u[st.nodes[s]] = new
            max_inc, min_inc = max(max_inc, inc), min(min_inc, inc)
            viol += flagged
        return max_inc, (min_inc if len(self.order) else 0.0), viol

    def run(self, u0=None):
        start = time.perf_counter()
        report = SolveReport()
        if u0 is None:
            field0, lam = self.init_subsolution()
        else:
            field0, lam = u0, self.params.lambda0
            self.lambda_used = lam
            self._set_cap(lam, field0.values)
        report.lambda_used = lam
        report.subsolution_kind = self.subsolution_kind or "given"
        u = field0.values.copy()
        bnodes = self.mesh.boundary_nodes
        converged = False
        for k in range(self.params.max_sweeps):
            max_inc, min_inc, viol = self.sweep(u)
            report.sweeps_used = k + 1
            report.monotonicity_violations += viol
            report.max_changes.append(max_inc)
            report.min_increments.append(min_inc)
            report.min_residual_after_sweep.append(
                float(np.min(self.op.residual(u, self.f_nodes))) if len(u) else 0.0)
            if max_inc <= self.params.sweep_tol:
                # a tiny last change can still leave T - f above root_tol
                r = self.op.residual(u, self.f_nodes)
                if not len(r) or np.max(np.abs(r)) <= self.params.root_tol:
                    converged = True
                    break
        assert np.array_equal(u[bnodes], self.g_boundary)
        r = self.op.residual(u, self.f_nodes)
        report.residual_inf = float(np.max(np.abs(r))) if len(r) else 0.0
        report.q_min = float(self.op.Q(u).min()) if len(r) else math.inf
        report.wall_time = time.perf_counter() - start
        out = NodalField(self.mesh, u)
        if not converged:
            raise NonConvergenceError(
                f"{self.params.max_sweeps} sweeps without reaching sweep_tol "
                f"(last change {report.max_changes[-1]:.3e})", out, report)
        return out, report


def _node_update_py(op, u, s, fi, tol, cap):
    """Python twin of the compiled node update, used for custom cost models."""
    node = op.stencil.nodes[s]
    cur = u[node]
    t0 = op.node_T(u, s, cur)[0]
    if t0 < fi - tol:
        return cur, K.VIOLATION
    if t0 <= fi + tol:
        return cur, K.OK
    d = op.stencil.dlt[s]
    inc = d * d * tol
    lo, hi = cur, cur + inc
    while True:
        th = op.node_T(u, s, hi)[0]
        if th < fi:
            break
        lo = hi
        if th - fi <= tol:
            return lo, K.OK
        if inc >= cap:
            return cur, K.BRACKET_FAIL
        inc = min(2.0 * inc, cap)
        hi = cur + inc
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return lo, K.OK
        tm = op.node_T(u, s, mid)[0]
        if tm >= fi:
            lo = mid
            if tm - fi <= tol:
                return lo, K.OK
        else:
            hi = mid


def make_frames(theta):
    return build_frame_set(build_direction_net(theta))


def solve(mesh, model, frames, params, f, g):
    """Run the full Perron solve; returns (NodalField, SolveReport)."""
    return PerronSolver(mesh, model, frames, params, f, g).run()


def node_update(field, i, model, frames, params, f_i, solver=None):
    """Single increase-only update of node i, leaving ``field`` untouched."""
    ps = solver if solver is not None else PerronSolver(
        field.mesh, model, frames, params, lambda x: f_i, lambda x: 0.0)
    if solver is None:
        ps.g_boundary = field.values[field.mesh.boundary_nodes]
        ps._set_cap(params.lambda_max)
    slot = int(ps.op.stencil.slot[i])
    if slot < 0:
        raise InvalidArgumentError(f"node {i} is not interior")
    ps.f_nodes = ps.f_nodes.copy()
    ps.f_nodes[slot] = f_i
    new, _ = ps.node_update(field.values.copy(), slot)
    return new


def perron_sweep(field, model, frames, params, f, solver=None):
    """One sweep on a copy of ``field``; returns (new field, max change)."""
    ps = solver if solver is not None else PerronSolver(
        field.mesh, model, frames, params, f, lambda x: 0.0)
    if solver is None:
        ps.g_boundary = field.values[field.mesh.boundary_nodes]
        ps._set_cap(params.lambda_max)
    u = field.values.copy()
    max_inc, _, _ = ps.sweep(u)
    return NodalField(field.mesh, u), max_inc


def upper_bound_field(mesh, model, f, g):
    """Nodal upper barrier for the Perron iterates (zero or -I cost only)."""
    if model.kind not in (CostKind.ZERO, CostKind.MINUS_IDENTITY):
        raise UnsupportedError(f"no upper barrier for cost model {model.kind.value}")
    gmax = max(g(mesh.vertices[i]) for i in mesh.boundary_nodes)
    base = np.full(mesh.n_vertices, float(gmax))
    if model.kind is CostKind.ZERO:
        return NodalField(mesh, base)
    fmin = min(f(mesh.vertices[i]) for i in mesh.interior_nodes)
    coef = 1.0 - 0.25 * fmin
    r2 = np.sum(mesh.vertices ** 2, axis=1)
    c_omega = coef * _max_sq_norm(mesh.domain)
    return NodalField(mesh, base + c_omega - coef * r2)


def _max_sq_norm(domain):
    return domain.max_sq_distance((0.0, 0.0))
