"""Problem configuration files, manufactured right-hand sides, single runs,
convergence tables and the invariant checks behind ``twoscale-ma check``."""
from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .directions import build_direction_net
from .errors import ConfigError, ExpressionError, PositivityError
from .expr import Expression
from .fe_field import extend_many
from .mesh import Disc, build_disc_mesh, build_square_mesh
from .operator import CostModel, matrix_A
from .solver import PerronSolver, SolveParams, make_frames

SOLUTION_HEADER = ["x", "y", "u"]
REPORT_HEADER = ["sweeps_used", "residual_inf", "q_min", "monotonicity_violations",
                 "lambda_used", "wall_time"]
CONVERGENCE_HEADER = ["level", "h", "delta", "theta", "err_inf", "residual_inf", "q_min",
                      "sweeps", "seconds"]

MARGIN_FLOOR = 1e-6
DISC_SAMPLES = 10_000

_EXPR_KEYS = ("g", "f", "u_exact")
_FLOAT_KEYS = ("delta_c", "delta_p", "theta_c", "theta_p", "root_tol", "sweep_tol",
               "lambda0", "lambda_max")
_INT_KEYS = ("m", "level", "max_sweeps")
_KNOWN = {"domain", "cost", *_EXPR_KEYS, *_FLOAT_KEYS, *_INT_KEYS}
_OVERRIDES = ("root_tol", "sweep_tol", "max_sweeps", "lambda0", "lambda_max")


@dataclass
class ProblemConfig:
    domain: str
    level: int
    cost: str
    g: Expression
    f: Optional[Expression] = None
    u_exact: Optional[Expression] = None
    delta_c: float = 1.0
    delta_p: float = 0.5
    theta_c: float = 1.0
    theta_p: float = 0.5
    overrides: dict = field(default_factory=dict)

    @property
    def model(self):
        return CostModel.from_name(self.cost)

    def build_mesh(self, level=None):
        level = self.level if level is None else level
        if self.domain == "square":
            return build_square_mesh(level)
        return build_disc_mesh(Disc((0.0, 0.0), 1.0), level)

    def delta(self, h):
        return self.delta_c * h ** self.delta_p

    def theta(self, h):
        # nets coarser than a quarter turn are all the same four directions
        return min(self.theta_c * h ** self.theta_p, math.pi / 2)

    def solve_params(self, mesh, **extra):
        return SolveParams(delta=self.delta(mesh.h), theta=self.theta(mesh.h),
                           **self.overrides, **extra)

    def check_level(self, level, line=None):
        mesh = self.build_mesh(level)
        if not self.delta(mesh.h) > mesh.h:
            raise ConfigError(
                f"delta = {self.delta(mesh.h):.4g} does not exceed h = {mesh.h:.4g} "
                f"at level {level}", line)
        if not self.theta(mesh.h) > 0:
            raise ConfigError("theta must be positive", line)
        return mesh


def _parse_value(key, raw, lineno):
    if key in _EXPR_KEYS:
        try:
            return Expression(raw)
        except ExpressionError as exc:
            raise ConfigError(f"{key}: {exc}", lineno) from None
    if key in _FLOAT_KEYS:
        try:
            v = float(raw)
        except ValueError:
            raise ConfigError(f"{key} expects a number, got {raw!r}", lineno) from None
        if not math.isfinite(v):
            raise ConfigError(f"{key} must be finite", lineno)
        return v
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {raw!r}", lineno) from None
    return raw


def parse_config(text):
    values, where = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _KNOWN:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if not raw:
            raise ConfigError(f"empty value for {key!r}", lineno)
        values[key] = _parse_value(key, raw, lineno)
        where[key] = lineno
    return _validate(values, where)


def _validate(values, where):
    def need(key):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
        return values[key]

    domain = need("domain")
    if domain not in ("square", "disc"):
        raise ConfigError(f"domain must be square or disc, got {domain!r}", where["domain"])
    size_key = "m" if domain == "square" else "level"
    other = "level" if domain == "square" else "m"
    if other in values:
        raise ConfigError(f"key {other!r} does not apply to a {domain} domain", where[other])
    level = need(size_key)
    if level < (2 if domain == "square" else 1):
        raise ConfigError(f"{size_key} = {level} is too small", where[size_key])
    cost = need("cost")
    if cost not in ("zero", "minus_identity", "log_cost"):
        raise ConfigError(f"unknown cost model {cost!r}", where["cost"])
    g = need("g")
    if ("f" in values) == ("u_exact" in values):
        line = where.get("u_exact") if "f" in values else None
        raise ConfigError("give exactly one of f and u_exact", line)
    dp = values.get("delta_p", 0.5)
    if not 0.0 <= dp < 1.0:
        raise ConfigError(f"delta_p must lie in [0, 1), got {dp}", where.get("delta_p"))
    for key in ("delta_c", "theta_c"):
        if key in values and not values[key] > 0:
            raise ConfigError(f"{key} must be positive", where[key])
    if "theta_p" in values and values["theta_p"] < 0:
        raise ConfigError("theta_p must be nonnegative", where["theta_p"])
    overrides = {k: values[k] for k in _OVERRIDES if k in values}
    cfg = ProblemConfig(domain, level, cost, g, values.get("f"), values.get("u_exact"),
                        values.get("delta_c", 1.0), dp, values.get("theta_c", 1.0),
                        values.get("theta_p", 0.5), overrides)
    try:
        SolveParams(delta=1.0, theta=1.0, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg.check_level(level, where.get(size_key))
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


# --- manufactured data ----------------------------------------------------

def finite_difference_jet(u, x, step):
    """Central-difference gradient and Hessian of u at x."""
    x = np.asarray(x, dtype=float)
    e = np.eye(2) * step
    u0 = u(x)
    grad = np.empty(2)
    hess = np.empty((2, 2))
    for k in range(2):
        up, um = u(x + e[k]), u(x - e[k])
        grad[k] = (up - um) / (2 * step)
        hess[k, k] = (up - 2 * u0 + um) / step ** 2
    cross = (u(x + e[0] + e[1]) - u(x + e[0] - e[1])
             - u(x - e[0] + e[1]) + u(x - e[0] - e[1])) / (4 * step ** 2)
    hess[0, 1] = hess[1, 0] = cross
    return grad, hess


def manufactured_f(model, u_expr, fd_step=None, diameter=1.0):
    """(f, margin) with f = det(D^2u - A(x, Du)) and margin its least eigenvalue.

    Derivatives are central differences with step ``fd_step``. The default is
    the power of two nearest ``1e-5 * diameter``, so that probes around dyadic
    nodes are exact and affine or quadratic data difference without round-off.
    """
    if fd_step is None:
        step = 2.0 ** round(math.log2(1e-5 * diameter))
    else:
        step = float(fd_step)
    if not step > 0:
        raise ValueError("fd_step must be positive")

    def matrix(x):
        grad, hess = finite_difference_jet(u_expr, x, step)
        return hess - matrix_A(model, x, grad)

    def f(x):
        return float(np.linalg.det(matrix(x)))

    def margin(x):
        return float(np.linalg.eigvalsh(matrix(x))[0])

    return f, margin


def check_positivity(margin, points, floor=MARGIN_FLOOR):
    vals = np.array([margin(p) for p in points])
    k = int(np.argmin(vals))
    if vals[k] < floor:
        raise PositivityError(
            f"D^2u - A(x, Du) has least eigenvalue {vals[k]:.3e} < {floor:g} at "
            f"node {k} {np.asarray(points[k]).tolist()}", np.asarray(points[k]), vals[k])
    return float(vals[k])


def problem_data(cfg, mesh):
    """(f, g) for one mesh; a manufactured f is checked for ellipticity first."""
    if cfg.u_exact is None:
        return cfg.f, cfg.g
    f, margin = manufactured_f(cfg.model, cfg.u_exact, diameter=mesh.domain.diameter)
    check_positivity(margin, mesh.vertices)
    return f, cfg.g


# --- runs -----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def solve_config(cfg, level=None, f_scale=1.0, **extra):
    """Solve one level; returns (mesh, field, report, params)."""
    mesh = cfg.build_mesh(level)
    params = cfg.solve_params(mesh, **extra)
    f, g = problem_data(cfg, mesh)
    rhs = f if f_scale == 1.0 else (lambda x: f_scale * f(x))
    solver = PerronSolver(mesh, cfg.model, make_frames(params.theta), params, rhs, g)
    u, report = solver.run()
    return mesh, u, report, params


def run_single(cfg, outdir):
    os.makedirs(outdir, exist_ok=True)
    mesh, u, report, _ = solve_config(cfg)
    sol = os.path.join(outdir, "solution.csv")
    rep = os.path.join(outdir, "report.csv")
    write_csv(sol, SOLUTION_HEADER,
              ((x, y, v) for (x, y), v in zip(mesh.vertices, u.values)))
    row = report.row()
    write_csv(rep, REPORT_HEADER, [[row[k] for k in REPORT_HEADER]])
    return u, report, {"solution": sol, "report": rep}


def disc_samples(seed, n=DISC_SAMPLES, radius=1.0):
    """Scrambled Halton points mapped area-uniformly onto the closed disc."""
    s = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    r = radius * np.sqrt(s[:, 0])
    phi = 2.0 * math.pi * s[:, 1]
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def sup_error(cfg, mesh, u, seed=0):
    exact = np.array([cfg.u_exact(p) for p in mesh.vertices])
    err = float(np.max(np.abs(u.values - exact)))
    if cfg.domain == "disc":
        pts = disc_samples(seed)
        approx = extend_many(u, pts)
        ref = np.array([cfg.u_exact(p) for p in pts])
        err = max(err, float(np.max(np.abs(approx - ref))))
    return err


def run_convergence(cfg, levels, outdir, seed=0):
    """Solve each level and write convergence.csv; the table is flushed row by row."""
    if cfg.u_exact is None:
        raise ConfigError("a convergence study needs u_exact")
    for lv in levels:
        cfg.check_level(lv)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "convergence.csv")
    rows = []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONVERGENCE_HEADER)
        fh.flush()
        for lv in levels:
            start = time.perf_counter()
            mesh, u, report, params = solve_config(cfg, lv)
            err = sup_error(cfg, mesh, u, seed)
            row = [lv, mesh.h, params.delta, params.theta, err, report.residual_inf,
                   report.q_min, report.sweeps_used, time.perf_counter() - start]
            w.writerow([_fmt(v) for v in row])
            fh.flush()
            rows.append(dict(zip(CONVERGENCE_HEADER, row)))
    return rows, path


# --- invariant suite ------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def net_coverage(theta, n=10_000, seed=0):
    """Largest chord distance from n random unit vectors to the direction net."""
    net = build_direction_net(theta)
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    v = np.column_stack([np.cos(phi), np.sin(phi)])
    d = np.linalg.norm(v[:, None, :] - net.directions[None, :, :], axis=2).min(axis=1)
    return float(d.max())


def run_checks(cfg, seed=0):
    """Solve the configured problem and test the structural invariants."""
    out = []
    mesh, u, report, params = solve_config(cfg)
    tol = params.root_tol
    out.append(CheckResult("residual", report.residual_inf <= tol,
                           f"residual_inf = {report.residual_inf:.3e} (<= {tol:g})"))
    out.append(CheckResult("q_convexity", report.q_min >= -1e-6,
                           f"q_min = {report.q_min:.3e} (>= -1e-6)"))
    min_inc = min(report.min_increments) if report.min_increments else 0.0
    min_res = (min(report.min_residual_after_sweep)
               if report.min_residual_after_sweep else 0.0)
    monotone = min_inc >= 0.0 and min_res >= -tol
    if cfg.model.p_independent:
        monotone = monotone and report.monotonicity_violations == 0
    out.append(CheckResult(
        "monotone_sweeps", monotone,
        f"min increment {min_inc:.3e}, min residual after a sweep {min_res:.3e}, "
        f"{report.monotonicity_violations} violations"))
    worst = net_coverage(params.theta, seed=seed)
    out.append(CheckResult("net_coverage", worst <= params.theta,
                           f"max chord distance {worst:.4f} (<= theta = {params.theta:.4f})"))
    boundary_ok = bool(np.array_equal(
        u.values[mesh.boundary_nodes],
        np.array([cfg.g(mesh.vertices[i]) for i in mesh.boundary_nodes])))
    out.append(CheckResult("boundary_exact", boundary_ok, "u = g at every boundary node"))
    _, u2, _, _ = solve_config(cfg, f_scale=1.2)
    gap = float(np.max(np.maximum(u2.values - u.values, 0.0)))
    out.append(CheckResult("comparison_ordering", gap <= 5 * mesh.h,
                           f"max (u_1.2f - u_f)+ = {gap:.3e} (<= 5h = {5 * mesh.h:.3e})"))
    return out
