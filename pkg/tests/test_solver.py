import math
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import exp_exact, exp_rhs, half_sq
from twoscale_ma.directions import build_direction_net, build_frame_set
from twoscale_ma.errors import (BarrierOverflowError, BracketError, InvalidArgumentError,
                                MeshError, NonConvergenceError, SubsolutionError,
                                UnsupportedError)
from twoscale_ma.fe_field import NodalField, interpolate
from twoscale_ma.mesh import Disc, Mesh, Polygon, UnitSquare, build_disc_mesh, build_square_mesh
from twoscale_ma.operator import CostModel, DiscreteOperator
from twoscale_ma.solver import (PerronSolver, SolveParams, assemble_stiffness, barrier_hessian,
                                barrier_offset, boundary_barrier, default_xtilde,
                                exponential_barrier, make_frames, node_update, perron_sweep,
                                solve, solve_harmonic, upper_bound_field)

ZERO, MINUS_I, LOG = CostModel.zero(), CostModel.minus_identity(), CostModel.log_cost()
QUARTER = build_frame_set(build_direction_net(math.pi / 2))


def single_node_params(**kw):
    return SolveParams(delta=0.5, theta=math.pi / 2, scale_separation=False, **kw)


def centre(mesh):
    return int(np.flatnonzero(np.all(np.isclose(mesh.vertices, 0.5), axis=1))[0])


# --- barriers ---

def test_exponential_barrier_examples():
    q = exponential_barrier((-2.0, 0.0), 1.0, math.exp(9))
    assert q((1.0, 0.0)) == 0.0
    assert q((0.0, 0.0)) == pytest.approx(math.exp(4) - math.exp(9))
    R = barrier_offset(UnitSquare(), (-2.0, 0.0), 1.0)
    assert R == pytest.approx(math.exp(10))
    q = exponential_barrier((-2.0, 0.0), 1.0, R)
    corners = [(0, 0), (1, 0), (0, 1), (1, 1)]
    assert max(q(c) for c in corners) == pytest.approx(0.0, abs=1e-9)


def test_barrier_hessian_against_finite_differences(rng):
    xt, lam = np.array([-2.0, -2.0]), 0.7
    q = exponential_barrier(xt, lam, 0.0)
    for x in rng.uniform(0, 1, (5, 2)):
        h = 1e-4
        fd = np.empty((2, 2))
        for a in range(2):
            for b in range(2):
                ea, eb = np.eye(2)[a] * h, np.eye(2)[b] * h
                fd[a, b] = (q(x + ea + eb) - q(x + ea - eb) - q(x - ea + eb)
                            + q(x - ea - eb)) / (4 * h * h)
        hess = barrier_hessian(xt, lam, x)
        np.testing.assert_allclose(hess, fd, rtol=1e-6)
        r2 = float((x - xt) @ (x - xt))
        assert np.linalg.eigvalsh(hess)[0] >= 2 * lam * math.exp(lam * r2) * (1 - 1e-12)


def test_barrier_errors():
    with pytest.raises(InvalidArgumentError):
        exponential_barrier((0, 0), 0.0, 1.0)
    with pytest.raises(BarrierOverflowError):
        exponential_barrier((-2, -2), 100.0, 0.0)((1.0, 1.0))
    with pytest.raises(BarrierOverflowError):
        barrier_offset(UnitSquare(), (-2, -2), 100.0)


def test_default_xtilde_distance():
    assert default_xtilde(UnitSquare()) == (-2.0, -2.0)
    disc = Disc((1.0, 2.0), 0.5)
    assert default_xtilde(disc) == (1.0 - 1.5, 2.0)
    for dom in (UnitSquare(), disc, Disc((0, 0), 3.0)):
        assert dom.dist_to_closure(SolveParams(0.5, 0.5).resolved_xtilde(dom)) >= 1.0
    with pytest.raises(InvalidArgumentError):
        SolveParams(0.5, 0.5, xtilde=(1.5, 0.5)).resolved_xtilde(UnitSquare())


def test_boundary_barrier_disc():
    disc = Disc((0.0, 0.0), 1.0)
    z = np.array([0.3, 0.4])
    p = boundary_barrier(disc, z, 1.0)
    np.testing.assert_allclose(p.foot, [0.6, 0.8])
    assert p(p.foot) == pytest.approx(0.0, abs=1e-9)
    assert p((0.0, 0.0)) < 0
    phi = np.linspace(0, 2 * math.pi, 400)
    for r in (0.2, 0.7, 1.0):
        assert max(p((r * math.cos(a), r * math.sin(a))) for a in phi) <= 1e-9
    with pytest.raises(UnsupportedError):
        boundary_barrier(UnitSquare(), (0.5, 0.5), 1.0)


def test_boundary_barrier_is_discretely_strongly_convex():
    disc = Disc()
    mesh = build_disc_mesh(disc, 3)
    frames = make_frames(0.5)
    params = SolveParams(delta=0.4, theta=0.5).epsilon(mesh)
    op = DiscreteOperator(mesh, ZERO, frames, params)
    lam, found = 0.5, None
    while lam <= 64:
        field = interpolate(mesh, boundary_barrier(disc, (0.2, -0.5), lam))
        T, _ = op.T(field.values)
        if T.min() > 0:
            found = T.min()
            break
        lam *= 2
    assert found is not None and found > 0


# --- linear algebra ---

def test_stiffness_single_triangle():
    tri = Polygon(((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)))
    mesh = Mesh.from_arrays(np.array(tri.vertices), np.array([[0, 1, 2]]), tri)
    k = assemble_stiffness(mesh).full.toarray()
    np.testing.assert_allclose(np.diag(k), [1.0, 0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose([k[0, 1], k[0, 2], k[1, 2]], [-0.5, -0.5, 0.0], atol=1e-15)


@pytest.mark.parametrize("mesh", [build_square_mesh(5), build_disc_mesh(Disc(), 2)])
def test_stiffness_structure(mesh):
    sys_ = assemble_stiffness(mesh)
    full = sys_.full.toarray()
    np.testing.assert_array_equal(full, full.T)
    assert np.max(np.abs(full.sum(axis=1))) <= 1e-12
    assert np.linalg.eigvalsh(sys_.interior.toarray())[0] > 0


def test_stiffness_rejects_degenerate():
    # Mesh itself refuses flat triangles, so hand in bare arrays
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0]])
    flat = SimpleNamespace(vertices=verts, triangles=np.array([[0, 1, 2], [0, 3, 1]]))
    with pytest.raises(MeshError):
        assemble_stiffness(flat)


def test_harmonic_reproduces_affine_and_constants():
    mesh = build_disc_mesh(Disc(), 3)
    a = lambda p: 2 * p[0] + 3 * p[1]
    u = solve_harmonic(mesh, [a(mesh.vertices[i]) for i in mesh.boundary_nodes])
    np.testing.assert_allclose(u.values, [a(p) for p in mesh.vertices], atol=1e-10)
    one = solve_harmonic(mesh, np.ones(len(mesh.boundary_nodes)))
    np.testing.assert_allclose(one.values, 1.0, atol=1e-12)
    assert np.all(one.values[mesh.boundary_nodes] == 1.0)


def test_harmonic_quadratic_data():
    # the P1 Laplacian on this grid is the five-point stencil, exact on x^2 - y^2
    for m in (8, 16):
        mesh = build_square_mesh(m)
        g = lambda p: p[0] ** 2 - p[1] ** 2
        u = solve_harmonic(mesh, [g(mesh.vertices[i]) for i in mesh.boundary_nodes])
        assert np.max(np.abs(u.values - [g(p) for p in mesh.vertices])) <= mesh.h ** 2


def test_harmonic_error_shrinks_fourfold():
    errs = []
    g = lambda p: math.exp(p[0]) * math.cos(p[1])
    for m in (8, 16, 32):
        mesh = build_square_mesh(m)
        u = solve_harmonic(mesh, [g(mesh.vertices[i]) for i in mesh.boundary_nodes])
        errs.append(np.max(np.abs(u.values - [g(p) for p in mesh.vertices])))
    for a, b in zip(errs, errs[1:]):
        assert 3.5 <= a / b <= 4.5


# --- subsolution and updates ---

def test_init_subsolution_single_node():
    mesh = build_square_mesh(2)
    solver = PerronSolver(mesh, ZERO, QUARTER, single_node_params(), lambda x: 1.0, half_sq)
    u0, lam = solver.init_subsolution()
    assert lam >= 0.5
    T, _ = solver.op.T(u0.values)
    assert T[0] >= 1.0
    np.testing.assert_array_equal(u0.values[mesh.boundary_nodes],
                                  [half_sq(mesh.vertices[i]) for i in mesh.boundary_nodes])


def test_init_subsolution_affine_minus_identity():
    mesh = build_square_mesh(8)
    d = math.sqrt(mesh.h)
    solver = PerronSolver(mesh, MINUS_I, make_frames(d), SolveParams(d, d), lambda x: 1.0,
                          lambda x: 2 * x[0] + 3 * x[1])
    u0, lam = solver.init_subsolution()
    assert lam == 0.5
    assert np.all(solver.op.residual(u0.values, solver.f_nodes) >= 0)


@pytest.mark.parametrize("model,m", [(ZERO, 8), (ZERO, 16), (LOG, 8), (LOG, 16)])
def test_init_subsolution_exp_problems(model, m):
    mesh = build_square_mesh(m)
    d = math.sqrt(mesh.h)
    scale = 1.0 if model is ZERO else 0.1
    u_exact = lambda x: scale * exp_exact(x)
    f = exp_rhs if model is ZERO else lambda x: 0.01 * exp_rhs(x) * (1 - 0.0)
    solver = PerronSolver(mesh, model, make_frames(d), SolveParams(d, d), f, u_exact)
    u0, _ = solver.init_subsolution()
    assert np.all(solver.op.residual(u0.values, solver.f_nodes) >= 0)
    np.testing.assert_array_equal(u0.values[mesh.boundary_nodes], solver.g_boundary)


def test_subsolution_failure_reports_worst_node():
    mesh = build_square_mesh(4)
    # A grows with |p|^2, so steeper barriers only make T worse
    steep = CostModel.custom(lambda x, p: (1.0 + p @ p) * np.eye(2))
    p = SolveParams(0.4, math.pi / 2, lambda_max=1.0)
    solver = PerronSolver(mesh, steep, QUARTER, p, lambda x: 1.0, lambda x: 0.0)
    with pytest.raises(SubsolutionError) as err:
        solver.init_subsolution()
    assert err.value.worst_node in mesh.interior_nodes
    assert err.value.worst_residual < 0


def test_init_rejects_nonpositive_f():
    mesh = build_square_mesh(4)
    solver = PerronSolver(mesh, ZERO, QUARTER, SolveParams(0.4, math.pi / 2), lambda x: 0.0,
                          half_sq)
    with pytest.raises(InvalidArgumentError):
        solver.init_subsolution()


@pytest.mark.parametrize("model,fval", [(ZERO, 1.0), (MINUS_I, 4.0)])
def test_node_update_single_node(model, fval):
    mesh = build_square_mesh(2)
    u = interpolate(mesh, half_sq)
    c = centre(mesh)
    u.values[c] = 0.0
    new = node_update(u, c, model, QUARTER, single_node_params(), fval)
    assert new == pytest.approx(0.25, abs=1e-7)
    assert u.values[c] == 0.0  # input untouched
    u.values[c] = new
    assert node_update(u, c, model, QUARTER, single_node_params(), fval) == new


def test_node_update_flags_violation_and_bracket_failure():
    mesh = build_square_mesh(2)
    g = [half_sq(mesh.vertices[i]) for i in mesh.boundary_nodes]
    solver = PerronSolver(mesh, ZERO, QUARTER, single_node_params(), lambda x: 1.0, half_sq)
    solver._set_cap(0.5)
    u = interpolate(mesh, half_sq).values
    u[centre(mesh)] = 0.3  # T = (3 - 2.4)^2 = 0.36 < 1
    new, flagged = solver.node_update(u, 0)
    assert flagged and new == 0.3
    u[centre(mesh)] = -100.0
    solver.bracket_cap = 1e-6
    with pytest.raises(BracketError):
        solver.node_update(u, 0)
    assert g == list(solver.g_boundary)


def test_perron_sweep_single_node():
    mesh = build_square_mesh(2)
    u = interpolate(mesh, half_sq)
    u.values[centre(mesh)] = 0.0
    p = single_node_params()
    once, change = perron_sweep(u, ZERO, QUARTER, p, lambda x: 1.0)
    assert once.values[centre(mesh)] == pytest.approx(0.25, abs=1e-7)
    assert change == pytest.approx(0.25, abs=1e-7)
    twice, change2 = perron_sweep(once, ZERO, QUARTER, p, lambda x: 1.0)
    assert change2 <= p.root_tol * 0.25
    np.testing.assert_array_equal(twice.values, once.values)


def test_perron_sweep_at_fixed_point():
    mesh = build_square_mesh(8)
    d = math.sqrt(mesh.h)
    a = lambda x: 2 * x[0] + 3 * x[1]
    u = interpolate(mesh, a)
    _, change = perron_sweep(u, MINUS_I, make_frames(d), SolveParams(d, d), lambda x: 1.0)
    assert change <= 1e-8 * d ** 2


@pytest.mark.parametrize("m", [8, 16])
def test_solve_affine(m):
    mesh = build_square_mesh(m)
    d = math.sqrt(mesh.h)
    a = lambda x: 2 * x[0] + 3 * x[1]
    u, rep = solve(mesh, MINUS_I, make_frames(d), SolveParams(d, d), lambda x: 1.0, a)
    assert np.max(np.abs(u.values - [a(p) for p in mesh.vertices])) <= 1e-7
    assert rep.residual_inf <= 1e-8


@pytest.mark.parametrize("model,fval", [(ZERO, 1.0), (MINUS_I, 4.0)])
def test_solve_single_node(model, fval):
    mesh = build_square_mesh(2)
    u, rep = solve(mesh, model, QUARTER, single_node_params(), lambda x: fval, half_sq)
    assert u.values[centre(mesh)] == pytest.approx(0.25, abs=1e-8)
    assert rep.residual_inf <= 1e-8 and rep.q_min >= -1e-8
    assert rep.sweeps_used <= 3


def test_non_convergence_carries_partial_report():
    mesh = build_square_mesh(8)
    d = math.sqrt(mesh.h)
    p = SolveParams(d, d, max_sweeps=2)
    with pytest.raises(NonConvergenceError) as err:
        solve(mesh, ZERO, make_frames(d), p, exp_rhs, exp_exact)
    assert err.value.report.sweeps_used == 2
    assert isinstance(err.value.field, NodalField)


def test_upper_bound_examples():
    mesh = build_square_mesh(4)
    b = upper_bound_field(mesh, ZERO, lambda x: 1.0, half_sq)
    np.testing.assert_allclose(b.values, 1.0)
    b4 = upper_bound_field(mesh, MINUS_I, lambda x: 4.0, half_sq)
    np.testing.assert_allclose(b4.values, 1.0)
    b1 = upper_bound_field(mesh, MINUS_I, lambda x: 1.0, half_sq)
    r2 = np.sum(mesh.vertices ** 2, axis=1)
    np.testing.assert_allclose(b1.values, 1.0 + 0.75 * (2.0 - r2))
    with pytest.raises(UnsupportedError):
        upper_bound_field(mesh, LOG, lambda x: 1.0, half_sq)


def _solve_exp(m, **kw):
    mesh = build_square_mesh(m)
    d = math.sqrt(mesh.h)
    solver = PerronSolver(mesh, ZERO, make_frames(d), SolveParams(d, d, **kw), exp_rhs, exp_exact)
    return mesh, solver.run()


def test_solution_properties_exp_problem():
    mesh, (u, rep) = _solve_exp(8)
    assert min(rep.min_increments) >= 0.0
    assert min(rep.min_residual_after_sweep) >= -1e-8
    assert rep.monotonicity_violations == 0
    assert rep.residual_inf <= 1e-8
    assert rep.q_min >= -1e-8
    g = np.array([exp_exact(mesh.vertices[i]) for i in mesh.boundary_nodes])
    np.testing.assert_array_equal(u.values[mesh.boundary_nodes], g)
    b = upper_bound_field(mesh, ZERO, exp_rhs, exp_exact)
    assert np.all(u.values <= b.values + 0.5)


def test_sweep_order_changes_little():
    mesh, (u, _) = _solve_exp(8)
    _, (ur, _) = _solve_exp(8, reverse_order=True)
    assert np.max(np.abs(u.values - ur.values)) <= 5 * mesh.h


def test_report_row_keys():
    _, (_, rep) = _solve_exp(8)
    assert list(rep.row()) == ["sweeps_used", "residual_inf", "q_min",
                               "monotonicity_violations", "lambda_used", "wall_time"]
