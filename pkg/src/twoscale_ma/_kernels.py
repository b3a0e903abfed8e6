"""Numba kernels for batch point location and the per-node Perron update.

Everything here works on plain arrays; the public modules own the objects.
Probe layout: ``pidx[s, j, side, k]`` / ``pw[s, j, side, k]`` are the vertex
ids and (clamped) barycentric weights of the probe ``x_s + sign*delta_s*v_j``
with sign +1 for side 0 and -1 for side 1.
"""
import numpy as np
from numba import njit

_opts = {"cache": True, "nogil": True}

ZERO, MINUS_IDENTITY, LOG_COST = 0, 1, 2

OK, VIOLATION, BRACKET_FAIL = 0, 1, 2


@njit(**_opts)
def locate_batch(pts, origin, inv, lo, size, n, offsets, ids, tol):
    npts = pts.shape[0]
    tri = -np.ones(npts, dtype=np.int64)
    lam = np.zeros((npts, 3))
    for p in range(npts):
        x = pts[p, 0]
        y = pts[p, 1]
        i = int(np.floor((x - lo[0]) / size[0]))
        j = int(np.floor((y - lo[1]) / size[1]))
        i = min(max(i, 0), n - 1)
        j = min(max(j, 0), n - 1)
        cell = i * n + j
        for q in range(offsets[cell], offsets[cell + 1]):
            t = ids[q]
            if tri[p] >= 0 and t >= tri[p]:
                continue
            dx = x - origin[t, 0]
            dy = y - origin[t, 1]
            l1 = inv[t, 0, 0] * dx + inv[t, 0, 1] * dy
            l2 = inv[t, 1, 0] * dx + inv[t, 1, 1] * dy
            l0 = 1.0 - l1 - l2
            if l0 >= -tol and l1 >= -tol and l2 >= -tol:
                tri[p] = t
                lam[p, 0] = l0
                lam[p, 1] = l1
                lam[p, 2] = l2
    return tri, lam


@njit(**_opts)
def _probe(u, pidx, pw, s, j, side, node, c):
    acc = 0.0
    for k in range(3):
        v = pidx[s, j, side, k]
        w = pw[s, j, side, k]
        if v == node:
            acc += w * c
        else:
            acc += w * u[v]
    return acc


@njit(**_opts)
def _vav(model, v0, v1, p0, p1):
    if model == ZERO:
        return 0.0
    if model == MINUS_IDENTITY:
        return -(v0 * v0 + v1 * v1)
    # log cost: A = |p|^2 I - 2 p p^T
    vp = v0 * p0 + v1 * p1
    return (p0 * p0 + p1 * p1) * (v0 * v0 + v1 * v1) - 2.0 * vp * vp


@njit(**_opts)
def agg2(q1, q2):
    pos = max(q1, 0.0) * max(q2, 0.0)
    neg = max(-q1, 0.0) + max(-q2, 0.0)
    return pos - neg


@njit(**_opts)
def node_T(u, s, c, nodes, pidx, pw, dlt, dirs, quarter, model, q):
    """T at interior slot s with the centre value replaced by c.

    Fills q[j] = Q(x_s, v_j) and returns (T, argmin frame).
    """
    node = nodes[s]
    d = dlt[s]
    inv_d = 1.0 / d
    inv_d2 = inv_d * inv_d
    p0 = (_probe(u, pidx, pw, s, 0, 0, node, c) - c) * inv_d
    p1 = (_probe(u, pidx, pw, s, quarter, 0, node, c) - c) * inv_d
    nd = dirs.shape[0]
    for j in range(nd):
        wp = _probe(u, pidx, pw, s, j, 0, node, c)
        wm = _probe(u, pidx, pw, s, j, 1, node, c)
        q[j] = ((wp + wm) - 2.0 * c) * inv_d2 - _vav(model, dirs[j, 0], dirs[j, 1], p0, p1)
    best = np.inf
    arg = 0
    for k in range(quarter):
        a = agg2(q[k], q[k + quarter])
        if a < best:
            best = a
            arg = k
    return best, arg


@njit(**_opts)
def all_T(u, nodes, pidx, pw, dlt, dirs, quarter, model):
    n = nodes.shape[0]
    out = np.empty(n)
    arg = np.empty(n, dtype=np.int64)
    q = np.empty(dirs.shape[0])
    for s in range(n):
        out[s], arg[s] = node_T(u, s, u[nodes[s]], nodes, pidx, pw, dlt, dirs, quarter, model, q)
    return out, arg


@njit(**_opts)
def all_Q(u, nodes, pidx, pw, dlt, dirs, quarter, model):
    """Q for every slot and every frame direction, shape (n, 2*quarter)."""
    n = nodes.shape[0]
    out = np.empty((n, dirs.shape[0]))
    for s in range(n):
        node_T(u, s, u[nodes[s]], nodes, pidx, pw, dlt, dirs, quarter, model, out[s])
    return out


@njit(**_opts)
def node_update(u, s, fi, tol, cap, nodes, pidx, pw, dlt, dirs, quarter, model, q):
    """Increase-only root of T(c) = fi at slot s.

    Returns (new value, status, T evaluations).
    """
    cur = u[nodes[s]]
    t0, _ = node_T(u, s, cur, nodes, pidx, pw, dlt, dirs, quarter, model, q)
    if t0 < fi - tol:
        return cur, VIOLATION, 1
    if t0 <= fi + tol:
        return cur, OK, 1
    evals = 1
    d = dlt[s]
    inc = d * d * tol
    lo = cur
    hi = cur + inc
    while True:
        th, _ = node_T(u, s, hi, nodes, pidx, pw, dlt, dirs, quarter, model, q)
        evals += 1
        if th < fi:
            break
        lo = hi
        if th - fi <= tol:
            return lo, OK, evals
        if inc >= cap:
            return cur, BRACKET_FAIL, evals
        inc = min(2.0 * inc, cap)
        hi = cur + inc
    # invariant: T(lo) > fi (or lo == cur), T(hi) < fi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return lo, OK, evals
        tm, _ = node_T(u, s, mid, nodes, pidx, pw, dlt, dirs, quarter, model, q)
        evals += 1
        if tm >= fi:
            lo = mid
            if tm - fi <= tol:
                return lo, OK, evals
        else:
            hi = mid


@njit(**_opts)
def sweep(u, order, f, tol, cap, nodes, pidx, pw, dlt, dirs, quarter, model):
    """One Gauss-Seidel pass over the slots in ``order``, updating u in place.

    Returns (max increment, violations, failed slot or -1, T evaluations).
    """
    q = np.empty(dirs.shape[0])
    max_inc = 0.0
    violations = 0
    evals = 0
    for r in range(order.shape[0]):
        s = order[r]
        new, status, ne = node_update(u, s, f[s], tol, cap, nodes, pidx, pw, dlt, dirs,
                                      quarter, model, q)
        evals += ne
        if status == BRACKET_FAIL:
            return max_inc, violations, s, evals
        if status == VIOLATION:
            violations += 1
        inc = new - u[nodes[s]]
        u[nodes[s]] = new
        if inc > max_inc:
            max_inc = inc
    return max_inc, violations, -1, evals


@njit(**_opts)
def lower_update(u, s, target, tol, cap, nodes, pidx, pw, dlt, dirs, quarter, model, q):
    """Decrease-only move at slot s until T >= target.

    Returns (new value, status); the new value has T in [target, target + tol]
    unless the centre already satisfies T >= target.
    """
    cur = u[nodes[s]]
    t0, _ = node_T(u, s, cur, nodes, pidx, pw, dlt, dirs, quarter, model, q)
    if t0 >= target:
        return cur, OK
    d = dlt[s]
    inc = d * d * tol
    hi = cur
    lo = cur - inc
    while True:
        tl, _ = node_T(u, s, lo, nodes, pidx, pw, dlt, dirs, quarter, model, q)
        if tl >= target:
            break
        hi = lo
        if inc >= cap:
            return cur, BRACKET_FAIL
        inc = min(2.0 * inc, cap)
        lo = cur - inc
    # invariant: T(lo) >= target > T(hi)
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return lo, OK
        tm, _ = node_T(u, s, mid, nodes, pidx, pw, dlt, dirs, quarter, model, q)
        if tm >= target:
            lo = mid
            if tm - target <= tol:
                return lo, OK
        else:
            hi = mid


@njit(**_opts)
def lower_sweep(u, order, target, tol, cap, nodes, pidx, pw, dlt, dirs, quarter, model):
    """Gauss-Seidel pass of :func:`lower_update`; returns (max decrease, failed slot)."""
    q = np.empty(dirs.shape[0])
    max_dec = 0.0
    for r in range(order.shape[0]):
        s = order[r]
        new, status = lower_update(u, s, target[s], tol, cap, nodes, pidx, pw, dlt, dirs,
                                   quarter, model, q)
        if status == BRACKET_FAIL:
            return max_dec, s
        dec = u[nodes[s]] - new
        u[nodes[s]] = new
        if dec > max_dec:
            max_dec = dec
    return max_dec, -1
