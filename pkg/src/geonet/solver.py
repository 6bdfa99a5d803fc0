"""Closed geodesic search, net relaxation and continuation under metric change."""

from __future__ import annotations

import numpy as np
from scipy.optimize import least_squares

from .curves import DiscretizedCurve
from .errors import ContinuationError, ConvergenceError, DegeneracyError, GeonetError
from .geodesics import RESOLUTION, geodesic_bvp, integrate_geodesic, rk4_geodesics
from .net import is_stationary, net_length, vertex_defect


def find_closed_geodesic(metric, seed_loop, tol=1e-8, steps=None, max_nfev=400):
    """Periodic-orbit shooting from a closed seed curve.

    Unknowns are a start point, a unit initial velocity and the period; a
    slice condition through the seed's first point removes the phase.
    """
    c0 = int(seed_loop.chart_ids[0])
    shift = seed_loop.shift
    xs0 = seed_loop.points[0]
    vs0 = seed_loop.velocities[0] / metric.norm(xs0, seed_loop.velocities[0], c0)
    L0 = seed_loop.length(metric)
    n = metric.dim
    if steps is None:
        steps = max(128, int(np.ceil(RESOLUTION * L0)))

    def shoot(Z):
        # batch of unknown vectors -> end points in the start chart
        X0, V0, L = Z[:, :n], Z[:, n : 2 * n], Z[:, -1:]
        xs, vs, cs, _ = rk4_geodesics(metric, X0, V0 * L, 1.0, steps, c0)
        xe, ve, ce = xs[-1], vs[-1] / L, cs[-1]
        if np.any(ce != c0):
            xe, ve = metric.transition(xe, ve, ce, np.full(len(ce), c0))
        return xe, ve

    def resid_batch(Z):
        X0, V0 = Z[:, :n], Z[:, n : 2 * n]
        xe, ve = shoot(Z)
        extra = np.stack([(X0 - xs0) @ vs0, metric.inner(X0, V0, V0, c0) - 1.0], -1)
        return np.concatenate([xe - X0 - shift, ve - V0, extra], -1)

    def resid(z):
        return resid_batch(z[None])[0]

    def jac(z):
        eps = 1e-7
        Z = np.vstack([z[None], z[None] + eps * np.eye(len(z))])
        R = resid_batch(Z)
        return (R[1:] - R[0]).T / eps

    z0 = np.concatenate([xs0, vs0, [L0]])
    sol = least_squares(
        resid, z0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev
    )
    x0, v0, L = sol.x[:n], sol.x[n : 2 * n], float(sol.x[-1])
    closure = float(np.linalg.norm(resid(sol.x)))
    if L < 1e-3 * L0:
        raise DegeneracyError("closed geodesic search collapsed to a point")
    if not closure < tol:
        raise ConvergenceError(f"closed geodesic search stalled (closure {closure:.3e})")
    curve = integrate_geodesic(metric, x0, v0 * L, 1.0, steps=steps, chart=c0)
    pts, vel = curve.points.copy(), curve.velocities.copy()
    ce = int(curve.chart_ids[-1])
    xe, ve = (x0 + shift, v0 * L) if ce == c0 else metric.transition(x0, v0 * L, c0, ce)
    pts[-1], vel[-1] = xe, ve
    out = DiscretizedCurve(
        curve.params * L, pts, vel / L, curve.accelerations / L**2, curve.chart_ids, closed=True, shift=shift
    )
    out.meta["closure"] = closure
    out.meta["length"] = L
    return out


def _unit_guess(metric, curve):
    """Unit-time initial velocity of the constant-speed reparametrisation."""
    x, v, c = curve.points[0], curve.velocities[0], int(curve.chart_ids[0])
    return v / metric.norm(x, v, c) * curve.length(metric)


def _solve_edges(metric, net, positions, guesses, eids=None):
    curves = dict(net.edge_curves)
    for eid, e in net.edges():
        if eids is not None and eid not in eids:
            continue
        p = positions[e.tail]
        q = positions[e.head]
        cp, cq = net.vertex_charts[e.tail], net.vertex_charts[e.head]
        c = geodesic_bvp(metric, p, q, guess=guesses[eid], chart=cp, chart_q=cq)
        if c.closed != net.edge_curves[eid].closed:
            meta = c.meta
            c = DiscretizedCurve(c.params, c.points, c.velocities, c.accelerations, c.chart_ids, True, c.points[-1] - c.points[0])
            c.meta.update(meta)
        curves[eid] = c
    return curves


def _defects(metric, net, free):
    return np.concatenate([vertex_defect(metric, net, v) for v in free]) if free else np.zeros(0)


def _predicted_velocities(net, dP):
    """End velocities of every edge after moving vertices by ``dP`` (first order)."""
    out = {}
    for eid, e in net.edges():
        c = net.edge_curves[eid]
        sens = c.meta["sensitivity"]
        zero = np.zeros(c.dim)
        dp = np.asarray(dP.get(e.tail, zero), float)
        dq = np.asarray(dP.get(e.head, zero), float)
        dw = np.linalg.solve(sens["dx_dw"], dq - sens["dx_dp"] @ dp)
        dv = sens["dv_dw"] @ dw + sens["dv_dp"] @ dp
        out[eid] = (c.velocities[0] + dw, c.velocities[-1] + dv, dw)
    return out


def _linear_defects(metric, net, free, dP):
    vel = _predicted_velocities(net, dP)
    rows = []
    for v in free:
        chart = net.vertex_charts[v]
        x = net.vertex_positions[v] + dP.get(v, 0.0)
        total = np.zeros(metric.dim)
        for eid, end in net.graph.ends_at(v):
            w = vel[eid][0] if end == 0 else -vel[eid][1]
            total = total + net.graph.edges[eid].multiplicity * w / metric.norm(x, w, chart)
        rows.append(total)
    return np.concatenate(rows)


def _sensitive(net):
    # linearisation needs both curve ends in their vertex charts
    for eid, e in net.edges():
        c = net.edge_curves[eid]
        if "sensitivity" not in c.meta:
            return False
        if c.chart_ids[0] != net.vertex_charts[e.tail] or c.chart_ids[-1] != net.vertex_charts[e.head]:
            return False
    return True


def _defect_jacobian(metric, cur, free, D, fd_step):
    n = metric.dim
    J = np.empty((len(D), len(free) * n))
    if _sensitive(cur):
        base = _linear_defects(metric, cur, free, {})
        for a, v in enumerate(free):
            for j in range(n):
                d = np.zeros(n)
                d[j] = fd_step
                J[:, a * n + j] = (_linear_defects(metric, cur, free, {v: d}) - base) / fd_step
        return J
    g = {eid: cur.edge_curves[eid].meta["initial_velocity"] for eid, _ in cur.edges()}
    for a, v in enumerate(free):
        touched = [eid for eid, _ in cur.graph.ends_at(v)]
        for j in range(n):
            p2 = {w: q.copy() for w, q in cur.vertex_positions.items()}
            p2[v][j] += fd_step
            curves = _solve_edges(metric, cur, p2, g, set(touched))
            J[:, a * n + j] = (_defects(metric, cur.with_curves(curves, p2), free) - D) / fd_step
    return J


def relax_net(metric, net, max_iter=20, tol=1e-8, fixed=(), fd_step=1e-6, collapse=1e-3):
    """Drive a net to stationarity with its combinatorial type fixed.

    Edges are kept geodesic by re-solving each one as a boundary value
    problem; free vertex positions then follow damped Newton steps on the
    vertex defect, with the Jacobian taken from the first-order response
    of each edge's end velocities. The iteration history (length, defect)
    is stored in ``meta["history"]``.
    """
    rep = is_stationary(metric, net, tol, fixed)
    if rep.stationary:
        out = net.with_curves(dict(net.edge_curves))
        out.meta.update(iterations=0, history=[(rep.total_length, rep.max_defect)])
        return out
    init_len = {eid: net.edge_curves[eid].length(metric) for eid, _ in net.edges()}
    guesses = {eid: _unit_guess(metric, net.edge_curves[eid]) for eid, _ in net.edges()}
    pos = {v: p.copy() for v, p in net.vertex_positions.items()}
    free = [v for v in net.vertices if v not in fixed]

    def build(positions, guess):
        curves = _solve_edges(metric, net, positions, guess)
        for eid, c in curves.items():
            L = c.meta.get("speed", None) or c.length(metric)
            if L < collapse * init_len[eid]:
                raise DegeneracyError(f"edge {eid!r} collapsed during relaxation", stage="relax")
        return net.with_curves(curves, positions)

    cur = build(pos, guesses)
    D = _defects(metric, cur, free)
    hist = [(net_length(metric, cur), float(np.abs(D).max(initial=0.0)))]
    it = 0
    n = metric.dim
    while np.abs(D).max(initial=0.0) >= tol and free:
        it += 1
        if it > max_iter:
            raise ConvergenceError(f"relaxation did not converge (defect {np.abs(D).max():.3e})", stage="relax")
        J = _defect_jacobian(metric, cur, free, D, fd_step)
        step = np.linalg.lstsq(J, -D, rcond=1e-12)[0]
        lam = 1.0
        while True:
            dP = {v: lam * step[a * n : (a + 1) * n] for a, v in enumerate(free)}
            p2 = {w: q + dP.get(w, 0.0) for w, q in cur.vertex_positions.items()}
            if _sensitive(cur):
                g = {eid: cur.edge_curves[eid].meta["initial_velocity"] + pv[2]
                     for eid, pv in _predicted_velocities(cur, dP).items()}
            else:
                g = {eid: cur.edge_curves[eid].meta["initial_velocity"] for eid, _ in cur.edges()}
            try:
                trial = build(p2, g)
                D2 = _defects(metric, trial, free)
                ok = np.linalg.norm(D2) < np.linalg.norm(D)
            except DegeneracyError:
                raise
            except GeonetError:
                ok = False
            if ok:
                break
            lam *= 0.5
            if lam < 1e-6:
                raise ConvergenceError("relaxation line search failed", stage="relax")
        cur, D = trial, D2
        hist.append((net_length(metric, cur), float(np.abs(D).max(initial=0.0))))
    cur.meta.update(iterations=it, history=hist)
    return cur


def _arclength_samples(metric, curve, n=129):
    s = curve.params
    x, v = curve.points, curve.velocities
    sp = metric.norm(x, v, curve.chart_ids)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (sp[1:] + sp[:-1]) * np.diff(s))])
    frac = np.linspace(0, 1, n)
    return curve.evaluate(np.interp(frac * cum[-1], cum, s)) if curve.single_chart else np.array(
        [np.interp(frac * cum[-1], cum, x[:, j]) for j in range(x.shape[1])]
    ).T


def net_distance(metric, a, b):
    """Max vertex displacement plus max edge sup-distance at matched arclength fractions."""
    dv = max(
        float(np.linalg.norm(metric.displacement(a.vertex_positions[v], b.vertex_positions[v])))
        for v in a.vertices
    )
    de = 0.0
    for eid, _ in a.edges():
        pa = _arclength_samples(metric, a.edge_curves[eid])
        pb = _arclength_samples(metric, b.edge_curves[eid])
        de = max(de, float(np.max(np.linalg.norm(metric.displacement(pa, pb), axis=-1))))
    return dv + de, dv, de


def continue_net(metric_new, net, bound=None, fixed=(), tol=1e-8, max_iter=20):
    """Stationary net for ``metric_new`` with the same type, near ``net``."""
    out = relax_net(metric_new, net, max_iter=max_iter, tol=tol, fixed=fixed)
    if not out.graph.same_type(net.graph):
        raise ContinuationError("combinatorial type changed", stage="continue")
    dist, dv, de = net_distance(metric_new, net, out)
    if bound is not None and dist > bound:
        raise ContinuationError(f"continued net moved {dist:.3e} > bound {bound:.3e}", stage="continue")
    out.meta.update(distance=dist, vertex_displacement=dv, edge_distance=de)
    return out
