"""Twisted figure-eight net from two closed geodesics crossing at one point."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.spatial import cKDTree

from ..conformal import ConformalStack, apply_conformal, min_cloud_distance
from ..errors import DegeneracyError, DomainError, ConstructionError, PreconditionError, SeparationError
from ..fermi import fermi_tube
from ..geodesics import RESOLUTION, _embedded, closed_point, rk4_geodesics
from ..manifolds import MetricField
from ..net import Edge, GammaNet, WeightedMultigraph
from .eyeglass import _stage, verify_construction
from .loops import loop_kill_factors, restart_closed, tilted_loop


class RescaledChart(MetricField):
    """Chart ``x -> exp_v(scale E x)`` with metric ``scale^-2`` times the pull-back.

    ``E`` is an orthonormal frame at ``v`` (columns), so the chart metric
    is the identity at the origin and radial lines are geodesics.
    """

    def __init__(self, base, v, frame, scale, chart=0, radius=1.5, steps=None, fd_step=1e-3):
        self.base = base
        self.v = np.asarray(v, float)
        self.frame = np.asarray(frame, float)
        self.scale = float(scale)
        self.base_chart = int(chart)
        self.radius = float(radius)
        self.dim = base.dim
        self.injectivity_radius_bound = min(base.injectivity_radius_bound / self.scale, self.radius)
        self.steps = steps or max(32, int(np.ceil(RESOLUTION * self.scale * self.radius)))
        self.fd_step = fd_step

    def phi(self, x):
        x = np.asarray(x, float)
        flat = x.reshape(-1, self.dim)
        w = self.scale * flat @ self.frame.T
        if self.base.is_flat:
            out = self.v + w
        else:
            p = np.repeat(self.v[None], len(flat), 0)
            xs, _, cs, _ = rk4_geodesics(self.base, p, w, 1.0, self.steps, self.base_chart)
            out, ce = xs[-1], cs[-1]
            if np.any(ce != self.base_chart):
                out = np.where(
                    (ce != self.base_chart)[:, None],
                    self.base.to_chart(out, ce, np.full(len(ce), self.base_chart)),
                    out,
                )
        return out.reshape(x.shape)

    def jacobian(self, x):
        x = np.asarray(x, float)
        if self.base.is_flat:
            return np.broadcast_to(self.scale * self.frame, x.shape + (self.dim,)).copy()
        h = self.fd_step
        cols = []
        for l in range(self.dim):
            e = np.zeros(self.dim)
            e[l] = h
            # fourth-order central stencil
            d = (-self.phi(x + 2 * e) + 8 * self.phi(x + e) - 8 * self.phi(x - e) + self.phi(x - 2 * e)) / (12 * h)
            cols.append(d)
        return np.stack(cols, axis=-1)

    def eval(self, x, chart=0):
        J = self.jacobian(x)
        g = self.base.eval(self.phi(x), self.base_chart)
        return np.einsum("...ai,...ab,...bj->...ij", J, g, J) / self.scale**2

    def check_domain(self, x, chart=0):
        super().check_domain(x, chart)
        if np.any(np.linalg.norm(np.asarray(x, float), axis=-1) > self.radius):
            raise DomainError("point outside the rescaled chart ball")


def rescaled_chart(metric, v, r, frame=None, chart=0):
    """Normal-coordinate chart of radius 3/2 at ``v`` with scale ``2r/3``."""
    if not 0 < r < metric.injectivity_radius_bound:
        raise PreconditionError("chart radius must lie in (0, r_inj)")
    v = np.asarray(v, float)
    if frame is None:
        frame = _orthonormal_basis(metric, v, np.eye(metric.dim), chart)
    return RescaledChart(metric, v, frame, 2 * r / 3, chart)


def _orthonormal_basis(metric, x, vectors, chart=0):
    out = []
    for u in vectors:
        u = np.asarray(u, float).copy()
        for e in out:
            u = u - metric.inner(x, u, e, chart) * e
        nu = float(metric.norm(x, u, chart))
        if nu > 1e-10:
            out.append(u / nu)
    return np.array(out).T


def aligned_frame(metric, v, da, db, chart=0):
    """Frame ``(e1, e2, e3, ...)`` with ``e1 ~ da``, ``span(e1, e2) = span(da, db)``.

    Returns the frame (columns) and ``sin`` of the angle between the tangents.
    """
    e1 = da / metric.norm(v, da, chart)
    cos = float(metric.inner(v, e1, db, chart) / metric.norm(v, db, chart))
    sin = float(np.sqrt(max(0.0, 1 - cos * cos)))
    if sin < 1e-3:
        raise DegeneracyError(f"tangential intersection (|sin angle| = {sin:.3e})", stage="chart")
    if metric.dim < 3:
        raise PreconditionError("the twisted figure-eight needs dimension at least 3")
    # complete with the coordinate axes that are least aligned with the plane
    plane = _orthonormal_basis(metric, v, [da, db], chart)
    rest = np.eye(metric.dim)
    resid = [float(metric.norm(v, u - plane @ (plane.T @ metric.eval(v, chart) @ u), chart)) for u in rest]
    order = np.argsort(resid)[::-1]
    frame = _orthonormal_basis(metric, v, [da, db] + [rest[i] for i in order], chart)
    return frame[:, : metric.dim], sin


def locate_intersection(metric, alpha, beta, tol=1e-9):
    """Parameters ``(s_alpha, s_beta)`` of a crossing point of two closed curves."""
    pa, box = _embedded(metric, alpha)
    pb, _ = _embedded(metric, beta)
    tree = cKDTree(pb[:-1], boxsize=box)
    d, j = tree.query(pa[:-1])
    i0 = int(np.argmin(d))
    s0 = np.array([alpha.params[i0], beta.params[int(j[i0])]])
    ca, cb = int(alpha.chart_ids[0]), int(beta.chart_ids[0])

    def gap(s):
        ex = metric.embed(closed_point(alpha, s[0]), ca)
        ey = metric.embed(closed_point(beta, s[1]), cb)
        dv = ey - ex
        if box is not None:
            dv = dv - np.round(dv / box) * box
        return dv

    res = optimize.least_squares(gap, s0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if np.linalg.norm(gap(res.x)) > tol:
        raise PreconditionError("curves do not intersect")
    return float(res.x[0]), float(res.x[1])


@dataclass
class FigureEightPlan:
    v: np.ndarray
    chart: RescaledChart
    t: float
    r: float
    omega: tuple
    tau: tuple
    sin_angle: float
    connector_span: float
    separation: float
    loop_a: object
    loop_b: object
    boundary: dict
    meta: dict = field(default_factory=dict)

    def chart_balance(self):
        """Sum of the four chart-level inward unit tangents (zero exactly)."""
        w = (self.omega[0] + self.omega[1] + self.tau[0] + self.tau[1]) / np.sqrt(1 + self.t**2)
        return float(np.abs(w).max())

    def loops(self):
        return [self.loop_a, self.loop_b]

    def summary(self):
        return {
            "v": self.v.tolist(),
            "t": self.t,
            "r": self.r,
            "scale": self.chart.scale,
            "omega": [w.tolist() for w in self.omega],
            "tau": [w.tolist() for w in self.tau],
            "sin_angle": self.sin_angle,
            "connector_span": self.connector_span,
            "separation": self.separation,
            "boundary": self.boundary,
            "knots": {"alpha": self.loop_a.knots, "beta": self.loop_b.knots},
        }


def _arc_cloud(curve, s_v, lo, hi, n=400):
    s = np.concatenate([s_v + np.linspace(lo, hi, n), s_v - np.linspace(lo, hi, n)])
    return closed_point(curve, s)


def build_figure_eight(metric, alpha, beta, t, k=1, v=None, r=None, connector_factor=2.0, stationarity_tol=1e-6,
                       seed=0):
    """Perturbed metric, figure-eight net, plan and report.

    ``r`` sets the chart scale ``l = 2r/3``; branches run over ``l/2`` of
    each loop on both sides of ``v`` and connectors over
    ``connector_factor * l`` beyond.
    """
    t0 = time.time()
    ca, cb = int(alpha.chart_ids[0]), int(beta.chart_ids[0])
    if v is None:
        s_a, s_b = locate_intersection(metric, alpha, beta)
    else:
        from .loops import locate_on_curve

        s_a = locate_on_curve(metric, alpha, v)
        s_b = locate_on_curve(metric, beta, v)
    v_a = closed_point(alpha, s_a)
    v_b = closed_point(beta, s_b)
    if metric.n_charts > 1 and ca != cb:
        raise DomainError("both loops must be given in one chart")
    da = closed_point(alpha, s_a, 1)
    db = closed_point(beta, s_b, 1)
    frame, sin = aligned_frame(metric, v_a, da, db, ca)
    La = alpha.span[1] - alpha.span[0]
    Lb = beta.span[1] - beta.span[0]
    la = alpha.length(metric)
    lb = beta.length(metric)
    if r is None:
        r = min(0.9 * metric.injectivity_radius_bound, 0.25 * min(la, lb))
    chart = rescaled_chart(metric, v_a, r, frame, ca)
    ell = chart.scale
    c = connector_factor * ell

    # chart-level tilted velocities; beta's tangent is (cos, sin, 0, ...)
    n = metric.dim
    e = np.eye(n)
    coords_b = np.linalg.lstsq(frame, db / metric.norm(v_a, db, ca), rcond=None)[0]
    coords_b[2:] = 0.0
    omega = (e[0] + t * e[2], -e[0] + t * e[2])
    tau = (coords_b - t * e[2], -coords_b - t * e[2])

    # arclength per unit parameter on each loop
    sp_a = float(metric.norm(v_a, da, ca))
    sp_b = float(metric.norm(v_b, db, cb))
    clouds = [
        _arc_cloud(alpha, s_a, ell / 2 / sp_a, (ell / 2 + c) / sp_a),
        _arc_cloud(beta, s_b, ell / 2 / sp_b, (ell / 2 + c) / sp_b),
    ]
    d = min_cloud_distance(metric, clouds)
    if not d > 1e-9:
        raise SeparationError("connector arcs of the two loops touch", stage="separation")
    cutoff = d / 4
    tube_radius = min(0.9 * r, 0.49 * metric.injectivity_radius_bound)

    loops = []
    for curve, s0, vert, w, cid, spd in ((alpha, s_a, v_a, omega, ca, sp_a), (beta, s_b, v_b, tau, cb, sp_b)):
        L = curve.span[1] - curve.span[0]
        base = restart_closed(curve, s0 - L / 2)
        tube = _stage("tube", fermi_tube, metric, base, tube_radius)
        w_out = ell * frame @ w[0]
        w_back = ell * frame @ w[1]
        tl = _stage("assemble", tilted_loop, metric, tube, s0, vert, w_out, w_back, c / spd, k, chart=cid)
        loops.append(tl)
    loop_a, loop_b = loops
    factors = _stage("conformal", loop_kill_factors, metric, loop_a, cutoff, k)
    factors += _stage("conformal", loop_kill_factors, metric, loop_b, cutoff, k)
    stack = _stage("conformal", apply_conformal, ConformalStack(metric, factors, declared_disjoint=True), seed=seed)

    graph = WeightedMultigraph(("v",), {"alpha": Edge("v", "v", 1), "beta": Edge("v", "v", 1)})
    net = GammaNet(
        graph, {"v": v_a}, {"alpha": loop_a.curve, "beta": loop_b.curve}, {"v": ca}, metric.periods
    )
    boundary = {
        "alpha": [loop_a.branch_out.points[-1].tolist(), loop_a.branch_back.points[-1].tolist()],
        "beta": [loop_b.branch_out.points[-1].tolist(), loop_b.branch_back.points[-1].tolist()],
    }
    plan = FigureEightPlan(v_a, chart, float(t), float(r), omega, tau, sin, c, d, loop_a, loop_b, boundary)
    report = verify_construction(stack, net, loops, stationarity_tol, k)
    sd = stack.support_distance(seed=seed)
    report.update(
        plan=plan.summary(),
        chart_balance=plan.chart_balance(),
        pair_sums=[float(np.abs(omega[0] + omega[1] - 2 * t * e[2]).max()),
                   float(np.abs(tau[0] + tau[1] + 2 * t * e[2]).max())],
        separation=d,
        support_distance=sd,
        supports_separated=bool(sd > d / 2),
        runtime_s=time.time() - t0,
    )
    if not (report["stationary"] and report["embedded"] and report["essential"]):
        raise ConstructionError("figure-eight verification failed", stage="verify", report=report,
                                stack=stack, net=net, plan=plan)
    return stack, net, plan, report
