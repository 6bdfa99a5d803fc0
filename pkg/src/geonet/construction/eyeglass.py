"""Eyeglass net from two disjoint closed geodesics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..conformal import ConformalStack, apply_conformal, conformal_geodesic_curvature
from ..errors import ConstructionError, GeonetError
from ..fermi import fermi_tube
from ..geodesics import closed_point, geodesic_bvp
from ..net import Edge, GammaNet, WeightedMultigraph, is_embedded, is_essential, is_stationary, vertex_defect
from .junction import branch_geodesics, choose_rational_tilt, junction_geometry, junction_scalar
from .loops import loop_kill_factors, restart_closed, tilted_loop


@dataclass
class EyeglassPlan:
    a: np.ndarray
    b: np.ndarray
    r: float
    rho: object
    t: float
    lam: Fraction
    m: int
    n: int
    a_t: np.ndarray
    b_t: np.ndarray
    branches_a: tuple
    branches_b: tuple
    loop_a: object
    loop_b: object
    knots: dict
    junction_info: dict = field(default_factory=dict)

    @property
    def lam_float(self):
        return junction_scalar(self.t, self.r)

    def loops(self):
        return [self.loop_a, self.loop_b]

    def summary(self):
        return {
            "r": self.r,
            "t": self.t,
            "lambda": f"{self.lam.numerator}/{self.lam.denominator}",
            "m": self.m,
            "n": self.n,
            "a_t": self.a_t.tolist(),
            "b_t": self.b_t.tolist(),
            "knots": self.knots,
        }


def _stage(name, fun, *args, **kw):
    try:
        return fun(*args, **kw)
    except GeonetError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


def _unit_tangent(metric, curve, s, chart):
    x = closed_point(curve, s)
    v = closed_point(curve, s, 1)
    return x, v / metric.norm(x, v, chart)


def plan_side(metric, loop, s0, e, t, r, k, tube_radius, connector_span, chart=0):
    """Tilted loop on one side of the bridge: vertex ``exp(t e)`` and its two branches."""
    L = loop.span[1] - loop.span[0]
    base = restart_closed(loop, s0 - L / 2)
    x, v = _unit_tangent(metric, base, s0, chart)
    a_t, g_plus, g_minus, info = _stage("branch", branch_geodesics, metric, x, v, e, t, r, chart)
    tube = _stage("tube", fermi_tube, metric, base, tube_radius)
    # leaving velocities: forward along -gamma_minus, backward along -gamma_plus
    w_out = -g_minus.velocities[-1]
    w_back = -g_plus.velocities[-1]
    tl = _stage("assemble", tilted_loop, metric, tube, s0, a_t, w_out, w_back, connector_span, k, chart=chart)
    info.update(base_point=x, tangent=v, transverse=e)
    return a_t, (g_plus, g_minus), tl, info


def build_eyeglass(metric, alpha, beta, target_t, k=1, m_max=64, stationarity_tol=1e-6, multiplicities=None,
                   strict=True, seed=0):
    """Perturbed metric, eyeglass net, plan and report.

    ``multiplicities=(m, n)`` uses the tilt exactly as given with fixed
    edge weights (the net is then balanced only when ``lambda(t) = n/m``);
    this serves continuation along the metric family. With
    ``strict=False`` a failed verification is reported, not raised.
    """
    t0 = time.time()
    pair = _stage("junction", junction_geometry, metric, alpha, beta)
    r = pair.r
    rational = multiplicities is None
    if rational:
        t, lam, m, n = choose_rational_tilt(r, target_t, m_max)
    else:
        t = float(target_t)
        m, n = (int(x) for x in multiplicities)
        lam = Fraction(n, m)
    ca = int(alpha.chart_ids[0])
    cb = int(beta.chart_ids[0])
    rho = pair.rho
    e_a = rho.velocities[0] / r
    e_b_raw = -rho.velocities[-1] / r
    ce = int(rho.chart_ids[-1])
    if ce != cb:
        _, e_b = metric.transition(rho.points[-1], e_b_raw, ce, cb)
    else:
        e_b = e_b_raw
    tube_radius = min(0.9 * r, 0.49 * metric.injectivity_radius_bound)
    c = r / 2
    a_t, br_a, loop_a, info_a = plan_side(metric, alpha, pair.s_alpha, e_a, t, r, k, tube_radius, c, ca)
    b_t, br_b, loop_b, info_b = plan_side(metric, beta, pair.s_beta, e_b, t, r, k, tube_radius, c, cb)

    cutoff = r / 4
    factors = _stage("conformal", loop_kill_factors, metric, loop_a, cutoff, k)
    factors += _stage("conformal", loop_kill_factors, metric, loop_b, cutoff, k)
    stack = _stage("conformal", apply_conformal, ConformalStack(metric, factors, declared_disjoint=True), seed=seed)

    guess = metric.displacement(b_t, a_t, cb)
    bridge = _stage("bridge", geodesic_bvp, stack, b_t, a_t, guess=guess, chart=cb, chart_q=ca)
    graph = WeightedMultigraph(
        ("a", "b"),
        {"alpha": Edge("a", "a", m), "bridge": Edge("b", "a", n), "beta": Edge("b", "b", m)},
    )
    net = GammaNet(
        graph,
        {"a": a_t, "b": b_t},
        {"alpha": loop_a.curve, "bridge": bridge, "beta": loop_b.curve},
        {"a": ca, "b": cb},
        metric.periods,
    )
    plan = EyeglassPlan(
        pair.a, pair.b, r, rho, t, lam, m, n, a_t, b_t, br_a, br_b, loop_a, loop_b,
        {"a": loop_a.knots, "b": loop_b.knots},
        {"a": info_a, "b": info_b},
    )
    report = verify_construction(stack, net, [loop_a, loop_b], stationarity_tol, k)
    report.update(plan=plan.summary(), junction_residuals=[pair.residual_alpha, pair.residual_beta])
    report["branch_balance"] = {
        side: float(np.linalg.norm(info["inward_sum"] + junction_scalar(t, r) * info["transported_e"]))
        for side, info in (("a", info_a), ("b", info_b))
    }
    report["support_distance"] = stack.support_distance(seed=seed)
    report["runtime_s"] = time.time() - t0
    if strict and not (report["stationary"] and report["embedded"] and report["essential"]):
        raise ConstructionError("eyeglass verification failed", stage="verify", report=report,
                                stack=stack, net=net, plan=plan)
    return stack, net, plan, report


def kill_identity(stack, curve, check_tol=np.inf):
    """Sup of the curvature of ``curve`` under ``stack`` by the formula and direct routes."""
    tube = fermi_tube(stack.base, curve, 1e-3, check_overlap=False)
    fa, da = conformal_geodesic_curvature(stack.base, stack, curve, tube, tol=check_tol)
    return {"formula_sup": fa.sup(), "direct_sup": da.sup(), "agreement": fa.agreement}


def verify_construction(stack, net, loops, tol, k):
    """Stationarity, embeddedness, essentiality and the two-route kill identity."""
    rep = is_stationary(stack, net, tol)
    kill = [kill_identity(stack, tl.curve) for tl in loops]
    embedded = is_embedded(net, 1e-4, stack)
    try:
        essential = is_essential(net, stack, tol)
    except GeonetError:
        essential = False
    defects = {str(v): vertex_defect(stack, net, v).tolist() for v in net.vertices}
    return {
        "schema": "construction-report",
        "stationarity_tolerance": tol,
        "stationary": bool(rep.stationary),
        "embedded": bool(embedded),
        "essential": bool(essential),
        "max_residual": rep.max_residual,
        "max_defect": rep.max_defect,
        "edge_residuals": {str(a): b for a, b in rep.edge_residuals.items()},
        "defect_norms": {str(a): b for a, b in rep.defect_norms.items()},
        "vertex_defects": defects,
        "kill_identity": kill,
        "total_length": rep.total_length,
        "k": k,
    }

