"""Bridge geometry between disjoint loops, rational tilts and branch geodesics."""

from __future__ import annotations

from fractions import Fraction
from math import sqrt

import numpy as np

from ..errors import PreconditionError
from ..geodesics import distance_between_curves, integrate_geodesic


def junction_geometry(metric, alpha, beta, tol=1e-6):
    """Closest points ``a``, ``b``, distance ``r`` and bridge geodesic ``rho`` from ``a`` to ``b``.

    Returns the underlying :class:`CurvePair`; orthogonality residuals of
    the bridge against both loops are checked against ``tol``.
    """
    pair = distance_between_curves(metric, alpha, beta)
    worst = max(pair.residual_alpha, pair.residual_beta)
    if worst > tol:
        raise PreconditionError(f"bridge is not orthogonal to the loops (residual {worst:.3e})")
    return pair


def junction_scalar(t, r):
    return 2 * t / sqrt(r * r + t * t)


def choose_rational_tilt(r, target_t, m_max=64):
    """Tilt with rational junction scalar ``lam = n / m`` closest to the target.

    Returns ``(t, lam, m, n)`` with ``lam`` a :class:`Fraction` and ``t``
    recomputed from ``lam`` by inverting ``lam = 2t / sqrt(r^2 + t^2)``.
    """
    if not target_t > 0:
        raise PreconditionError("target tilt must be positive")
    lam_target = Fraction(junction_scalar(target_t, r))
    lam = lam_target.limit_denominator(m_max)
    if lam <= 0:
        lam = Fraction(1, m_max)
    if not 0 < lam < 2:
        raise AssertionError("junction scalar left (0, 2)")
    t = float(lam) * r / sqrt(4 - float(lam) ** 2)
    return t, lam, lam.denominator, lam.numerator


def branch_geodesics(metric, a, v, e, t, r, chart=0, steps=None):
    """Tilted vertex ``a_t = exp_a(t e)`` and the two branch geodesics ending there.

    ``v`` is the unit loop tangent at ``a`` and ``e`` the unit bridge
    direction at ``a`` (pointing to the far loop). The branches are
    parametrised on ``[-1/2, 0]`` and arrive at ``a_t`` with velocities
    ``+-r P(v) + t P(e)``; ``P`` is parallel transport along ``exp_a(s t e)``.
    Returns ``(a_t, gamma_plus, gamma_minus, info)``.
    """
    a = np.asarray(a, float)
    v = np.asarray(v, float)
    e = np.asarray(e, float)
    if abs(float(metric.inner(a, v, e, chart))) > 1e-6:
        raise PreconditionError("bridge direction is not orthogonal to the loop tangent")
    if t >= metric.injectivity_radius_bound / 4:
        raise PreconditionError("tilt must stay below a quarter of the injectivity radius")
    if t > 0:
        seg = integrate_geodesic(metric, a, t * e, 1.0, chart=chart, transport=[v, e])
        a_t, c_t = seg.points[-1], int(seg.chart_ids[-1])
        Pv, Pe = seg.meta["transported"][-1]
    else:
        a_t, c_t, Pv, Pe = a.copy(), chart, v.copy(), e.copy()
    branches = []
    for sign in (1.0, -1.0):
        w = sign * r * Pv + t * Pe
        g = integrate_geodesic(metric, a_t, -w, 0.5, chart=c_t, steps=steps)
        branches.append(g.reversed())
    speeds = [float(metric.norm(a_t, b.velocities[-1], c_t)) for b in branches]
    inward = sum(-b.velocities[-1] / s for b, s in zip(branches, speeds))
    info = {
        "transported_v": Pv,
        "transported_e": Pe,
        "speeds": speeds,
        "inward_sum": inward,
        "chart": c_t,
    }
    return a_t, branches[0], branches[1], info
