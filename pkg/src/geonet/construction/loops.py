"""Tilted loops: a closed geodesic reshaped near one vertex, and the factors that straighten it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ..conformal import curvature_kill_factor
from ..curves import DiscretizedCurve
from ..errors import AssemblyError
from ..fermi import fermi_tube
from ..geodesics import closed_point, integrate_geodesic
from .graphs import PiecewiseOffset, graph_curve, graph_over_curve, taylor_cutoff_connector


def restart_closed(curve, s_start, n=None):
    """Resample a closed curve on ``[s_start, s_start + L]`` (same parameter values, unwrapped)."""
    a, b = curve.span
    L = b - a
    n = curve.n_samples if n is None else n
    s = s_start + np.linspace(0.0, L, n)
    x = closed_point(curve, s)
    v = closed_point(curve, s, 1)
    acc = closed_point(curve, s, 2)
    return DiscretizedCurve(s, x, v, acc, np.full(n, curve.chart_ids[0]), closed=True, shift=curve.shift)


def locate_on_curve(metric, curve, point):
    """Parameter of the sample-refined closest point of ``curve`` to ``point``."""
    d = np.linalg.norm(metric.displacement(curve.points, point), axis=-1)
    i = int(np.argmin(d))
    lo = curve.params[max(i - 1, 0)]
    hi = curve.params[min(i + 1, curve.n_samples - 1)]
    f = lambda s: float(np.sum(metric.displacement(closed_point(curve, s), point) ** 2))  # noqa: E731
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-14})
    return float(res.x)


@dataclass
class TiltedLoop:
    """A loop based at ``vertex`` made of branch graphs, connectors and the untouched rest."""

    vertex: np.ndarray
    s_vertex: float
    knots: dict
    branch_out: DiscretizedCurve
    branch_back: DiscretizedCurve
    h_out: object
    h_back: object
    u_out: object
    u_back: object
    offset: PiecewiseOffset
    curve: DiscretizedCurve
    tube: object
    connector_spans: list
    meta: dict = field(default_factory=dict)

    def connector_matching(self, K):
        from .graphs import matching_defects

        return {
            "out": matching_defects(self.h_out, self.u_out, self.knots["match_out"], K),
            "back": matching_defects(self.h_back, self.u_back, self.knots["match_back"], K),
        }


def _grid(lo, hi, ds):
    n = max(8, int(np.ceil((hi - lo) / ds)))
    return np.linspace(lo, hi, n + 1)


def tilted_loop(metric, tube, s_vertex, vertex, w_out, w_back, connector_span, k, ds=None, chart=0):
    """Assemble a loop leaving ``vertex`` with velocity ``w_out`` and returning along ``-w_back``.

    ``tube`` is a Fermi tube of the closed base loop. Each branch is the
    geodesic over unit-time span ``[0, 1/2]``; its graph over the base is
    continued by a Taylor-cutoff connector of length ``connector_span``
    and the loop then follows the base.
    """
    base = tube.base
    L = base.span[1] - base.span[0]
    out = integrate_geodesic(metric, vertex, w_out, 0.5, chart=chart)
    back = integrate_geodesic(metric, vertex, w_back, 0.5, chart=chart)
    h_out = graph_over_curve(metric, out, tube)
    h_back_raw = graph_over_curve(metric, back, tube)
    # place the returning branch at the far end of the parameter window
    lo_b, hi_b = h_back_raw.domain
    off = s_vertex + L - hi_b
    off = np.round(off / L) * L
    lo_b, hi_b = lo_b + off, hi_b + off
    from .graphs import GraphOffset

    h_back = GraphOffset([c.copy() for c in h_back_raw.series], (lo_b, hi_b))
    for c in h_back.series:
        c.domain = c.domain + off
    h_back.residual = h_back_raw.residual
    s3 = h_out.domain[1]
    s1 = h_back.domain[0]
    c = connector_span
    if abs(h_out.domain[0] - s_vertex) > 1e-8 or abs(h_back.domain[1] - (s_vertex + L)) > 1e-8:
        raise AssemblyError("branches do not start at the vertex parameter")
    if s3 + c >= s1 - c:
        raise AssemblyError("connector spans overlap; the loop is too short for the tilt geometry")
    u_out = taylor_cutoff_connector(h_out, s3, (s3, s3 + c), k)
    u_back = taylor_cutoff_connector(h_back, s1, (s1 - c, s1), k)
    nd = tube.frame.shape[1]
    H = PiecewiseOffset(
        [
            (s_vertex, s3, h_out),
            (s3, s3 + c, u_out),
            (s1 - c, s1, u_back),
            (s1, s_vertex + L, h_back),
        ],
        nd,
    )
    if ds is None:
        ds = c / 64
    grid = np.unique(
        np.concatenate(
            [
                _grid(s_vertex, s3, ds),
                _grid(s3, s3 + c, ds),
                _grid(s3 + c, s1 - c, 4 * ds),
                _grid(s1 - c, s1, ds),
                _grid(s1, s_vertex + L, ds),
            ]
        )
    )
    loop = graph_curve(tube, H, grid, closed=True, shift=base.shift)
    # pin both ends to the vertex exactly
    pts = loop.points.copy()
    pts[0] = vertex
    pts[-1] = vertex + base.shift
    loop = DiscretizedCurve(loop.params, pts, loop.velocities, loop.accelerations, loop.chart_ids, True, base.shift)
    knots = {
        "vertex": s_vertex,
        "match_out": s3,
        "far_out": s3 + c,
        "far_back": s1 - c,
        "match_back": s1,
        "end": s_vertex + L,
    }
    spans = [(s3, s3 + c), (s1 - c, s1)]
    return TiltedLoop(
        np.asarray(vertex, float), s_vertex, knots, out, back, h_out, h_back, u_out, u_back, H, loop, tube, spans
    )


def loop_kill_factors(metric, loop, cutoff, k, margin=None):
    """One curvature-killing factor per connector span of a tilted loop."""
    factors = []
    curve = loop.curve
    matches = (loop.knots["match_out"], loop.knots["match_back"])
    for lo, hi in loop.connector_spans:
        m = 0.25 * (hi - lo) if margin is None else margin
        # extend only on the far side; the branch side carries fit noise, not curvature
        lo_m = lo if np.isclose(lo, matches).any() else lo - m
        hi_m = hi if np.isclose(hi, matches).any() else hi + m
        sel = (curve.params >= lo_m - 1e-12) & (curve.params <= hi_m + 1e-12)
        grid = curve.params[sel]
        sub = graph_curve(loop.tube, loop.offset, grid)
        tube = fermi_tube(metric, sub, cutoff)
        factors.append(curvature_kill_factor(metric, sub, tube, cutoff, order=k + 3))
    return factors
