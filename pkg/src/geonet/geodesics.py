"""Geodesic integration, exponential map, parallel transport and shooting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.spatial import cKDTree

from .curves import DiscretizedCurve
from .errors import (
    AmbiguityError,
    ConvergenceError,
    DomainError,
    IntegrationError,
    IntersectionError,
    OutOfRangeError,
    ParametrizationError,
    PreconditionError,
)

#: default RK4 steps per unit of metric length
RESOLUTION = 256


def _rhs(metric, x, v, w, chart):
    acc = metric.acceleration(x, v, chart)
    if w is None:
        return v, acc, None
    return v, acc, metric.transport_rhs(x, v, w, chart)


def rk4_geodesics(metric, x0, v0, T, steps, chart=0, vectors=None):
    """Fixed-step classical RK4 for a batch of geodesics.

    ``x0, v0`` have shape ``(B, n)``; ``vectors`` (optional, ``(B, m, n)``)
    are parallel transported alongside. Returns per-step arrays of shape
    ``(steps + 1, B, ...)`` together with chart ids.
    """
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    B = x.shape[0]
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (B,)).copy()
    w = None if vectors is None else np.array(vectors, dtype=float)
    h = T / steps
    xs, vs, cs = [x.copy()], [v.copy()], [chart.copy()]
    ws = None if w is None else [w.copy()]
    try:
        for _ in range(steps):
            k1x, k1v, k1w = _rhs(metric, x, v, w, chart)
            half = lambda k: None if w is None else w + 0.5 * h * k  # noqa: E731
            k2x, k2v, k2w = _rhs(metric, x + 0.5 * h * k1x, v + 0.5 * h * k1v, half(k1w), chart)
            k3x, k3v, k3w = _rhs(metric, x + 0.5 * h * k2x, v + 0.5 * h * k2v, half(k2w), chart)
            k4x, k4v, k4w = _rhs(
                metric, x + h * k3x, v + h * k3v, None if w is None else w + h * k3w, chart
            )
            x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
            v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            if w is not None:
                w = w + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
                raise IntegrationError("geodesic integration produced non-finite values")
            if metric.n_charts > 1:
                new_x, new_v, new_c = metric.switch_chart(x, v, chart)
                if w is not None and np.any(new_c != chart):
                    flip = new_c != chart
                    for m in range(w.shape[1]):
                        _, wm = metric.transition(x, w[:, m], chart, new_c)
                        w[:, m] = np.where(flip[:, None], wm, w[:, m])
                x, v, chart = new_x, new_v, np.asarray(new_c, dtype=int)
            xs.append(x.copy())
            vs.append(v.copy())
            cs.append(chart.copy())
            if w is not None:
                ws.append(w.copy())
    except DomainError as exc:
        raise IntegrationError(f"chart exit during integration: {exc}") from exc
    out = np.array(xs), np.array(vs), np.array(cs)
    if w is None:
        return out + (None,)
    return out + (np.array(ws),)


def default_steps(metric, p, v, T, chart=0, resolution=RESOLUTION):
    speed = float(metric.norm(p, v, chart))
    return max(32, int(np.ceil(resolution * speed * abs(T))))


def integrate_geodesic(metric, p, v, T=1.0, steps=None, chart=0, resolution=RESOLUTION, transport=None):
    """Geodesic through ``p`` with initial velocity ``v`` over parameter span ``[0, T]``.

    ``transport`` optionally lists vectors at ``p`` to carry along; their
    transported values are stored in ``curve.meta["transported"]``.
    """
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    speed = float(metric.norm(p, v, chart))
    if not speed > 0:
        raise PreconditionError("initial velocity must be nonzero")
    if T <= 0:
        raise PreconditionError("parameter span must be positive")
    if steps is None:
        steps = default_steps(metric, p, v, T, chart, resolution)
    vecs = None if transport is None else np.asarray(transport, float)[None]
    xs, vs, cs, ws = rk4_geodesics(metric, p[None], v[None], T, steps, chart, vecs)
    x, vv, c = xs[:, 0], vs[:, 0], cs[:, 0]
    acc = np.empty_like(x)
    for cid in np.unique(c):
        sel = c == cid
        acc[sel] = metric.acceleration(x[sel], vv[sel], int(cid))
    curve = DiscretizedCurve(np.linspace(0.0, T, steps + 1), x, vv, acc, c)
    if ws is not None:
        curve.meta["transported"] = ws[:, 0]
    curve.meta["speed"] = speed
    return curve


def exp_map(metric, p, w, chart=0, steps=None, return_chart=False):
    """End point of the unit-time geodesic with initial velocity ``w``.

    Coordinates are returned as a lift (no wrapping on periodic charts).
    """
    p = np.asarray(p, float)
    w = np.asarray(w, float)
    nw = float(metric.norm(p, w, chart))
    if nw >= metric.injectivity_radius_bound:
        raise PreconditionError(
            f"|w| = {nw:.6g} is not below the injectivity radius bound "
            f"{metric.injectivity_radius_bound:.6g}"
        )
    if nw == 0.0:
        return (p.copy(), chart) if return_chart else p.copy()
    curve = integrate_geodesic(metric, p, w, 1.0, steps=steps, chart=chart)
    end = curve.points[-1].copy()
    return (end, int(curve.chart_ids[-1])) if return_chart else end


def parallel_transport(metric, along, w):
    """Transport ``w`` from the start of ``along`` to its end (RK4 per interval)."""
    if along.n_samples < 2:
        raise ParametrizationError("curve needs at least two samples")
    w = np.array(w, dtype=float)
    curve = along if along.single_chart else along._chart_consistent(metric)
    p = curve.params
    for i in range(len(p) - 1):
        h = p[i + 1] - p[i]
        idx = np.array([i, i, i])
        s = np.array([p[i], p[i] + 0.5 * h, p[i + 1]])
        xs, vs = curve._interval_eval(s, idx)
        c = int(curve.chart_ids[i])
        gam = metric.christoffel(xs, c)

        def f(j, ww):
            return -np.einsum("kij,i,j->k", gam[j], vs[j], ww)

        k1 = f(0, w)
        k2 = f(1, w + 0.5 * h * k1)
        k3 = f(1, w + 0.5 * h * k2)
        k4 = f(2, w + h * k3)
        w = w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if along.chart_ids[i + 1] != c:
            _, w = metric.transition(curve._right_points[i], w, c, along.chart_ids[i + 1])
    return w


def _target_lift(metric, p, q, w0):
    base = p + w0
    return base + metric.displacement(base, q)


def _chord_guess(metric, p, q, chart, chart_q, h=1e-6):
    # ambient chord pulled back to T_p; chart chords degenerate near a far pole
    n = p.size
    J = np.stack([(metric.embed(p + h * e, chart) - metric.embed(p - h * e, chart)) / (2 * h)
                  for e in np.eye(n)], axis=-1)
    d = metric.embed(q, chart_q) - metric.embed(p, chart)
    return np.linalg.lstsq(J, d, rcond=None)[0]


def geodesic_bvp(metric, p, q, guess=None, chart=0, chart_q=None, tol=1e-11, max_iter=40, steps=None):
    """Shooting solve for the geodesic from ``p`` to ``q`` over unit time.

    Without ``guess`` the minimising geodesic inside the injectivity radius
    is sought; a solution at or beyond the bound raises :class:`AmbiguityError`.
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    chart_q = chart if chart_q is None else chart_q
    if chart_q != chart:
        q_in_p = metric.to_chart(q, chart_q, chart)
    else:
        q_in_p = q
    if guess is None and metric.n_charts > 1:
        w = _chord_guess(metric, p, q, chart, chart_q)
    elif guess is None:
        w = metric.displacement(p, q_in_p, chart)
    else:
        w = np.asarray(guess, float).copy()
    target = _target_lift(metric, p, q_in_p, w)
    n = p.size
    r_inj = metric.injectivity_radius_bound
    if steps is None:
        est = float(metric.norm(p, w, chart)) if np.any(w) else 0.0
        steps = max(64, int(np.ceil(RESOLUTION * max(est, 0.1))))

    def shoot(ws, ps):
        xs, vs, cs, _ = rk4_geodesics(metric, ps, ws, 1.0, steps, chart)
        end, vend, ce = xs[-1], vs[-1], cs[-1]
        if metric.n_charts > 1 and np.any(ce != chart):
            flip = ce != chart
            e2, v2 = metric.transition(end, vend, ce, np.full(len(ce), chart))
            end = np.where(flip[:, None], e2, end)
            vend = np.where(flip[:, None], v2, vend)
        return end, vend, (xs[:, 0], vs[:, 0], cs[:, 0])

    if not np.any(w):
        if np.allclose(p, target):
            raise PreconditionError("end points coincide")
        w = target - p
    err = np.inf
    step = None
    lam = 1.0
    it = 0
    eye = np.eye(n)
    while True:
        eps = 1e-7 * max(1.0, np.linalg.norm(w))
        eps_p = 1e-7 * max(1.0, np.linalg.norm(p))
        # one batch: the trial velocity, velocity perturbations and start-point perturbations
        ws = np.vstack([w[None], w[None] + eps * eye, np.repeat(w[None], n, 0)])
        ps = np.vstack([np.repeat(p[None], n + 1, 0), p[None] + eps_p * eye])
        ends, vends, traj = shoot(ws, ps)
        res = ends[0] - target
        new_err = np.linalg.norm(res)
        if step is not None and not new_err < err:
            # backtrack along the previous Newton step
            lam *= 0.5
            if lam < 1e-4:
                raise ConvergenceError(f"geodesic shooting stalled (residual {err:.3e})")
            w = w_prev + lam * step
            continue
        err = new_err
        J = (ends[1 : n + 1] - ends[0]).T / eps
        if err < tol:
            break
        it += 1
        if it > max_iter:
            raise ConvergenceError(f"geodesic shooting did not converge (residual {err:.3e})")
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise AmbiguityError("shooting Jacobian is singular (conjugate end points)")
        step = np.linalg.solve(J, -res)
        w_prev = w
        lam = 1.0
        w = w + step
    x, v, c = traj
    acc = np.empty_like(x)
    for cid in np.unique(c):
        sel = c == cid
        acc[sel] = metric.acceleration(x[sel], v[sel], int(cid))
    curve = DiscretizedCurve(np.linspace(0.0, 1.0, steps + 1), x, v, acc, c)
    curve.meta["speed"] = float(metric.norm(p, w, chart))
    length = curve.meta["speed"]
    if guess is None and length >= r_inj * (1 - 1e-9):
        raise AmbiguityError(
            f"end points at distance {length:.6g} >= injectivity radius bound {r_inj:.6g}"
        )
    # first-order response of the end jet to the initial velocity and start point
    curve.meta["sensitivity"] = {
        "dx_dw": J,
        "dx_dp": (ends[n + 1 :] - ends[0]).T / eps_p,
        "dv_dw": (vends[1 : n + 1] - vends[0]).T / eps,
        "dv_dp": (vends[n + 1 :] - vends[0]).T / eps_p,
        "chart": chart,
    }
    curve.meta["initial_velocity"] = w
    curve.meta["endpoint_error"] = float(err)
    curve.meta["target"] = target
    return curve


def geodesic_distance(metric, p, q, chart=0, chart_q=None):
    if metric.is_flat:
        return float(np.linalg.norm(metric.displacement(p, q)))
    return geodesic_bvp(metric, p, q, chart=chart, chart_q=chart_q).meta["speed"]


def closed_point(curve, s, order=0):
    """Evaluate a closed curve at any parameter, unwrapping by its shift."""
    a, b = curve.span
    L = b - a
    k = np.floor((np.asarray(s, float) - a) / L)
    local = np.asarray(s, float) - k * L
    local = np.clip(local, a, b)
    out = curve.evaluate(local, order)
    if order == 0:
        out = out + np.multiply.outer(k, curve.shift) if np.ndim(k) else out + k * curve.shift
    return out


@dataclass
class CurvePair:
    a: np.ndarray
    b: np.ndarray
    r: float
    rho: DiscretizedCurve
    s_alpha: float
    s_beta: float
    residual_alpha: float
    residual_beta: float


def _embedded(metric, curve):
    pts = metric.embed(curve.points, curve.chart_ids)
    box = metric.embed_boxsize
    if box is not None:
        pts = np.where(pts >= box, pts - box, pts)
        pts = np.where(pts < 0, pts + box, pts)
    return pts, box


def distance_between_curves(metric, alpha, beta, intersection_tol=1e-7):
    """Closest pair of points between two disjoint closed curves and the bridge geodesic.

    Ties on the sample grid are broken by the lexicographically smallest
    ``(i_alpha, i_beta)`` sample pair.
    """
    pa, box = _embedded(metric, alpha)
    pb, _ = _embedded(metric, beta)
    tree = cKDTree(pb[:-1] if beta.closed else pb, boxsize=box)
    src = pa[:-1] if alpha.closed else pa
    d, j = tree.query(src)
    dmin = d.min()
    tie = dmin * (1 + 1e-9) + 1e-12
    i0 = int(np.flatnonzero(d <= tie)[0])
    cand = sorted(tree.query_ball_point(src[i0], tie))
    j0 = int(cand[0]) if cand else int(j[i0])
    s0 = np.array([alpha.params[i0], beta.params[j0]])

    if not (alpha.single_chart and beta.single_chart):
        raise DomainError("curve distance refinement needs single-chart curves")
    ca, cb = int(alpha.chart_ids[0]), int(beta.chart_ids[0])

    def chord(s):
        x = closed_point(alpha, s[0])
        y = closed_point(beta, s[1])
        if metric.is_flat:
            dvec = metric.displacement(x, y)
            dx = closed_point(alpha, s[0], 1)
            dy = closed_point(beta, s[1], 1)
            return 0.5 * dvec @ dvec, np.array([-dvec @ dx, dvec @ dy])
        ex = metric.embed(x, ca)
        ey = metric.embed(y, cb)
        dvec = ey - ex
        return 0.5 * dvec @ dvec, None

    if metric.is_flat:
        res = optimize.minimize(chord, s0, jac=True, method="BFGS", options={"gtol": 1e-14})
        s_opt = res.x
        r = float(np.sqrt(2 * chord(s_opt)[0]))
    else:
        res = optimize.minimize(lambda s: chord(s)[0], s0, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": 4000})
        s_opt = res.x
        r = float(np.sqrt(2 * chord(s_opt)[0]))
    if r < intersection_tol:
        raise IntersectionError("curves intersect; use the figure-eight construction")

    state = {"guess": None}
    if not metric.is_flat:

        def length(s):
            x = closed_point(alpha, s[0])
            y = closed_point(beta, s[1])
            rho = geodesic_bvp(metric, x, y, guess=state["guess"], chart=ca, chart_q=cb)
            state["guess"] = rho.meta["initial_velocity"]
            ua = rho.velocities[0] / rho.meta["speed"]
            ub = rho.velocities[-1] / rho.meta["speed"]
            dx = closed_point(alpha, s[0], 1)
            dy = closed_point(beta, s[1], 1)
            g0 = -metric.inner(x, ua, dx, ca)
            g1 = metric.inner(rho.points[-1], ub, dy, int(rho.chart_ids[-1])) if rho.single_chart else \
                metric.inner(y, metric.transition(rho.points[-1], ub, rho.chart_ids[-1], cb)[1], dy, cb)
            return rho.meta["speed"], np.array([g0, g1])

        res = optimize.minimize(length, s_opt, jac=True, method="BFGS", options={"gtol": 1e-11})
        s_opt = res.x
    a = closed_point(alpha, s_opt[0])
    b = closed_point(beta, s_opt[1])
    if metric.is_flat:
        b = a + metric.displacement(a, b)
    rho = geodesic_bvp(metric, a, b, guess=None if metric.is_flat else state["guess"], chart=ca, chart_q=cb)
    r = rho.meta["speed"]
    if r >= metric.injectivity_radius_bound:
        raise OutOfRangeError("curve distance is not below the injectivity radius bound")
    ua = rho.velocities[0] / r
    ub = rho.velocities[-1] / r
    ta = closed_point(alpha, s_opt[0], 1)
    tb = closed_point(beta, s_opt[1], 1)
    ta = ta / metric.norm(a, ta, ca)
    tb_chart = int(rho.chart_ids[-1])
    tb = tb / metric.norm(b, tb, cb)
    if tb_chart != cb:
        _, ub = metric.transition(rho.points[-1], ub, tb_chart, cb)
    res_a = abs(float(metric.inner(a, ua, ta, ca)))
    res_b = abs(float(metric.inner(b, ub, tb, cb)))
    return CurvePair(a, b, float(r), rho, float(s_opt[0]), float(s_opt[1]), res_a, res_b)
