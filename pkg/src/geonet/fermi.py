"""Normal frames along curves, Fermi tube coordinates and geodesic curvature."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.spatial import cKDTree

from .curves import _QUINTIC, DiscretizedCurve
from .errors import AmbiguityError, DomainError, GeometryError, ParametrizationError
from .geodesics import exp_map


def gram_schmidt(metric, x, vectors, against=None, chart=0):
    """Metric-orthonormalise ``vectors[..., m, n]``, first removing ``against[..., n]``."""
    out = []
    t = None
    if against is not None:
        t = against / metric.norm(x, against, chart)[..., None]
    for m in range(vectors.shape[-2]):
        e = vectors[..., m, :].copy()
        if t is not None:
            e = e - metric.inner(x, e, t, chart)[..., None] * t
        for f in out:
            e = e - metric.inner(x, e, f, chart)[..., None] * f
        nrm = metric.norm(x, e, chart)
        if np.any(nrm < 1e-12):
            raise GeometryError("degenerate frame in Gram-Schmidt")
        out.append(e / nrm[..., None])
    return np.stack(out, axis=-2)


def initial_normal_frame(metric, x, tangent, chart=0):
    n = tangent.size
    t = tangent / metric.norm(x, tangent, chart)
    g = metric.eval(x, chart)
    # coordinate axes ordered by how little they align with the tangent
    align = np.abs(g @ t) / np.sqrt(np.diag(g))
    order = np.argsort(align, kind="stable")[: n - 1]
    axes = np.eye(n)[np.sort(order)]
    return gram_schmidt(metric, x, axes, against=tangent, chart=chart)


def _bishop_rhs(metric, x, v, a, frame, chart):
    # D n / ds = -(g(n, Dv) / |v|^2) v : normal connection parallel frame
    dv = a - metric.acceleration(x, v, chart)
    coef = metric.inner(x[None], frame, dv[None], chart) / metric.inner(x, v, v, chart)
    return metric.transport_rhs(x, v, frame, chart) - coef[:, None] * v[None, :]


def _cubic_hermite(params, vals, ders, s, order=0):
    i = np.clip(np.searchsorted(params, s, side="right") - 1, 0, len(params) - 2)
    h = params[i + 1] - params[i]
    t = (s - params[i]) / h
    shape = (-1,) + (1,) * (vals.ndim - 1)
    t = t.reshape(shape)
    hh = h.reshape(shape)
    p0, p1, m0, m1 = vals[i], vals[i + 1], ders[i] * hh, ders[i + 1] * hh
    if order == 0:
        return (
            (2 * t**3 - 3 * t**2 + 1) * p0
            + (t**3 - 2 * t**2 + t) * m0
            + (-2 * t**3 + 3 * t**2) * p1
            + (t**3 - t**2) * m1
        )
    if order == 2:
        return (
            (12 * t - 6) * p0 + (6 * t - 4) * m0 + (6 - 12 * t) * p1 + (6 * t - 2) * m1
        ) / hh**2
    if order != 1:
        raise ValueError("frame derivatives are available up to order 2")
    return (
        (6 * t**2 - 6 * t) * p0
        + (3 * t**2 - 4 * t + 1) * m0
        + (-6 * t**2 + 6 * t) * p1
        + (3 * t**2 - 2 * t) * m1
    ) / hh


@dataclass
class FermiTube:
    """Normal-parallel orthonormal frame and tube radius along a single-chart base."""

    metric: object
    base: DiscretizedCurve
    frame: np.ndarray
    frame_derivs: np.ndarray
    radius: float
    _tree: object = field(default=None, repr=False)
    _tables: object = field(default=None, repr=False)

    @property
    def chart(self):
        return int(self.base.chart_ids[0])

    def frame_at(self, s, order=0):
        s = np.asarray(s, float)
        if self.base.closed:
            a, b = self.base.span
            s = a + np.mod(s - a, b - a)
        return _cubic_hermite(self.base.params, self.frame, self.frame_derivs, np.atleast_1d(s), order).reshape(
            s.shape + self.frame.shape[1:]
        )

    def holonomy(self):
        """Matrix ``Q_ij = <n_i(end), n_j(start)>`` of a closed base."""
        c = self.chart
        x = self.base.points[0]
        return np.einsum(
            "in,nm,jm->ij", self.frame[-1], self.metric.eval(x, c), self.frame[0]
        )

    def orthonormality_defect(self):
        m = self.metric
        x = self.base.points
        c = self.chart
        gram = np.einsum("sin,snm,sjm->sij", self.frame, m.eval(x, c), self.frame)
        eye = np.eye(self.frame.shape[1])
        tang = m.inner(x[:, None], self.frame, self.base.velocities[:, None], c)
        tang = tang / m.norm(x, self.base.velocities, c)[:, None]
        return float(max(np.abs(gram - eye).max(), np.abs(tang).max()))

    def transport_residual(self):
        """Max over steps of ``|n_{k+1} - RK4 step(n_k)| / step``."""
        m, b = self.metric, self.base
        worst = 0.0
        for k in range(b.n_samples - 1):
            nxt = _bishop_step(m, b, k, self.frame[k], self.chart)
            worst = max(worst, np.abs(nxt - self.frame[k + 1]).max() / (b.params[k + 1] - b.params[k]))
        return worst

    def kdtree(self):
        if self._tree is None:
            box = self.metric.embed_boxsize if self.metric.is_flat else None
            pts = self.metric.embed(self.base.points, self.chart) if box else self.base.points
            self._tree = cKDTree(np.mod(pts, box) if box else pts, boxsize=box)
        return self._tree

    def to_dict(self):
        return {
            "base": self.base.to_dict(),
            "frame": self.frame.tolist(),
            "frame_derivs": self.frame_derivs.tolist(),
            "radius": self.radius,
        }

    @classmethod
    def from_dict(cls, metric, d):
        return cls(
            metric,
            DiscretizedCurve.from_dict(d["base"]),
            np.array(d["frame"]),
            np.array(d["frame_derivs"]),
            float(d["radius"]),
        )


def _bishop_step(metric, base, k, n0, chart):
    s = base.params
    h = s[k + 1] - s[k]
    ts = np.array([s[k], s[k] + 0.5 * h, s[k + 1]])
    idx = np.array([k, k, k])
    x, v = base._interval_eval(ts, idx)
    hgt = s[k + 1] - s[k]
    # acceleration at the midpoint from the quintic interpolant
    a = np.stack([base.accelerations[k], base.evaluate(ts[1], 2), base.accelerations[k + 1]])
    del hgt
    f = lambda j, nn: _bishop_rhs(metric, x[j], v[j], a[j], nn, chart)  # noqa: E731
    k1 = f(0, n0)
    k2 = f(1, n0 + 0.5 * h * k1)
    k3 = f(1, n0 + 0.5 * h * k2)
    k4 = f(2, n0 + h * k3)
    return n0 + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def fermi_tube(metric, base, radius, initial_frame=None, check_overlap=True):
    """Build a :class:`FermiTube` along ``base``.

    The frame is carried by the normal connection (parallel along geodesic
    bases) and re-orthonormalised at every sample.
    """
    if not base.single_chart:
        raise DomainError("Fermi tubes need a single-chart base curve")
    if radius <= 0 or radius >= metric.injectivity_radius_bound / 2:
        raise GeometryError(
            f"tube radius {radius:.6g} must be positive and below half the injectivity bound"
        )
    c = int(base.chart_ids[0])
    speeds = base.speeds(metric)
    if np.min(speeds) <= 1e-12:
        raise ParametrizationError("base curve has vanishing speed")
    if initial_frame is None:
        n0 = initial_normal_frame(metric, base.points[0], base.velocities[0], c)
    else:
        n0 = gram_schmidt(metric, base.points[0], np.asarray(initial_frame, float), base.velocities[0], c)
    frames = [n0]
    for k in range(base.n_samples - 1):
        nxt = _bishop_step(metric, base, k, frames[-1], c)
        frames.append(gram_schmidt(metric, base.points[k + 1], nxt, base.velocities[k + 1], c))
    frame = np.array(frames)
    ders = np.array(
        [
            _bishop_rhs(metric, base.points[k], base.velocities[k], base.accelerations[k], frame[k], c)
            for k in range(base.n_samples)
        ]
    )
    tube = FermiTube(metric, base, frame, ders, float(radius))
    if check_overlap:
        _check_overlap(tube)
    return tube


def _check_overlap(tube, n_s=64, n_dir=8):
    metric, base = tube.metric, tube.base
    prof = geodesic_curvature(metric, base, tube)
    kmax = np.abs(prof.magnitude()).max()
    if kmax * tube.radius >= 1.0:
        raise GeometryError("tube radius exceeds the focal radius of the base")
    if not metric.is_flat:
        return
    rho = 0.99 * tube.radius
    idx = np.linspace(0, base.n_samples - 1, n_s).astype(int)
    ang = np.linspace(0, 2 * np.pi, n_dir, endpoint=False)
    nd = tube.frame.shape[1]
    dirs = np.zeros((n_dir, nd))
    dirs[:, 0] = np.cos(ang)
    if nd > 1:
        dirs[:, 1] = np.sin(ang)
    pts = base.points[idx][:, None, :] + rho * np.einsum("dk,skn->sdn", dirs, tube.frame[idx])
    speed = base.speeds(metric)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(base.params))])
    total = arc[-1]
    for a, si in enumerate(idx):
        far = np.abs(arc - arc[si])
        if base.closed:
            far = np.minimum(far, total - far)
        mask = far > 2.5 * tube.radius
        if not np.any(mask):
            continue
        d = metric.displacement(pts[a][:, None, :], base.points[mask][None, :, :])
        if np.min(np.linalg.norm(d, axis=-1)) < rho * (1 - 1e-9):
            raise GeometryError("tube self-overlap detected")


def tube_point(tube, s, h):
    """``exp_{base(s)}(sum_i h_i n_i(s))`` (affine in the flat case)."""
    s = np.asarray(s, float)
    h = np.asarray(h, float)
    x = _base_point(tube, s)
    frame = tube.frame_at(s)
    w = np.einsum("...i,...in->...n", h, frame)
    if tube.metric.is_flat:
        return x + w
    if s.ndim == 0:
        return exp_map(tube.metric, x, w, chart=tube.chart)
    return np.array([exp_map(tube.metric, xi, wi, chart=tube.chart) for xi, wi in zip(x, w)])


def _base_point(tube, s, order=0):
    base = tube.base
    if base.closed:
        from .geodesics import closed_point

        return closed_point(base, s, order)
    return base.evaluate(s, order)


def _wrap_param(tube, s):
    base = tube.base
    a, b = base.span
    if base.closed:
        L = b - a
        k = np.floor((s - a) / L)
        return s - k * L, k
    return s, np.zeros_like(s)


# monomial coefficients of the cubic Hermite basis; rows p0, h*m0, p1, h*m1
_CUBIC = np.array([[1, 0, -3, 2], [0, 1, -2, 1], [0, 0, 3, -2], [0, 0, -1, 1]], dtype=float)


def _jet_tables(tube):
    """Per-interval monomial coefficients of the base (quintic) and frame (cubic) interpolants."""
    if tube._tables is None:
        b = tube.base
        h = np.diff(b.params)
        hh = h[:, None]
        data = np.stack(
            [b.points[:-1], hh * b.velocities[:-1], hh**2 * b.accelerations[:-1],
             hh**2 * b.accelerations[1:], hh * b.velocities[1:], b.points[1:]],
            axis=1,
        )
        C = np.einsum("rk,irn->ikn", _QUINTIC, data)
        h3 = h[:, None, None]
        fdat = np.stack(
            [tube.frame[:-1], h3 * tube.frame_derivs[:-1], tube.frame[1:], h3 * tube.frame_derivs[1:]], axis=1
        )
        F = np.einsum("rk,irmn->ikmn", _CUBIC, fdat)
        tube._tables = (b.params, h, C, F)
    return tube._tables


def _fast_jets(tube, s):
    """Base point, tangent, frame and frame derivative at in-span parameters ``s``."""
    P, h, C, F = _jet_tables(tube)
    i = np.clip(np.searchsorted(P, s, side="right") - 1, 0, len(P) - 2)
    hi = h[i]
    t = (s - P[i]) / hi
    T = t[:, None] ** np.arange(6)
    dT = np.zeros_like(T)
    dT[:, 1:] = T[:, :-1] * np.arange(1, 6)
    dT /= hi[:, None]
    c = np.einsum("pk,pkn->pn", T, C[i])
    dc = np.einsum("pk,pkn->pn", dT, C[i])
    fr = np.einsum("pk,pkmn->pmn", T[:, :4], F[i])
    dfr = np.einsum("pk,pkmn->pmn", dT[:, :4], F[i])
    return c, dc, fr, dfr


def _project_flat(tube, x, iters=8):
    """Newton projection ``c(s) + N(s) h = x``; returns ``(s, h, ok, dc, fr, dfr)``."""
    metric, base = tube.metric, tube.base
    box = metric.embed_boxsize
    q = np.mod(x, box) if box else x
    _, idx = tube.kdtree().query(q)
    ci = base.points[idx]
    xl = ci + metric.displacement(ci, x)
    s = base.params[idx].copy()
    a, b = base.span
    tol = 1e-14 * max(1.0, abs(a), abs(b))

    def wrap(s):
        if base.closed:
            return _wrap_param(tube, s)
        return np.clip(s, a, b), np.zeros_like(s)

    for _ in range(iters):
        sw, k = wrap(s)
        c, dc, fr, dfr = _fast_jets(tube, sw)
        c = c + k[:, None] * base.shift
        h = np.einsum("pn,pin->pi", xl - c, fr)
        js = dc + np.einsum("pi,pin->pn", h, dfr)
        J = np.concatenate([js[:, :, None], np.swapaxes(fr, 1, 2)], axis=2)
        F = c + np.einsum("pi,pin->pn", h, fr) - xl
        ds = np.linalg.solve(J, -F[..., None])[..., 0, 0]
        s = s + ds
        if not base.closed:
            s = np.clip(s, a - 0.5 * (b - a), b + 0.5 * (b - a))
        if np.max(np.abs(ds)) < tol:
            break
    sw, k = wrap(s)
    c, dc, fr, dfr = _fast_jets(tube, sw)
    c = c + k[:, None] * base.shift
    h = np.einsum("pn,pin->pi", xl - c, fr)
    inside = base.closed | ((s >= a) & (s <= b))
    ok = inside & (np.linalg.norm(h, axis=-1) < tube.radius)
    return sw, h, ok, dc, fr, dfr


def tube_coordinates_batch(tube, x, iters=8):
    """Vectorised flat-chart nearest-point projection.

    Returns ``(s, h, ok)`` where ``ok`` flags points whose projection is
    inside the parameter span and whose offset is below the tube radius.
    """
    metric, base = tube.metric, tube.base
    x = np.atleast_2d(np.asarray(x, float))
    if not metric.is_flat:
        out = [_tube_coordinates_general(tube, xi) for xi in x]
        s = np.array([o[0] for o in out])
        h = np.array([o[1] for o in out])
        ok = np.array([o[2] for o in out])
        return s, h, ok
    sw, h, ok = _project_flat(tube, x, iters)[:3]
    return sw, h, ok


def _tube_coordinates_general(tube, x, iters=12):
    metric, base = tube.metric, tube.base
    c = tube.chart
    d = np.linalg.norm(base.points - x, axis=-1)
    i = int(np.argmin(d))
    s = base.params[i]
    fr = tube.frame[i]
    g = metric.eval(base.points[i], c)
    h = fr @ g @ (x - base.points[i])
    z = np.concatenate([[s], h])
    a, b = base.span
    for _ in range(iters):
        sw = float(_wrap_param(tube, np.array(z[0]))[0]) if base.closed else float(np.clip(z[0], a, b))
        F = tube_point(tube, sw, z[1:]) - x
        if np.linalg.norm(F) < 1e-13:
            break
        eps = 1e-6
        J = np.empty((x.size, x.size))
        for j in range(x.size):
            dz = np.zeros(x.size)
            dz[j] = eps
            zz = z + dz
            sj = float(_wrap_param(tube, np.array(zz[0]))[0]) if base.closed else float(zz[0])
            zm = z - dz
            sm = float(_wrap_param(tube, np.array(zm[0]))[0]) if base.closed else float(zm[0])
            J[:, j] = (tube_point(tube, sj, zz[1:]) - tube_point(tube, sm, zm[1:])) / (2 * eps)
        z = z + np.linalg.solve(J, -F)
    s = z[0]
    inside = base.closed or (a <= s <= b)
    if base.closed:
        s = float(_wrap_param(tube, np.array(s))[0])
    return s, z[1:], bool(inside and np.linalg.norm(z[1:]) < tube.radius)


def tube_coordinates(tube, x):
    """Fermi coordinates ``(s, h)`` of a single point inside the tube."""
    x = np.asarray(x, float)
    s, h, ok = tube_coordinates_batch(tube, x[None])
    s, h, ok = float(s[0]), h[0], bool(ok[0])
    if not ok:
        raise DomainError("point is outside the tube")
    if tube.metric.is_flat:
        # a second well-separated candidate inside the radius means the cut radius was reached
        base = tube.base
        box = tube.metric.embed_boxsize
        q = np.mod(x, box) if box else x
        near = tube.kdtree().query_ball_point(q, tube.radius)
        if near:
            far = [j for j in near if _param_gap(base, base.params[j], s) > 3 * tube.radius]
            for j in far:
                cj = base.points[j]
                dj = np.linalg.norm(tube.metric.displacement(cj, x))
                if abs(dj - np.linalg.norm(h)) < 1e-6 * tube.radius:
                    raise AmbiguityError("nearest-point projection is not unique")
    return s, h


def _param_gap(base, s1, s2):
    d = abs(s1 - s2)
    if base.closed:
        L = base.span[1] - base.span[0]
        d = min(d, L - d)
    return d


@dataclass
class CurvatureProfile:
    """Normal components ``k^i(s)`` of the curvature vector in a tube frame."""

    params: np.ndarray
    components: np.ndarray
    _spline: object = field(default=None, repr=False)

    def magnitude(self):
        return np.linalg.norm(self.components, axis=-1)

    def sup(self):
        return float(self.magnitude().max()) if len(self.params) else 0.0

    def spline(self):
        if self._spline is None:
            deg = min(5, len(self.params) - 1)
            self._spline = make_interp_spline(self.params, self.components, k=deg)
        return self._spline

    def __call__(self, s, order=0):
        sp = self.spline()
        return sp(s, nu=order) if order else sp(s)

    def to_dict(self):
        return {"params": self.params.tolist(), "components": self.components.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["params"]), np.array(d["components"]))


def geodesic_curvature(metric, curve, tube):
    """Curvature profile of ``curve`` under ``metric`` in the tube's normal directions.

    When ``metric`` differs from the tube's metric the tube frame is
    re-orthonormalised in ``metric`` before taking components.
    """
    if curve.n_samples != tube.base.n_samples or not np.allclose(curve.params, tube.base.params):
        raise ParametrizationError("curve and tube must share the parameter grid")
    c = int(curve.chart_ids[0])
    x, v, a = curve.points, curve.velocities, curve.accelerations
    v2 = metric.inner(x, v, v, c)
    if np.min(v2) <= 1e-24:
        raise ParametrizationError("curve has zero-speed samples")
    dv = a - metric.acceleration(x, v, c)
    frame = tube.frame
    if metric is not tube.metric:
        frame = gram_schmidt(metric, x, frame, against=v, chart=c)
    comps = metric.inner(x[:, None, :], frame, dv[:, None, :], c) / v2[:, None]
    return CurvatureProfile(curve.params.copy(), comps)


def geodesic_residual(metric, curve):
    """Sup norm of the normal acceleration ``|(D v)^perp| / |v|^2`` without a frame."""
    c = curve.chart_ids
    x, v, a = curve.points, curve.velocities, curve.accelerations
    out = np.empty(len(x))
    for cid in np.unique(c):
        sel = c == cid
        xs, vs = x[sel], v[sel]
        dv = a[sel] - metric.acceleration(xs, vs, int(cid))
        v2 = metric.inner(xs, vs, vs, int(cid))
        if np.min(v2) <= 1e-24:
            raise ParametrizationError("curve has zero-speed samples")
        perp = dv - (metric.inner(xs, dv, vs, int(cid)) / v2)[:, None] * vs
        out[sel] = metric.norm(xs, perp, int(cid)) / v2
    return out
