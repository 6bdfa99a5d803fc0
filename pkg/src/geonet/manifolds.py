"""Chart-defined Riemannian backends.

Every metric is vectorised over leading axes: ``x`` has shape ``(..., n)`` and
``chart`` is an int or an int array broadcastable to ``x.shape[:-1]``.
Derivative arrays use the convention ``dg[..., l, i, j] = d_l g_ij``.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * np.pi


def christoffel_from(g, dg):
    """Levi-Civita symbols ``G[..., k, i, j]`` from a metric and its first derivatives."""
    gi = np.linalg.inv(g)
    t = np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
    return 0.5 * np.einsum("...kl,...lij->...kij", gi, t)


def christoffel(metric, x, chart=0):
    x = np.asarray(x, dtype=float)
    metric.check_domain(x, chart)
    return christoffel_from(metric.eval(x, chart), metric.eval_derivs(x, 1, chart))


class MetricField:
    """Abstract metric on a (possibly multi-chart) manifold."""

    dim: int
    injectivity_radius_bound: float
    is_flat = False
    n_charts = 1
    # per-coordinate period for wrapped charts, ``None`` if not periodic
    periods = None

    def eval(self, x, chart=0):
        raise NotImplementedError

    def eval_derivs(self, x, order=1, chart=0):
        if order == 1:
            return self._first_derivs(x, chart)
        if order == 2:
            return self._fd_derivs(lambda y: self._first_derivs(y, chart), x)
        raise ValueError("only derivative orders 1 and 2 are supported")

    def _first_derivs(self, x, chart):
        return self._fd_derivs(lambda y: self.eval(y, chart), x)

    @staticmethod
    def _fd_derivs(fun, x, h=1e-3):
        # centred differences with one Richardson extrapolation step
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        out = []
        for l in range(n):
            e = np.zeros(n)
            e[l] = 1.0
            d1 = (fun(x + h * e) - fun(x - h * e)) / (2 * h)
            d2 = (fun(x + 0.5 * h * e) - fun(x - 0.5 * h * e)) / h
            out.append((4 * d2 - d1) / 3)
        return np.stack(out, axis=x.ndim - 1)

    def christoffel(self, x, chart=0):
        return christoffel(self, x, chart)

    def acceleration(self, x, v, chart=0):
        gam = self.christoffel(x, chart)
        return -np.einsum("...kij,...i,...j->...k", gam, v, v)

    def transport_rhs(self, x, v, w, chart=0):
        """``dw/dt = -Gamma(v, w)`` for vectors ``w[..., m, n]`` carried along velocity ``v``."""
        gam = self.christoffel(x, chart)
        return -np.einsum("...kij,...i,...mj->...mk", gam, v, w)

    def inner(self, x, u, w, chart=0):
        g = self.eval(x, chart)
        return np.einsum("...i,...ij,...j->...", u, g, w)

    def norm(self, x, u, chart=0):
        return np.sqrt(self.inner(x, u, u, chart))

    def check_domain(self, x, chart=0):
        if not np.all(np.isfinite(x)):
            raise DomainError("non-finite chart point")

    def switch_chart(self, x, v, chart):
        """Move ``(x, v)`` to a better-conditioned chart when needed."""
        return x, v, chart

    def transition(self, x, v, src, dst):
        if np.any(np.asarray(src) != np.asarray(dst)):
            raise DomainError("single-chart manifold has no transitions")
        return x, v

    def to_chart(self, x, chart, dst):
        if np.any(np.asarray(chart) != np.asarray(dst)):
            raise DomainError("single-chart manifold has no transitions")
        return np.asarray(x, float)

    def displacement(self, p, q, chart=0):
        """Chart-level vector from ``p`` to the nearest lift of ``q``."""
        d = np.asarray(q, float) - np.asarray(p, float)
        if self.periods is not None:
            per = np.asarray(self.periods, float)
            mask = np.isfinite(per)
            d = np.where(mask, d - np.round(d / np.where(mask, per, 1.0)) * np.where(mask, per, 0.0), d)
        return d

    def lattice_shift(self, p, q):
        """Period vector ``L`` with ``q`` closest to ``p + L``."""
        d = np.asarray(q, float) - np.asarray(p, float)
        return d - self.displacement(p, q)

    def embed(self, x, chart=0):
        """Injective ambient representation used for proximity sweeps."""
        return np.asarray(x, float)

    @property
    def embed_boxsize(self):
        return None

    def same_point(self, p, q, chart_p=0, chart_q=0, tol=1e-9):
        a = self.embed(p, chart_p)
        b = self.embed(q, chart_q)
        d = b - a
        box = self.embed_boxsize
        if box is not None:
            d = d - np.round(d / box) * box
        return bool(np.linalg.norm(d) < tol)

    def to_spec(self):
        raise NotImplementedError


class FlatTorus(MetricField):
    """Flat n-torus ``R^n / (period Z)^n`` with an optional periodic conformal bump.

    ``bumps`` is a list of ``(amplitude, wavevector, phase)`` realising
    ``g = exp(2 phi) delta`` with ``phi = sum a sin(2 pi k.x / period + c)``.
    """

    def __init__(self, dim=3, period=1.0, injectivity_radius=None, bumps=()):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = int(dim)
        self.period = float(period)
        self.periods = (self.period,) * self.dim
        self.injectivity_radius_bound = float(
            injectivity_radius if injectivity_radius is not None else self.period / 2
        )
        if self.injectivity_radius_bound <= 0:
            raise ValueError("injectivity radius bound must be positive")
        self.bumps = [
            (float(a), np.asarray(k, dtype=float), float(c)) for a, k, c in bumps
        ]
        for _, k, _ in self.bumps:
            if k.shape != (self.dim,):
                raise ValueError("bump wavevector has wrong dimension")
        self.is_flat = not self.bumps

    def _phi(self, x):
        phi = np.zeros(x.shape[:-1])
        dphi = np.zeros(x.shape)
        w = TWO_PI / self.period
        for a, k, c in self.bumps:
            arg = w * (x @ k) + c
            phi = phi + a * np.sin(arg)
            dphi = dphi + (a * w * np.cos(arg))[..., None] * k
        return phi, dphi

    def eval(self, x, chart=0):
        x = np.asarray(x, dtype=float)
        eye = np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim))
        if self.is_flat:
            return eye.copy()
        phi, _ = self._phi(x)
        return np.exp(2 * phi)[..., None, None] * eye

    def _first_derivs(self, x, chart):
        x = np.asarray(x, dtype=float)
        n = self.dim
        if self.is_flat:
            return np.zeros(x.shape[:-1] + (n, n, n))
        phi, dphi = self._phi(x)
        e = np.exp(2 * phi)
        return 2 * (e[..., None] * dphi)[..., :, None, None] * np.eye(n)

    def christoffel(self, x, chart=0):
        x = np.asarray(x, dtype=float)
        if self.is_flat:
            self.check_domain(x, chart)
            return np.zeros(x.shape[:-1] + (self.dim,) * 3)
        return christoffel(self, x, chart)

    def acceleration(self, x, v, chart=0):
        x = np.asarray(x, float)
        if self.is_flat:
            return np.zeros(np.broadcast_shapes(x.shape, np.shape(v)))
        _, dphi = self._phi(x)
        return -2 * np.sum(dphi * v, -1, keepdims=True) * v + np.sum(v * v, -1, keepdims=True) * dphi

    def transport_rhs(self, x, v, w, chart=0):
        x = np.asarray(x, float)
        if self.is_flat:
            return np.zeros(np.shape(w))
        _, dphi = self._phi(x)
        dv = np.sum(dphi * v, -1)[..., None, None]
        dw = np.sum(dphi[..., None, :] * w, -1)[..., None]
        vw = np.sum(v[..., None, :] * w, -1)[..., None]
        return -(dv * w + dw * v[..., None, :] - vw * dphi[..., None, :])

    def embed(self, x, chart=0):
        return np.mod(np.asarray(x, float), self.period)

    @property
    def embed_boxsize(self):
        return self.period

    def to_spec(self):
        spec = {
            "type": "flat_torus",
            "dim": self.dim,
            "period": self.period,
            "injectivity_radius": self.injectivity_radius_bound,
        }
        if self.bumps:
            spec["bumps"] = [
                {"amplitude": a, "wavevector": k.tolist(), "phase": c}
                for a, k, c in self.bumps
            ]
        return spec


def _stereo(u, sign):
    """Inverse stereographic map into S^n with first and second derivatives.

    Chart ``sign=+1`` sends ``u=0`` to the pole with last coordinate -1.
    Returns ``s[..., a]``, ``ds[..., a, i]`` and ``dds[..., a, i, j]``.
    """
    n = u.shape[-1]
    sign = np.broadcast_to(np.asarray(sign, float), u.shape[:-1])
    r2 = np.sum(u * u, axis=-1)
    q = 1.0 + r2
    eye = np.eye(n)
    qe = q[..., None]
    s = np.concatenate([2 * u / qe, (sign * (r2 - 1) / q)[..., None]], axis=-1)
    ds_top = 2 * eye / qe[..., None] - 4 * u[..., :, None] * u[..., None, :] / (qe**2)[..., None]
    ds_last = (sign[..., None] * 4 * u / qe**2)[..., None, :]
    ds = np.concatenate([ds_top, ds_last], axis=-2)
    q2 = (q**2)[..., None, None, None]
    q3 = (q**3)[..., None, None, None]
    uuu = u[..., :, None, None] * u[..., None, :, None] * u[..., None, None, :]
    term = (
        eye[:, :, None] * u[..., None, None, :]
        + eye[:, None, :] * u[..., None, :, None]
        + eye[None, :, :] * u[..., :, None, None]
    )
    dds_top = -4 * term / q2 + 16 * uuu / q3
    uu = u[..., :, None] * u[..., None, :]
    dds_last = (sign[..., None, None] * (4 * eye / (q**2)[..., None, None] - 16 * uu / (q**3)[..., None, None]))[..., None, :, :]
    dds = np.concatenate([dds_top, dds_last], axis=-3)
    return s, ds, dds


def _chart_sign(chart, shape):
    c = np.broadcast_to(np.asarray(chart), shape)
    return np.where(c == 0, 1.0, -1.0)


class EmbeddedHypersurface(MetricField):
    """Ellipsoid ``sum (X_a / axes_a)^2 = 1`` in R^(n+1) with the induced metric.

    Two stereographic charts; chart 0 is centred on the pole ``X_last < 0``
    and chart 1 on the opposite pole. Transition ``u -> u / |u|^2``.
    """

    n_charts = 2
    switch_radius = 1.3
    domain_radius = 1e3

    def __init__(self, axes, injectivity_radius):
        self.axes = np.asarray(axes, dtype=float)
        if self.axes.ndim != 1 or self.axes.size < 3 or np.any(self.axes <= 0):
            raise ValueError("axes must be >= 3 positive semi-axes")
        self.dim = self.axes.size - 1
        self.injectivity_radius_bound = float(injectivity_radius)
        if self.injectivity_radius_bound <= 0:
            raise ValueError("injectivity radius bound must be positive")

    def _jets(self, x, chart):
        x = np.asarray(x, dtype=float)
        sign = _chart_sign(chart, x.shape[:-1])
        s, ds, dds = _stereo(x, sign)
        a = self.axes
        return a * s, a[:, None] * ds, a[:, None, None] * dds

    def eval(self, x, chart=0):
        _, j, _ = self._jets(x, chart)
        return np.einsum("...ai,...aj->...ij", j, j)

    def _first_derivs(self, x, chart):
        _, j, h = self._jets(x, chart)
        t = np.einsum("...ali,...aj->...lij", h, j)
        return t + np.swapaxes(t, -1, -2)

    def christoffel(self, x, chart=0):
        self.check_domain(x, chart)
        _, j, h = self._jets(x, chart)
        g = np.einsum("...ai,...aj->...ij", j, j)
        jh = np.einsum("...al,...aij->...lij", j, h)
        return np.einsum("...kl,...lij->...kij", np.linalg.inv(g), jh)

    def acceleration(self, x, v, chart=0):
        # second directional derivative of the stereographic map, no full Hessian
        x = np.asarray(x, float)
        r2 = np.einsum("...i,...i->...", x, x)
        if not np.all(r2 < self.domain_radius**2):
            raise DomainError("point outside stereographic chart domain")
        sign = _chart_sign(chart, x.shape[:-1])
        q = 1.0 + r2
        uv = np.einsum("...i,...i->...", x, v)
        vv = np.einsum("...i,...i->...", v, v)
        top = (-(8 * uv / q**2)[..., None] * v - (4 * vv / q**2)[..., None] * x
               + (16 * uv**2 / q**3)[..., None] * x)
        last = sign * (4 * vv / q**2 - 16 * uv**2 / q**3)
        a2 = self.axes**2
        n = self.dim
        J_top = 2 * np.eye(n) / q[..., None, None] - 4 * x[..., :, None] * x[..., None, :] / (q**2)[..., None, None]
        J_last = (sign * 4 / q**2)[..., None] * x
        g = np.einsum("...ai,a,...aj->...ij", J_top, a2[:n], J_top) + a2[n] * J_last[..., :, None] * J_last[..., None, :]
        rhs = np.einsum("...ai,a,...a->...i", J_top, a2[:n], top) + a2[n] * J_last * last[..., None]
        return -np.linalg.solve(g, rhs[..., None])[..., 0]

    def check_domain(self, x, chart=0):
        x = np.asarray(x, float)
        if not np.all(np.isfinite(x)) or np.any(np.linalg.norm(x, axis=-1) > self.domain_radius):
            raise DomainError("point outside stereographic chart domain")

    def transition(self, x, v, src, dst):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        flip = np.asarray(np.asarray(src) != np.asarray(dst))
        if not np.any(flip):
            return x, v
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        if np.any(np.where(flip[..., None] if flip.ndim else flip, r2 == 0, False)):
            raise DomainError("chart pole has no image in the other chart")
        r2s = np.where(r2 == 0, 1.0, r2)
        xn = x / r2s
        vn = v / r2s - 2 * x * np.sum(x * v, axis=-1, keepdims=True) / r2s**2
        f = flip[..., None] if np.ndim(flip) else flip
        return np.where(f, xn, x), np.where(f, vn, v)

    def switch_chart(self, x, v, chart):
        r = np.linalg.norm(x, axis=-1)
        chart = np.asarray(chart)
        flip = r > self.switch_radius
        if not np.any(flip):
            return x, v, chart
        new = np.where(flip, 1 - chart, chart)
        xn, vn = self.transition(x, v, chart, new)
        return xn, vn, new

    def to_chart(self, x, chart, dst):
        xn, _ = self.transition(x, np.zeros_like(np.asarray(x, float)), chart, dst)
        return xn

    def embed(self, x, chart=0):
        e, _, _ = self._jets(x, chart)
        return e

    def from_embedding(self, X, chart=0):
        y = np.asarray(X, float) / self.axes
        y = y / np.linalg.norm(y, axis=-1, keepdims=True)
        sign = 1.0 if chart == 0 else -1.0
        return y[..., :-1] / (1.0 - sign * y[..., -1:])

    def displacement(self, p, q, chart=0):
        return np.asarray(q, float) - np.asarray(p, float)

    def to_spec(self):
        return {
            "type": "hypersurface",
            "axes": self.axes.tolist(),
            "injectivity_radius": self.injectivity_radius_bound,
        }


def round_sphere(n=3, radius=1.0):
    """Round S^n; its injectivity radius is pi * radius."""
    return EmbeddedHypersurface([radius] * (n + 1), injectivity_radius=np.pi * radius)


def ellipsoid(axes, injectivity_radius=None):
    # min-axis * pi is only a heuristic; callers with rigorous bounds pass one
    axes = np.asarray(axes, float)
    if injectivity_radius is None:
        injectivity_radius = np.pi * axes.min() ** 2 / axes.max()
    return EmbeddedHypersurface(axes, injectivity_radius)


class CircleTimesSphere(MetricField):
    """Product ``S^1(R1) x S^2(R2)``; coordinates ``(phi, u1, u2)``.

    ``phi`` is periodic with period 2 pi; ``u`` is stereographic with the
    same two-chart convention as :class:`EmbeddedHypersurface`.
    """

    n_charts = 2
    switch_radius = 1.3

    def __init__(self, circle_radius=1.0, sphere_radius=1.0, injectivity_radius=None):
        self.r1 = float(circle_radius)
        self.r2 = float(sphere_radius)
        self.dim = 3
        self.periods = (TWO_PI, np.inf, np.inf)
        self.injectivity_radius_bound = float(
            injectivity_radius
            if injectivity_radius is not None
            else np.pi * min(self.r1, self.r2)
        )

    def eval(self, x, chart=0):
        x = np.asarray(x, dtype=float)
        u = x[..., 1:]
        q = 1.0 + np.sum(u * u, axis=-1)
        g = np.zeros(x.shape[:-1] + (3, 3))
        g[..., 0, 0] = self.r1**2
        c = 4 * self.r2**2 / q**2
        g[..., 1, 1] = c
        g[..., 2, 2] = c
        return g

    def _first_derivs(self, x, chart):
        x = np.asarray(x, dtype=float)
        u = x[..., 1:]
        q = 1.0 + np.sum(u * u, axis=-1)
        dg = np.zeros(x.shape[:-1] + (3, 3, 3))
        dc = -16 * self.r2**2 * u / (q**3)[..., None]
        for l in (1, 2):
            dg[..., l, 1, 1] = dc[..., l - 1]
            dg[..., l, 2, 2] = dc[..., l - 1]
        return dg

    def transition(self, x, v, src, dst):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        flip = np.asarray(np.asarray(src) != np.asarray(dst))
        if not np.any(flip):
            return x, v
        u = x[..., 1:]
        w = v[..., 1:]
        r2 = np.sum(u * u, axis=-1, keepdims=True)
        r2s = np.where(r2 == 0, 1.0, r2)
        un = u / r2s
        wn = w / r2s - 2 * u * np.sum(u * w, axis=-1, keepdims=True) / r2s**2
        xn = np.concatenate([x[..., :1], un], axis=-1)
        vn = np.concatenate([v[..., :1], wn], axis=-1)
        f = flip[..., None] if np.ndim(flip) else flip
        return np.where(f, xn, x), np.where(f, vn, v)

    def switch_chart(self, x, v, chart):
        r = np.linalg.norm(x[..., 1:], axis=-1)
        chart = np.asarray(chart)
        flip = r > self.switch_radius
        if not np.any(flip):
            return x, v, chart
        new = np.where(flip, 1 - chart, chart)
        xn, vn = self.transition(x, v, chart, new)
        return xn, vn, new

    def to_chart(self, x, chart, dst):
        xn, _ = self.transition(x, np.zeros_like(np.asarray(x, float)), chart, dst)
        return xn

    def embed(self, x, chart=0):
        x = np.asarray(x, float)
        sign = _chart_sign(chart, x.shape[:-1])
        s, _, _ = _stereo(x[..., 1:], sign)
        phi = x[..., 0]
        return np.concatenate(
            [self.r1 * np.stack([np.cos(phi), np.sin(phi)], axis=-1), self.r2 * s], axis=-1
        )

    def to_spec(self):
        return {
            "type": "circle_times_sphere",
            "circle_radius": self.r1,
            "sphere_radius": self.r2,
            "injectivity_radius": self.injectivity_radius_bound,
        }


def metric_from_spec(spec):
    """Build a backend from its JSON description (see ``to_spec``)."""
    kind = spec.get("type")
    if kind == "flat_torus":
        bumps = [
            (b["amplitude"], b["wavevector"], b.get("phase", 0.0))
            for b in spec.get("bumps", [])
        ]
        return FlatTorus(
            dim=spec.get("dim", 3),
            period=spec.get("period", 1.0),
            injectivity_radius=spec.get("injectivity_radius"),
            bumps=bumps,
        )
    if kind == "hypersurface":
        if "axes" in spec:
            return ellipsoid(spec["axes"], spec.get("injectivity_radius"))
        n = spec.get("dim", 3)
        return round_sphere(n, spec.get("radius", 1.0))
    if kind == "circle_times_sphere":
        return CircleTimesSphere(
            spec.get("circle_radius", 1.0),
            spec.get("sphere_radius", 1.0),
            spec.get("injectivity_radius"),
        )
    if kind == "conformal_stack":
        from .conformal import ConformalStack

        return ConformalStack.from_spec(spec)
    raise ValueError(f"unknown manifold type {kind!r}")


class ChartMetric(MetricField):
    """Single-chart metric from a callable ``g(x) -> (..., n, n)``.

    Derivatives come from nested centred differences with Richardson
    extrapolation unless ``dg`` is supplied.
    """

    def __init__(self, g, dim, injectivity_radius, dg=None, box=None):
        self._g = g
        self._dg = dg
        self.dim = int(dim)
        self.injectivity_radius_bound = float(injectivity_radius)
        self.box = None if box is None else np.asarray(box, float)

    def eval(self, x, chart=0):
        return np.asarray(self._g(np.asarray(x, float)), float)

    def _first_derivs(self, x, chart):
        if self._dg is not None:
            return np.asarray(self._dg(np.asarray(x, float)), float)
        return super()._first_derivs(x, chart)

    def check_domain(self, x, chart=0):
        x = np.asarray(x, float)
        super().check_domain(x, chart)
        if self.box is not None:
            lo, hi = self.box[:, 0], self.box[:, 1]
            if np.any((x < lo) | (x > hi)):
                raise DomainError("point outside chart box")
