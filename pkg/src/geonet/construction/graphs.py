"""Curves written as normal graphs over a base curve, and Taylor-cutoff connectors."""

from __future__ import annotations

from math import factorial

import numpy as np
from numpy.polynomial import Chebyshev

from ..curves import DiscretizedCurve
from ..errors import ResolutionError, TubeExitError
from ..fermi import _base_point, tube_coordinates_batch, tube_point
from ..norms import Cutoff, central_derivatives


class GraphOffset:
    """Vector offset ``h(s)`` given by one Chebyshev series per normal component."""

    def __init__(self, series, domain):
        self.series = list(series)
        self.domain = tuple(float(x) for x in domain)
        self.residual = None

    def __call__(self, s, order=0):
        s = np.asarray(s, float)
        return np.stack([(c.deriv(order) if order else c)(s) for c in self.series], axis=-1)

    def ck_norm(self, k, n=401):
        s = np.linspace(*self.domain, n)
        return max(float(np.abs(self(s, j)).max()) for j in range(k + 1))


def _unwrap_params(s, guess, period):
    if period is None:
        return s
    return s + np.round((guess - s) / period) * period


def graph_over_curve(metric, gamma, tube, s_range=None, degree=None, tol=1e-8):
    """Offset ``h`` with ``tube_point(s, h(s))`` tracing ``gamma``.

    ``gamma`` is projected sample by sample into the tube's Fermi
    coordinates and each normal component is fitted by a Chebyshev series
    in the base parameter. Leaving the tube raises :class:`TubeExitError`.
    """
    s, h, ok = tube_coordinates_batch(tube, gamma.points)
    if not np.all(ok):
        raise TubeExitError("curve leaves the Fermi tube", stage="graph")
    base = tube.base
    period = base.span[1] - base.span[0] if base.closed else None
    # keep the parameter track continuous across the base's seam
    s = np.asarray(s, float).copy()
    for i in range(1, len(s)):
        s[i] = _unwrap_params(s[i], s[i - 1], period)
    if s_range is not None and period is not None:
        s = s + np.round((s_range[0] - s[0]) / period) * period
    order = np.argsort(s)
    s, h = s[order], h[order]
    if np.any(np.diff(s) <= 0):
        raise TubeExitError("curve is not a graph over the base", stage="graph")
    if s_range is not None and (s[0] > s_range[0] + 1e-9 or s[-1] < s_range[1] - 1e-9):
        raise TubeExitError("curve does not cover the requested parameter range", stage="graph")
    dom = (s[0], s[-1])
    if degree is None:
        degree = min(len(s) - 1, 24)
    series = [Chebyshev.fit(s, h[:, i], degree, domain=dom) for i in range(h.shape[1])]
    # chop the noise tail; it would dominate high derivatives near the domain ends
    scale = max(float(np.abs(c.coef).max()) for c in series)
    series = [c.trim(1e-13 * scale) if scale > 0 else c for c in series]
    off = GraphOffset(series, dom)
    rebuilt = tube_point(tube, s, off(s))
    off.residual = float(np.max(np.linalg.norm(metric.displacement(rebuilt, gamma.points[order]), axis=-1)))
    if off.residual > tol:
        raise ResolutionError(f"graph fit misses the curve by {off.residual:.3e}", stage="graph")
    return off


class TaylorConnector:
    """``u(s) = psi(sigma) * sum_{j<=K} h^(j)(s_m) (s - s_m)^j / j!`` with ``sigma = dir * (s - s_m)``."""

    def __init__(self, coeffs, s_match, direction, psi, span):
        self.coeffs = np.asarray(coeffs, float)  # (K+1, n-1) Taylor coefficients
        self.s_match = float(s_match)
        self.direction = float(direction)
        self.psi = psi
        self.span = tuple(sorted(span))
        self._poly = [np.polynomial.Polynomial(self.coeffs[:, i]) for i in range(self.coeffs.shape[1])]

    @property
    def order(self):
        return len(self.coeffs) - 1

    def taylor(self, s, order=0):
        x = np.asarray(s, float) - self.s_match
        return np.stack([(p.deriv(order) if order else p)(x) for p in self._poly], axis=-1)

    def __call__(self, s, order=0):
        s = np.asarray(s, float)
        sig = self.direction * (s - self.s_match)
        out = 0.0
        for j in range(order + 1):
            c = factorial(order) / (factorial(j) * factorial(order - j))
            dpsi = self.psi(sig, j) * self.direction**j
            out = out + c * dpsi[..., None] * self.taylor(s, order - j)
        return out * np.ones(s.shape + (self.coeffs.shape[1],))

    def ck_norm(self, k, n=801):
        s = np.linspace(*self.span, n)
        return max(float(np.abs(self(s, j)).max()) for j in range(k + 1))


def _derivs_at(h, s0, K, step=None):
    """Derivatives ``0..K`` of an offset at ``s0``: analytic when available, else stencils."""
    if isinstance(h, GraphOffset):
        return np.stack([h(np.array(s0), j) for j in range(K + 1)])
    step = 1e-2 if step is None else step
    d1 = central_derivatives(h, s0, K, step)
    d2 = central_derivatives(h, s0, K, step / 2)
    scale = max(1.0, float(np.abs(d2).max()))
    if np.abs(d1 - d2).max() > 1e-6 * scale:
        raise ResolutionError("unstable derivative estimates at the match point", stage="connector")
    return d2


def taylor_cutoff_connector(h, s_match, span, k, psi=None):
    """Connector offset on ``span`` matching ``h`` at ``s_match`` to order ``k+2``.

    The bump is 1 on the first quarter of the span (measured from the
    match point) and 0 beyond its half. ``psi`` defaults to a smoothstep
    profile of order ``k+3``.
    """
    lo, hi = span
    L = hi - lo
    if abs(s_match - lo) <= abs(s_match - hi):
        direction = 1.0
    else:
        direction = -1.0
    if psi is None:
        psi = Cutoff(L / 4, L / 2, k + 3)
    K = k + 2
    d = _derivs_at(h, s_match, K)
    coeffs = np.array([d[j] / factorial(j) for j in range(K + 1)])
    return TaylorConnector(coeffs, s_match, direction, psi, span)


def matching_defects(h, u, s_match, K, step=None, half_width=None, n_steps=6):
    """Relative centred-difference derivatives of ``h - u`` at ``s_match``, orders ``0..K``.

    With ``step=None`` the stencil is shrunk geometrically from the size of
    the connector plateau, for several stencil widths, and per order the
    estimate from the most stable pair of consecutive steps is kept
    (roundoff grows as the step shrinks, truncation as it grows).
    """
    def rel(st, hw):
        diff = central_derivatives(lambda x: h(x) - u(x), s_match, K, st, hw)
        ref = central_derivatives(h, s_match, K, st, hw)
        scale = max(float(np.abs(ref).max()), 1e-300)
        return np.abs(diff).max(axis=-1) / scale

    widths = [half_width] if half_width is not None else list(range(K // 2 + 1, 9))
    if step is not None:
        return rel(step, widths[-1] if half_width is None else half_width)
    plateau = getattr(getattr(u, "psi", None), "plateau", None)
    reach = 6e-2 if plateau is None else 0.9 * plateau
    best_val = np.full(K + 1, np.inf)
    best_gap = np.full(K + 1, np.inf)
    for hw in widths:
        D = np.array([rel(reach / hw * 2.0**-i, hw) for i in range(n_steps)])
        gap = np.abs(np.diff(D, axis=0))
        i = np.argmin(gap, axis=0)
        g = gap[i, np.arange(K + 1)]
        take = g < best_gap
        best_gap = np.where(take, g, best_gap)
        best_val = np.where(take, D[i + 1, np.arange(K + 1)], best_val)
    return best_val


class PiecewiseOffset:
    """Offset defined piece by piece on abutting parameter intervals (zero elsewhere)."""

    def __init__(self, pieces, dim_normal):
        self.pieces = sorted(pieces, key=lambda p: p[0])  # (lo, hi, fun)
        self.dim_normal = dim_normal

    def __call__(self, s, order=0):
        s = np.atleast_1d(np.asarray(s, float))
        out = np.zeros(s.shape + (self.dim_normal,))
        for lo, hi, fun in self.pieces:
            sel = (s >= lo) & (s <= hi)
            if np.any(sel):
                out[sel] = fun(s[sel], order)
        return out

    def active(self, s):
        s = np.atleast_1d(np.asarray(s, float))
        sel = np.zeros(s.shape, bool)
        for lo, hi, _ in self.pieces:
            sel |= (s >= lo) & (s <= hi)
        return sel


def graph_curve(tube, H, params, closed=False, shift=None, fd_step=None):
    """Sample ``s -> tube_point(s, H(s))`` with jets.

    Flat tubes use the exact graph formula; otherwise jets come from wide
    centred stencils of the composite map where ``H`` is active and from
    the base curve elsewhere.
    """
    params = np.asarray(params, float)
    h0, h1, h2 = H(params, 0), H(params, 1), H(params, 2)
    c0 = _base_point(tube, params, 0)
    c1 = _base_point(tube, params, 1)
    c2 = _base_point(tube, params, 2)
    if tube.metric.is_flat:
        f0 = tube.frame_at(params)
        f1 = tube.frame_at(params, 1)
        f2 = tube.frame_at(params, 2)
        x = c0 + np.einsum("pi,pin->pn", h0, f0)
        v = c1 + np.einsum("pi,pin->pn", h1, f0) + np.einsum("pi,pin->pn", h0, f1)
        a = (
            c2
            + np.einsum("pi,pin->pn", h2, f0)
            + 2 * np.einsum("pi,pin->pn", h1, f1)
            + np.einsum("pi,pin->pn", h0, f2)
        )
    else:
        x, v, a = c0.copy(), c1.copy(), c2.copy()
        act = np.flatnonzero(np.any(h0 != 0, axis=-1) | np.any(h1 != 0, axis=-1))
        step = fd_step or 1e-3 * (params[-1] - params[0])
        for i in act:
            fun = lambda s: tube_point(tube, s, H(s))  # noqa: E731
            d = central_derivatives(fun, params[i], 2, step, 3)
            x[i] = tube_point(tube, params[i], h0[i])
            v[i], a[i] = d[1], d[2]
    chart = np.full(len(params), tube.chart)
    return DiscretizedCurve(params, x, v, a, chart, closed=closed, shift=shift)
