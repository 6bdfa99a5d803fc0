"""Sampled curves with second-order jets and quintic Hermite interpolation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParametrizationError

# rows: p0, h*m0, h^2*a0, h^2*a1, h*m1, p1 ; columns: monomial coefficients t^0..t^5
_QUINTIC = np.array(
    [
        [1, 0, 0, -10, 15, -6],
        [0, 1, 0, -6, 8, -3],
        [0, 0, 0.5, -1.5, 1.5, -0.5],
        [0, 0, 0, 0.5, -1.0, 0.5],
        [0, 0, 0, -4, 7, -3],
        [0, 0, 0, 10, -15, 6],
    ],
    dtype=float,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _monomials(t, order):
    """Rows of d^order/dt^order [1, t, ..., t^5]."""
    t = np.asarray(t, float)[..., None]
    k = np.arange(6)
    coef = np.ones(6)
    for j in range(order):
        coef = coef * np.maximum(k - j, 0)
    pw = np.maximum(k - order, 0)
    return coef * t**pw


@dataclass(frozen=True)
class DiscretizedCurve:
    """A curve sampled on a strictly increasing parameter grid.

    ``velocities`` and ``accelerations`` are derivatives with respect to the
    parameter. For closed curves ``shift`` is the lattice vector with
    ``points[-1] == points[0] + shift`` (zero off the torus).
    """

    params: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    chart_ids: np.ndarray = None
    closed: bool = False
    shift: np.ndarray = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        params = np.asarray(self.params, float)
        pts = np.atleast_2d(np.asarray(self.points, float))
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "velocities", np.asarray(self.velocities, float))
        object.__setattr__(self, "accelerations", np.asarray(self.accelerations, float))
        charts = (
            np.zeros(len(params), dtype=int)
            if self.chart_ids is None
            else np.asarray(self.chart_ids, dtype=int)
        )
        object.__setattr__(self, "chart_ids", charts)
        shift = np.zeros(pts.shape[1]) if self.shift is None else np.asarray(self.shift, float)
        object.__setattr__(self, "shift", shift)
        if params.ndim != 1 or len(params) < 2:
            raise ParametrizationError("a curve needs at least two samples")
        if np.any(np.diff(params) <= 0):
            raise ParametrizationError("curve parameters must be strictly increasing")
        for name in ("points", "velocities", "accelerations"):
            if getattr(self, name).shape != (len(params), pts.shape[1]):
                raise ParametrizationError(f"{name} has shape inconsistent with params")

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def n_samples(self):
        return len(self.params)

    @property
    def span(self):
        return self.params[0], self.params[-1]

    @property
    def single_chart(self):
        return bool(np.all(self.chart_ids == self.chart_ids[0]))

    def _locate(self, s):
        s = np.asarray(s, float)
        lo, hi = self.span
        if np.any(s < lo - 1e-12 * max(1.0, abs(lo))) or np.any(s > hi + 1e-12 * max(1.0, abs(hi))):
            raise DomainError("parameter outside curve span")
        i = np.clip(np.searchsorted(self.params, s, side="right") - 1, 0, self.n_samples - 2)
        return s, i

    def evaluate(self, s, order=0):
        """Interpolated derivative of order 0, 1 or 2 at parameters ``s``.

        Intervals whose end samples sit in different charts are rejected.
        """
        s, i = self._locate(s)
        if np.any(self.chart_ids[i] != self.chart_ids[i + 1]):
            raise DomainError("interpolation across a chart transition")
        h = self.params[i + 1] - self.params[i]
        t = (s - self.params[i]) / h
        hh = h[..., None]
        data = np.stack(
            [
                self.points[i],
                hh * self.velocities[i],
                hh**2 * self.accelerations[i],
                hh**2 * self.accelerations[i + 1],
                hh * self.velocities[i + 1],
                self.points[i + 1],
            ],
            axis=-2,
        )
        basis = _monomials(t, order) @ _QUINTIC.T
        return np.einsum("...k,...kn->...n", basis, data) / hh**order

    def jets(self, s):
        return self.evaluate(s, 0), self.evaluate(s, 1), self.evaluate(s, 2)

    def speeds(self, metric):
        return metric.norm(self.points, self.velocities, self.chart_ids)

    def min_speed(self, metric):
        return float(np.min(self.speeds(metric)))

    def length(self, metric):
        """Metric length by 5-point Gauss-Legendre quadrature per interval."""
        total = 0.0
        a, b = self.params[:-1], self.params[1:]
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        same = self.chart_ids[:-1] == self.chart_ids[1:]
        curve = self if np.all(same) else self._chart_consistent(metric)
        for node, w in zip(_GL_NODES, _GL_WEIGHTS):
            s = mid + half * node
            i = np.arange(len(a))
            x, v = curve._interval_eval(s, i)
            total += np.sum(w * half * metric.norm(x, v, curve.chart_ids[:-1]))
        return float(total)

    def _interval_eval(self, s, i, with_point=True):
        h = self.params[i + 1] - self.params[i]
        t = (s - self.params[i]) / h
        hh = h[..., None]
        right_p = self._right_points if hasattr(self, "_right_points") else self.points[1:]
        right_v = self._right_vel if hasattr(self, "_right_vel") else self.velocities[1:]
        right_a = self._right_acc if hasattr(self, "_right_acc") else self.accelerations[1:]
        data = np.stack(
            [
                self.points[i],
                hh * self.velocities[i],
                hh**2 * self.accelerations[i],
                hh**2 * right_a[i],
                hh * right_v[i],
                right_p[i],
            ],
            axis=-2,
        )
        x = np.einsum("...k,...kn->...n", _monomials(t, 0) @ _QUINTIC.T, data)
        v = np.einsum("...k,...kn->...n", _monomials(t, 1) @ _QUINTIC.T, data) / hh
        return x, v

    def _chart_consistent(self, metric):
        """Copy whose right interval ends are expressed in the left sample's chart."""
        rp, rv = metric.transition(
            self.points[1:], self.velocities[1:], self.chart_ids[1:], self.chart_ids[:-1]
        )
        # accelerations across a transition are only used for interpolation shape;
        # transform them by finite differences of the transition map
        eps = 1e-6
        rp2, rv2 = metric.transition(
            self.points[1:] + eps * self.velocities[1:],
            self.velocities[1:] + eps * self.accelerations[1:],
            self.chart_ids[1:],
            self.chart_ids[:-1],
        )
        ra = (rv2 - rv) / eps
        c = DiscretizedCurve(
            self.params, self.points, self.velocities, self.accelerations,
            self.chart_ids, self.closed, self.shift,
        )
        object.__setattr__(c, "_right_points", rp)
        object.__setattr__(c, "_right_vel", rv)
        object.__setattr__(c, "_right_acc", ra)
        return c

    def start_tangent(self):
        return self.velocities[0]

    def end_tangent(self):
        return self.velocities[-1]

    def reversed(self):
        p = -self.params[::-1]
        return DiscretizedCurve(
            p,
            self.points[::-1],
            -self.velocities[::-1],
            self.accelerations[::-1],
            self.chart_ids[::-1],
            self.closed,
            -self.shift,
        )

    def shifted(self, offset):
        """Same curve translated by a chart vector (lattice moves on the torus)."""
        return DiscretizedCurve(
            self.params, self.points + offset, self.velocities, self.accelerations,
            self.chart_ids, self.closed, self.shift,
        )

    def reparametrized(self, lo, hi):
        """Affine reparametrisation onto ``[lo, hi]``."""
        a, b = self.span
        c = (hi - lo) / (b - a)
        return DiscretizedCurve(
            lo + (self.params - a) * c,
            self.points,
            self.velocities / c,
            self.accelerations / c**2,
            self.chart_ids,
            self.closed,
            self.shift,
        )

    def resample(self, params):
        params = np.asarray(params, float)
        x, v, a = self.jets(params)
        charts = self.chart_ids[self._locate(params)[1]]
        return DiscretizedCurve(params, x, v, a, charts, self.closed, self.shift)

    def refined(self, factor=2):
        """Resample with ``factor`` times as many intervals (same end points)."""
        p = self.params
        sub = [p[:-1] + (p[1:] - p[:-1]) * j / factor for j in range(factor)]
        grid = np.concatenate([np.stack(sub, axis=1).ravel(), p[-1:]])
        return self.resample(grid)

    def subcurve(self, lo, hi):
        lo = max(lo, self.params[0])
        hi = min(hi, self.params[-1])
        inner = self.params[(self.params > lo) & (self.params < hi)]
        grid = np.concatenate([[lo], inner, [hi]])
        return DiscretizedCurve(*self._jets_on(grid), closed=False)

    def _jets_on(self, grid):
        x, v, a = self.jets(grid)
        charts = self.chart_ids[self._locate(grid)[1]]
        return grid, x, v, a, charts

    def to_dict(self):
        return {
            "params": self.params.tolist(),
            "points": self.points.tolist(),
            "velocities": self.velocities.tolist(),
            "accelerations": self.accelerations.tolist(),
            "chart_ids": self.chart_ids.tolist(),
            "closed": bool(self.closed),
            "shift": self.shift.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.array(d["params"]),
            np.array(d["points"]),
            np.array(d["velocities"]),
            np.array(d["accelerations"]),
            np.array(d.get("chart_ids", [0] * len(d["params"]))),
            bool(d.get("closed", False)),
            np.array(d["shift"]) if d.get("shift") is not None else None,
        )


def curve_from_function(fun, params, closed=False, shift=None, chart=0):
    """Sample ``fun(s) -> (x, x', x'')`` on ``params``."""
    params = np.asarray(params, float)
    x, v, a = fun(params)
    return DiscretizedCurve(
        params, x, v, a, np.full(len(params), chart), closed=closed, shift=shift
    )


def concatenate(pieces, closed=False, shift=None, tol=1e-9):
    """Join pieces whose parameter ranges and end points abut."""
    from .errors import AssemblyError

    params, pts, vel, acc, charts = [], [], [], [], []
    for k, c in enumerate(pieces):
        if k:
            prev = pieces[k - 1]
            if abs(prev.params[-1] - c.params[0]) > 1e-12 * max(1.0, abs(c.params[0])):
                raise AssemblyError(f"parameter gap between pieces {k - 1} and {k}")
            gap = np.linalg.norm(prev.points[-1] - c.points[0])
            if gap > tol:
                raise AssemblyError(f"end point mismatch {gap:.3e} between pieces {k - 1} and {k}")
            sl = slice(1, None)
        else:
            sl = slice(None)
        params.append(c.params[sl])
        pts.append(c.points[sl])
        vel.append(c.velocities[sl])
        acc.append(c.accelerations[sl])
        charts.append(c.chart_ids[sl])
    return DiscretizedCurve(
        np.concatenate(params),
        np.concatenate(pts),
        np.concatenate(vel),
        np.concatenate(acc),
        np.concatenate(charts),
        closed=closed,
        shift=shift,
    )
