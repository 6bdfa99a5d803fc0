"""Compactly supported conformal factors that straighten curves, and their stacks."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConsistencyError, GeometryError, SupportOverlapError
from .fermi import (
    _project_flat,
    CurvatureProfile,
    FermiTube,
    geodesic_curvature,
    gram_schmidt,
    tube_coordinates_batch,
    tube_point,
)
from .manifolds import MetricField, christoffel_from, metric_from_spec
from .norms import Cutoff, ck_norm


class ConformalFactor:
    """``f(s, h) = chi(|h|) * sum_i h_i k^i(s)`` in the Fermi coordinates of ``tube``."""

    def __init__(self, tube: FermiTube, profile: CurvatureProfile, cutoff_radius, order=4):
        if cutoff_radius > tube.radius * (1 + 1e-12):
            raise GeometryError("cutoff radius exceeds the tube radius")
        self.tube = tube
        self.profile = profile
        self.cutoff_radius = float(cutoff_radius)
        self.chi = Cutoff(0.5 * cutoff_radius, cutoff_radius, order)
        pts = tube.base.points
        self._reach = self.cutoff_radius + np.max(np.linalg.norm(np.diff(pts, axis=0), axis=1))
        # bounding ball for a cheap first rejection
        self._center = pts[len(pts) // 2]
        d = self.metric.displacement(self._center, pts)
        self._ball = float(np.max(np.linalg.norm(d, axis=-1))) + self._reach

    @property
    def metric(self):
        return self.tube.metric

    def in_coords(self, s, h, nu=0):
        """Value (``nu=0``) or ``(d/ds, d/dh)`` gradient in Fermi coordinates."""
        rho = np.linalg.norm(h, axis=-1)
        k = self.profile(s)
        hk = np.sum(h * k, axis=-1)
        chi = self.chi(rho)
        if nu == 0:
            return chi * hk
        dk = self.profile(s, 1)
        fs = chi * np.sum(h * dk, axis=-1)
        dchi = self.chi(rho, 1)
        unit = np.where(rho[..., None] > 0, h / np.where(rho > 0, rho, 1.0)[..., None], 0.0)
        fh = (dchi * hk)[..., None] * unit + chi[..., None] * k
        return fs, fh

    def _candidates(self, x):
        m = self.metric
        near = np.linalg.norm(m.displacement(self._center, x), axis=-1) < self._ball
        if not np.any(near):
            return near
        box = m.embed_boxsize if m.is_flat else None
        xs = x[near]
        q = np.mod(xs, box) if box else xs
        d, _ = self.tube.kdtree().query(q, distance_upper_bound=self._reach)
        near[near] = np.isfinite(d)
        return near

    def value_and_gradient(self, x):
        """``f`` and its chart gradient ``df`` at points ``x[..., n]``."""
        x = np.asarray(x, float)
        shape = x.shape[:-1]
        flat = x.reshape(-1, x.shape[-1])
        val = np.zeros(len(flat))
        grad = np.zeros_like(flat)
        if not self.metric.is_flat:
            return self._fd_value_and_gradient(flat, shape)
        cand = self._candidates(flat)
        if not np.any(cand):
            return val.reshape(shape), grad.reshape(shape + (x.shape[-1],))
        if np.any(cand):
            xc = flat[cand]
            s, h, ok, dc, fr, dfr = _project_flat(self.tube, xc)
            fs, fh = self.in_coords(s, h, 1)
            v = self.in_coords(s, h)
            js = dc + np.einsum("pi,pin->pn", h, dfr)
            J = np.concatenate([js[:, :, None], np.swapaxes(fr, 1, 2)], axis=2)
            rhs = np.concatenate([fs[:, None], fh], axis=1)
            gr = np.linalg.solve(np.swapaxes(J, 1, 2), rhs[..., None])[..., 0]
            val[cand] = np.where(ok, v, 0.0)
            grad[cand] = np.where(ok[:, None], gr, 0.0)
        return val.reshape(shape), grad.reshape(shape + (x.shape[-1],))

    def _fd_value_and_gradient(self, flat, shape):
        def value(p):
            s, h, ok = tube_coordinates_batch(self.tube, p)
            return np.where(ok, self.in_coords(s, h), 0.0)

        val = value(flat)
        n = flat.shape[-1]
        grad = np.zeros_like(flat)
        eps = 1e-5
        for j in range(n):
            e = np.zeros(n)
            e[j] = eps
            grad[:, j] = (value(flat + e) - value(flat - e)) / (2 * eps)
        return val.reshape(shape), grad.reshape(shape + (n,))

    def support_samples(self, n=1000, seed=0):
        """Points with ``f != 0``: curvature-support parameters times in-ball offsets."""
        rng = np.random.default_rng(seed)
        prof = self.profile
        live = prof.params[prof.magnitude() > 1e-14 * max(prof.sup(), 1e-300)]
        if len(live) == 0:
            return np.zeros((0, self.tube.base.dim))
        s = rng.uniform(live.min(), live.max(), n)
        nd = self.tube.frame.shape[1]
        dirs = rng.normal(size=(n, nd))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        rad = self.cutoff_radius * rng.uniform(0, 1, n) ** (1.0 / nd)
        return tube_point(self.tube, s, dirs * rad[:, None])

    def to_dict(self):
        return {
            "tube": self.tube.to_dict(),
            "profile": self.profile.to_dict(),
            "cutoff_radius": self.cutoff_radius,
            "order": self.chi.order,
        }

    @classmethod
    def from_dict(cls, metric, d):
        tube = FermiTube.from_dict(metric, d["tube"])
        return cls(tube, CurvatureProfile.from_dict(d["profile"]), d["cutoff_radius"], d.get("order", 4))


def curvature_kill_factor(metric, curve, tube, cutoff_radius, order=4):
    """Factor whose normal gradient on ``curve`` equals its curvature vector."""
    if cutoff_radius > tube.radius * (1 + 1e-12):
        raise GeometryError("cutoff radius exceeds the tube radius")
    profile = geodesic_curvature(metric, curve, tube)
    return ConformalFactor(tube, profile, cutoff_radius, order)


class ConformalStack(MetricField):
    """``g* = exp(2 sum_j f_j) g`` over a base metric."""

    def __init__(self, base, factors=(), declared_disjoint=False):
        self.base = base
        self.factors = list(factors)
        self.declared_disjoint = bool(declared_disjoint)
        self.dim = base.dim
        self.injectivity_radius_bound = base.injectivity_radius_bound
        self.n_charts = base.n_charts
        self.periods = base.periods
        self.is_flat = base.is_flat and not self.factors

    def total(self, x):
        x = np.asarray(x, float)
        F = np.zeros(x.shape[:-1])
        dF = np.zeros(x.shape)
        for fac in self.factors:
            v, g = fac.value_and_gradient(x)
            F = F + v
            dF = dF + g
        return F, dF

    def eval(self, x, chart=0):
        F, _ = self.total(x)
        return np.exp(2 * F)[..., None, None] * self.base.eval(x, chart)

    def _first_derivs(self, x, chart):
        F, dF = self.total(x)
        g = self.base.eval(x, chart)
        dg = self.base.eval_derivs(x, 1, chart)
        e = np.exp(2 * F)[..., None, None, None]
        return e * (2 * dF[..., :, None, None] * g[..., None, :, :] + dg)

    def christoffel(self, x, chart=0):
        x = np.asarray(x, float)
        return christoffel_from(self.eval(x, chart), self.eval_derivs(x, 1, chart))

    def _grad(self, x, dF, chart):
        g = self.base.eval(x, chart)
        return np.linalg.solve(g, dF[..., None])[..., 0]

    def acceleration(self, x, v, chart=0):
        x = np.asarray(x, float)
        a = self.base.acceleration(x, v, chart)
        if not self.factors:
            return a
        _, dF = self.total(x)
        v2 = self.base.inner(x, v, v, chart)
        return a - 2 * np.sum(dF * v, -1)[..., None] * v + v2[..., None] * self._grad(x, dF, chart)

    def transport_rhs(self, x, v, w, chart=0):
        x = np.asarray(x, float)
        out = self.base.transport_rhs(x, v, w, chart)
        if not self.factors:
            return out
        _, dF = self.total(x)
        gF = self._grad(x, dF, chart)
        dv = np.sum(dF * v, -1)[..., None, None]
        dw = np.sum(dF[..., None, :] * w, -1)[..., None]
        vw = self.base.inner(x[..., None, :], v[..., None, :], w, chart)[..., None]
        return out - (dv * w + dw * v[..., None, :] - vw * gF[..., None, :])

    def check_domain(self, x, chart=0):
        self.base.check_domain(x, chart)

    def switch_chart(self, x, v, chart):
        return self.base.switch_chart(x, v, chart)

    def transition(self, x, v, src, dst):
        return self.base.transition(x, v, src, dst)

    def to_chart(self, x, chart, dst):
        return self.base.to_chart(x, chart, dst)

    def displacement(self, p, q, chart=0):
        return self.base.displacement(p, q, chart)

    def embed(self, x, chart=0):
        return self.base.embed(x, chart)

    @property
    def embed_boxsize(self):
        return self.base.embed_boxsize

    def support_distance(self, n=1000, seed=0):
        """Minimum sampled distance between supports of distinct factors."""
        clouds = [f.support_samples(n, seed + j) for j, f in enumerate(self.factors)]
        return min_cloud_distance(self.base, clouds)

    def to_spec(self):
        return {
            "type": "conformal_stack",
            "base": self.base.to_spec(),
            "declared_disjoint": self.declared_disjoint,
            "factors": [f.to_dict() for f in self.factors],
        }

    @classmethod
    def from_spec(cls, spec):
        base = metric_from_spec(spec["base"])
        factors = [ConformalFactor.from_dict(base, d) for d in spec.get("factors", [])]
        return cls(base, factors, spec.get("declared_disjoint", False))


def min_cloud_distance(metric, clouds):
    best = np.inf
    box = metric.embed_boxsize
    emb = []
    for c in clouds:
        e = metric.embed(c) if len(c) else c
        if box is not None and len(c):
            e = np.mod(e, box)
        emb.append(e)
    for i in range(len(emb)):
        for j in range(i + 1, len(emb)):
            if len(emb[i]) == 0 or len(emb[j]) == 0:
                continue
            tree = cKDTree(emb[j], boxsize=box)
            d, _ = tree.query(emb[i])
            best = min(best, float(d.min()))
    return best


def apply_conformal(stack: ConformalStack, n_samples=1000, seed=0):
    """Validate a stack and return it as an evaluable metric."""
    if stack.declared_disjoint and len(stack.factors) > 1:
        clouds = [f.support_samples(n_samples, seed + j) for j, f in enumerate(stack.factors)]
        for i, cloud in enumerate(clouds):
            if not len(cloud):
                continue
            for j, fac in enumerate(stack.factors):
                if i == j:
                    continue
                v, g = fac.value_and_gradient(cloud)
                if np.any(v != 0) or np.any(g != 0):
                    raise SupportOverlapError(f"declared-disjoint supports {i} and {j} overlap")
    return stack


def conformal_geodesic_curvature(metric, f, curve, tube, tol=1e-5):
    """Curvature of ``curve`` in ``exp(2f) metric`` by two independent routes.

    Returns ``(formula, direct)`` profiles; the formula route is
    ``exp(-f) (k - (grad f)^perp)`` and the direct route uses Levi-Civita
    symbols assembled from the perturbed metric's derivatives.
    """
    if isinstance(f, ConformalFactor):
        stack = ConformalStack(metric, [f])
    elif isinstance(f, ConformalStack):
        stack = f
    else:
        stack = ConformalStack(metric, list(f))
    c = int(curve.chart_ids[0])
    x, v, a = curve.points, curve.velocities, curve.accelerations
    base_k = geodesic_curvature(metric, curve, tube)
    F, dF = stack.total(x)
    dn = np.einsum("pn,pin->pi", dF, tube.frame)
    formula = np.exp(-F)[:, None] * (base_k.components - dn)

    gam = stack.christoffel(x, c)
    dv = a + np.einsum("pkij,pi,pj->pk", gam, v, v)
    frame = gram_schmidt(stack, x, tube.frame, against=v, chart=c)
    v2 = stack.inner(x, v, v, c)
    direct = stack.inner(x[:, None], frame, dv[:, None], c) / v2[:, None]
    gap = float(np.abs(formula - direct).max()) if len(x) else 0.0
    if gap > tol:
        raise ConsistencyError(f"formula and direct curvature disagree by {gap:.3e}")
    out_f = CurvatureProfile(curve.params.copy(), formula)
    out_d = CurvatureProfile(curve.params.copy(), direct)
    out_f.agreement = gap
    out_d.agreement = gap
    return out_f, out_d


def metric_ck_distance(g, g_star, k, grid, chart=0):
    """C^k norm of ``g* - g`` component-wise on a tensor-product grid.

    ``grid`` is a list of 1-D uniformly spaced coordinate arrays.
    """
    axes = [np.asarray(a, float) for a in grid]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    diff = g_star.eval(mesh, chart) - g.eval(mesh, chart)
    spacing = tuple(float(a[1] - a[0]) for a in axes)
    return ck_norm(diff, k, spacing)
