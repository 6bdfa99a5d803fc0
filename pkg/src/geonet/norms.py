"""Grid C^k norms, finite-difference stencils and polynomial cutoff profiles."""

from __future__ import annotations

import itertools
from math import comb, factorial

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ResolutionError


def ck_norm(samples, k, spacing, return_orders=False):
    """Max over the grid of all partial derivatives of order ``<= k``.

    ``spacing`` is a scalar for a 1-D grid along axis 0 or a tuple giving
    the spacing of each leading grid axis; trailing axes are components.
    Derivatives are centred second-order differences (one-sided at edges).
    """
    f = np.asarray(samples, dtype=float)
    if np.isscalar(spacing):
        spacing = (float(spacing),)
    spacing = tuple(float(h) for h in spacing)
    d = len(spacing)
    if f.ndim < d:
        raise ValueError("samples have fewer axes than the grid")
    for ax in range(d):
        if f.shape[ax] < max(3, k + 3):
            raise ResolutionError(
                f"axis {ax} has {f.shape[ax]} points, too few for order-{k} differences"
            )
    orders = [float(np.max(np.abs(f))) if f.size else 0.0]
    level = {(): f}
    for order in range(1, k + 1):
        nxt = {}
        best = 0.0
        for idx in itertools.combinations_with_replacement(range(d), order):
            parent = level[idx[:-1]]
            ax = idx[-1]
            der = np.gradient(parent, spacing[ax], axis=ax, edge_order=2)
            nxt[idx] = der
            best = max(best, float(np.max(np.abs(der))))
        level = nxt
        orders.append(best)
    total = max(orders)
    return (total, orders) if return_orders else total


def fd_weights(z, nodes, m):
    """Fornberg weights ``w[j, i]`` for the j-th derivative at ``z`` from ``nodes``."""
    x = np.asarray(nodes, float)
    n = len(x)
    c = np.zeros((m + 1, n))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for kk in range(mn, 0, -1):
                    c[kk, i] = c1 * (kk * c[kk - 1, i - 1] - c5 * c[kk, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for kk in range(mn, 0, -1):
                c[kk, j] = (c4 * c[kk, j] - kk * c[kk - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def central_derivatives(fun, s0, max_order, step, half_width=None):
    """Derivatives ``0..max_order`` of ``fun`` at ``s0`` from a wide central stencil.

    The stencil reproduces polynomials of degree ``2 * half_width``, so the
    truncation error is ``O(step ** (2 * half_width + 1 - order))``.
    """
    if half_width is None:
        half_width = max_order // 2 + 4
    offs = np.arange(-half_width, half_width + 1) * step
    vals = np.asarray(fun(s0 + offs), float)
    w = fd_weights(0.0, offs, max_order)
    return np.tensordot(w, vals, axes=(1, 0))


def smoothstep(order):
    """Polynomial ``S`` on [0, 1] with ``S(0)=0, S(1)=1`` and ``order`` vanishing derivatives at both ends."""
    N = order
    coef = np.zeros(2 * N + 2)
    for kk in range(N + 1):
        coef[N + 1 + kk] = comb(N + kk, kk) * comb(2 * N + 1, N - kk) * (-1) ** kk
    return Polynomial(coef)


class Cutoff:
    """Profile equal to 1 on ``x <= plateau`` and 0 on ``x >= support``.

    In between it is ``1 - S((x - plateau) / (support - plateau))`` with a
    smoothstep ``S`` of the given order, so the profile is C^order.
    """

    def __init__(self, plateau, support, order):
        if not 0 <= plateau < support:
            raise ValueError("need 0 <= plateau < support")
        self.plateau = float(plateau)
        self.support = float(support)
        self.order = int(order)
        self._poly = smoothstep(self.order)
        self._width = self.support - self.plateau

    def __call__(self, x, nu=0):
        x = np.asarray(x, float)
        t = (x - self.plateau) / self._width
        inside = (t > 0) & (t < 1)
        p = self._poly.deriv(nu) if nu else self._poly
        mid = -p(np.clip(t, 0, 1)) / self._width**nu
        if nu == 0:
            out = np.where(t <= 0, 1.0, np.where(t >= 1, 0.0, 1.0 + mid))
        else:
            out = np.where(inside, mid, 0.0)
        return out

    def to_dict(self):
        return {"plateau": self.plateau, "support": self.support, "order": self.order}

    @classmethod
    def from_dict(cls, d):
        return cls(d["plateau"], d["support"], d["order"])


def taylor_coefficients(derivs):
    return np.array([d / factorial(j) for j, d in enumerate(derivs)])
