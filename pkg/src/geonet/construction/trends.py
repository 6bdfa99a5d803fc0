"""Smallness norms of a construction and their behaviour along a tilt sweep."""

from __future__ import annotations

import numpy as np

from ..conformal import metric_ck_distance
from ..fermi import fermi_tube, geodesic_curvature
from ..norms import ck_norm


def sweep_tilts(j_min, j_max):
    """Tilts ``2^-j`` for ``j = j_min..j_max``."""
    return [2.0**-j for j in range(int(j_min), int(j_max) + 1)]


def connector_norm(loops, k):
    return max(max(tl.u_out.ck_norm(k + 2), tl.u_back.ck_norm(k + 2)) for tl in loops)


def curvature_norm(metric, loops, k, n=801):
    """``C^k`` norm of the loop curvature vectors, sampled over the connector spans."""
    best = 0.0
    for tl in loops:
        tube = fermi_tube(metric, tl.curve, 1e-3, check_overlap=False)
        prof = geodesic_curvature(metric, tl.curve, tube)
        for lo, hi in tl.connector_spans:
            s = np.linspace(lo, hi, n)
            best = max(best, ck_norm(prof(s), k, (hi - lo) / (n - 1)))
    return best


def factor_norm(factors, k, n_s=161, n_h=33):
    """``C^k`` norm of each factor on a grid in its Fermi coordinates ``(s, h)``."""
    best = 0.0
    for fac in factors:
        lo, hi = fac.tube.base.span
        nd = fac.tube.frame.shape[1]
        s = np.linspace(lo, hi, n_s)
        h = np.linspace(-fac.cutoff_radius, fac.cutoff_radius, n_h)
        axes = [s] + [h] * nd
        mesh = np.meshgrid(*axes, indexing="ij")
        vals = fac.in_coords(mesh[0], np.stack(mesh[1:], axis=-1))
        spacing = tuple(float(a[1] - a[0]) for a in axes)
        best = max(best, ck_norm(vals, k, spacing))
    return best


def metric_distance(stack, k, n=33):
    """``C^k`` norm of ``g* - g`` on a Cartesian box around each factor support."""
    best = 0.0
    for fac in stack.factors:
        pts = fac.tube.base.points
        pad = fac.cutoff_radius * 1.05
        lo = pts.min(axis=0) - pad
        hi = pts.max(axis=0) + pad
        grid = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
        best = max(best, metric_ck_distance(stack.base, stack, k, grid, int(fac.tube.chart)))
    return best


def construction_norms(stack, loops, k):
    return {
        "u_Ck+2": connector_norm(loops, k),
        "k_Ck": curvature_norm(stack.base, loops, k),
        "f_Ck": factor_norm(stack.factors, k),
        "g_Ck": metric_distance(stack, k),
    }


def trend_check(values, slack=0.05, final_ratio=0.1):
    """Non-increasing within ``slack`` per step and the last below ``final_ratio`` of the first."""
    v = np.asarray(values, float)
    steps = v[1:] <= v[:-1] * (1 + slack)
    last = bool(v[-1] < final_ratio * v[0]) if v[0] > 0 else False
    return {
        "values": v.tolist(),
        "monotone": bool(np.all(steps)),
        "final_ratio": float(v[-1] / v[0]) if v[0] > 0 else float("nan"),
        "decays": last,
        "ok": bool(np.all(steps) and last),
    }


def sweep_report(norm_rows, slack=0.05, final_ratio=0.1):
    """Trend checks for each norm plus the factor-to-curvature ratio spread."""
    keys = list(norm_rows[0])
    out = {key: trend_check([row[key] for row in norm_rows], slack, final_ratio) for key in keys}
    ratio = np.array([row["f_Ck"] / row["k_Ck"] for row in norm_rows if row["k_Ck"] > 0])
    out["factor_ratio_spread"] = float(ratio.max() / ratio.min()) if len(ratio) else float("nan")
    out["ok"] = all(out[key]["ok"] for key in keys)
    return out
