"""Weighted multigraphs, immersed nets, length and stationarity tests."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .curves import DiscretizedCurve
from .errors import AssemblyError, ParametrizationError, PreconditionError
from .fermi import geodesic_residual


@dataclass(frozen=True)
class Edge:
    tail: object
    head: object
    multiplicity: int = 1


@dataclass(frozen=True)
class WeightedMultigraph:
    """Finite graph with positive integer edge weights; loops and parallel edges allowed."""

    vertices: tuple
    edges: dict

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        edges = {}
        for eid, e in dict(self.edges).items():
            if not isinstance(e, Edge):
                e = Edge(*e)
            if e.tail not in self.vertices or e.head not in self.vertices:
                raise AssemblyError(f"edge {eid!r} ends at an unknown vertex")
            if int(e.multiplicity) != e.multiplicity or e.multiplicity < 1:
                raise AssemblyError(f"edge {eid!r} needs a positive integer multiplicity")
            edges[eid] = e
        object.__setattr__(self, "edges", edges)

    def is_loop(self, eid):
        e = self.edges[eid]
        return e.tail == e.head

    def ends_at(self, v):
        """``(edge id, end)`` pairs meeting ``v``; end 0 is the tail, 1 the head."""
        out = []
        for eid, e in self.edges.items():
            if e.tail == v:
                out.append((eid, 0))
            if e.head == v:
                out.append((eid, 1))
        return out

    def same_type(self, other):
        return self.vertices == other.vertices and self.edges == other.edges

    def to_dict(self):
        return {
            "vertices": list(self.vertices),
            "edges": {
                str(k): {"tail": e.tail, "head": e.head, "multiplicity": int(e.multiplicity)}
                for k, e in self.edges.items()
            },
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple(d["vertices"]),
            {k: Edge(e["tail"], e["head"], int(e["multiplicity"])) for k, e in d["edges"].items()},
        )


@dataclass(frozen=True)
class GammaNet:
    """An immersion of a weighted multigraph: vertex points and edge curves.

    Edge curves are oriented tail to head. On periodic charts the curve end
    may sit at a lattice translate of the vertex position.
    """

    graph: WeightedMultigraph
    vertex_positions: dict
    edge_curves: dict
    vertex_charts: dict = None
    periods: tuple = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pos = {v: np.asarray(p, float) for v, p in self.vertex_positions.items()}
        object.__setattr__(self, "vertex_positions", pos)
        charts = {v: 0 for v in pos} if self.vertex_charts is None else dict(self.vertex_charts)
        object.__setattr__(self, "vertex_charts", charts)
        for v in self.graph.vertices:
            if v not in pos:
                raise AssemblyError(f"vertex {v!r} has no position")
        for eid, e in self.graph.edges.items():
            c = self.edge_curves.get(eid)
            if c is None:
                raise AssemblyError(f"edge {eid!r} has no curve")
            if np.min(np.linalg.norm(c.velocities, axis=1)) <= 0:
                raise ParametrizationError(f"edge {eid!r} is not immersed")
            for end, v in ((0, e.tail), (-1, e.head)):
                if c.chart_ids[end] != charts[v]:
                    continue
                gap = self._gap(c.points[end], pos[v])
                if gap > 1e-9:
                    raise AssemblyError(f"edge {eid!r} misses vertex {v!r} by {gap:.3e}")

    def _gap(self, p, q):
        d = p - q
        if self.periods is not None:
            per = np.asarray(self.periods, float)
            d = d - np.round(d / per) * per
        return float(np.linalg.norm(d))

    @property
    def vertices(self):
        return self.graph.vertices

    def edges(self):
        return self.graph.edges.items()

    def with_curves(self, curves, positions=None):
        return GammaNet(
            self.graph,
            self.vertex_positions if positions is None else positions,
            curves,
            self.vertex_charts,
            self.periods,
        )

    def to_dict(self):
        return {
            "graph": self.graph.to_dict(),
            "vertex_positions": {str(v): p.tolist() for v, p in self.vertex_positions.items()},
            "vertex_charts": {str(v): int(c) for v, c in self.vertex_charts.items()},
            "edge_curves": {str(k): c.to_dict() for k, c in self.edge_curves.items()},
            "periods": None if self.periods is None else list(self.periods),
        }

    @classmethod
    def from_dict(cls, d):
        graph = WeightedMultigraph.from_dict(d["graph"])
        return cls(
            graph,
            {v: np.array(p) for v, p in d["vertex_positions"].items()},
            {k: DiscretizedCurve.from_dict(c) for k, c in d["edge_curves"].items()},
            {v: int(c) for v, c in d.get("vertex_charts", {}).items()} or None,
            None if d.get("periods") is None else tuple(d["periods"]),
        )


def net_length(metric, net):
    """Multiplicity-weighted sum of edge lengths."""
    return float(
        sum(e.multiplicity * net.edge_curves[eid].length(metric) for eid, e in net.edges())
    )


def inward_tangent(metric, net, eid, end, chart=None):
    """Unit tangent pointing into edge ``eid`` at its tail (0) or head (1)."""
    c = net.edge_curves[eid]
    i = 0 if end == 0 else -1
    x, w, src = c.points[i], c.velocities[i], int(c.chart_ids[i])
    if end != 0:
        w = -w
    if chart is not None and chart != src:
        x, w = metric.transition(x, w, src, chart)
        src = chart
    nrm = float(metric.norm(x, w, src))
    if nrm <= 1e-14:
        raise ParametrizationError(f"edge {eid!r} has zero speed at a vertex")
    return w / nrm


def vertex_defect(metric, net, v):
    """Multiplicity-weighted sum of inward unit tangents at vertex ``v``."""
    chart = net.vertex_charts[v]
    total = np.zeros(metric.dim)
    for eid, end in net.graph.ends_at(v):
        m = net.graph.edges[eid].multiplicity
        total = total + m * inward_tangent(metric, net, eid, end, chart)
    return total


@dataclass
class StationarityReport:
    edge_residuals: dict
    vertex_defects: dict
    defect_norms: dict
    total_length: float
    tol: float
    stationary: bool
    embedded: bool = None
    essential: bool = None

    @property
    def max_residual(self):
        return max(self.edge_residuals.values(), default=0.0)

    @property
    def max_defect(self):
        return max(self.defect_norms.values(), default=0.0)

    def to_dict(self):
        return {
            "tolerance": self.tol,
            "total_length": self.total_length,
            "edge_residuals": {str(k): v for k, v in self.edge_residuals.items()},
            "vertex_defects": {str(k): v.tolist() for k, v in self.vertex_defects.items()},
            "defect_norms": {str(k): v for k, v in self.defect_norms.items()},
            "max_residual": self.max_residual,
            "max_defect": self.max_defect,
            "stationary": self.stationary,
            "embedded": self.embedded,
            "essential": self.essential,
        }


def is_stationary(metric, net, tol=1e-6, fixed=()):
    """Edge residuals and vertex defects; vertices in ``fixed`` are boundary points and skipped."""
    res = {eid: float(np.max(geodesic_residual(metric, net.edge_curves[eid]))) for eid, _ in net.edges()}
    defects = {v: vertex_defect(metric, net, v) for v in net.vertices if v not in fixed}
    norms = {
        v: float(metric.norm(net.vertex_positions[v], d, net.vertex_charts[v]))
        for v, d in defects.items()
    }
    ok = all(r < tol for r in res.values()) and all(n < tol for n in norms.values())
    return StationarityReport(res, defects, norms, net_length(metric, net), tol, ok)


def _seg_dist(p0, p1, q0, q1):
    """Distance between segments ``[p0, p1]`` and ``[q0, q1]`` (row-wise)."""
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a = np.sum(d1 * d1, -1)
    e = np.sum(d2 * d2, -1)
    f = np.sum(d2 * r, -1)
    c = np.sum(d1 * r, -1)
    b = np.sum(d1 * d2, -1)
    den = a * e - b * b
    s = np.where(den > 1e-30, np.clip((b * f - c * e) / np.where(den > 1e-30, den, 1), 0, 1), 0.0)
    t = (b * s + f) / np.where(e > 0, e, 1)
    # clamp t and recompute s
    t = np.clip(t, 0, 1)
    s = np.clip((b * t - c) / np.where(a > 0, a, 1), 0, 1)
    t = np.clip((b * s + f) / np.where(e > 0, e, 1), 0, 1)
    diff = r + d1 * s[:, None] - d2 * t[:, None]
    return np.linalg.norm(diff, axis=-1)


def is_embedded(net, clearance=1e-4, metric=None, vertex_exclusion=None):
    """Segment proximity sweep on embedded edge samples.

    Pairs of segments closer than ``clearance`` are violations unless they
    are adjacent on the same edge or both lie within ``vertex_exclusion``
    of a common vertex.
    """
    pts, owner, index = [], [], []
    box = metric.embed_boxsize if metric is not None else None
    if box is None and net.periods is not None and len(set(net.periods)) == 1:
        box = float(net.periods[0])
    for k, (eid, _) in enumerate(net.edges()):
        c = net.edge_curves[eid]
        e = metric.embed(c.points, c.chart_ids) if metric is not None else c.points
        pts.append(e)
        owner.append(np.full(len(e), k))
        index.append(np.arange(len(e)))
    P = np.concatenate(pts)
    own = np.concatenate(owner)
    idx = np.concatenate(index)
    def wrap(d):
        return d - np.round(d / box) * box if box else d

    seg_len = max(float(np.max(np.linalg.norm(wrap(np.diff(p, axis=0)), axis=1))) for p in pts)
    if vertex_exclusion is None:
        vertex_exclusion = max(50 * clearance, 4 * seg_len)
    vpts = []
    for v in net.vertices:
        x = net.vertex_positions[v]
        vpts.append(metric.embed(x, net.vertex_charts[v]) if metric is not None else x)
    vpts = np.array(vpts)

    near_v = np.zeros((len(P), len(vpts)), bool)
    for j, q in enumerate(vpts):
        near_v[:, j] = np.linalg.norm(wrap(P - q), axis=1) < vertex_exclusion
    # only edges incident to a vertex may approach it
    eids = [eid for eid, _ in net.edges()]
    inc = np.array([[v in (net.graph.edges[e].tail, net.graph.edges[e].head) for v in net.vertices] for e in eids])
    near_v &= inc[own]
    Q = np.mod(P, box) if box else P
    tree = cKDTree(Q, boxsize=box)
    pairs = tree.query_pairs(clearance + seg_len, output_type="ndarray")
    if len(pairs) == 0:
        return True
    i, j = pairs[:, 0], pairs[:, 1]
    same = own[i] == own[j]
    n_i = np.array([len(p) for p in pts])[own[i]]
    gap = np.abs(idx[i] - idx[j])
    closed = np.array([net.edge_curves[eid].closed or net.graph.is_loop(eid) for eid, _ in net.edges()])[own[i]]
    gap = np.where(same & closed, np.minimum(gap, n_i - 1 - gap), gap)
    keep = ~(same & (gap <= 2))
    keep &= ~np.any(near_v[i] & near_v[j], axis=1)
    i, j = i[keep], j[keep]
    if len(i) == 0:
        return True
    # segments starting at each sample (last sample uses the previous one)
    def seg(k):
        last = idx[k] == np.array([len(p) for p in pts])[own[k]] - 1
        a = np.where(last, k - 1, k)
        return P[a], P[a] + wrap(P[a + 1] - P[a])

    p0, p1 = seg(i)
    q0, q1 = seg(j)
    shift = wrap(q0 - p0) - (q0 - p0)
    d = _seg_dist(p0, p1, q0 + shift, q1 + shift)
    return bool(np.all(d > clearance))


def _clusters(dirs, mults, tol):
    groups = []
    for u, m in zip(dirs, mults):
        for g in groups:
            if np.linalg.norm(g[0] - u) < tol:
                g[1] += m
                break
        else:
            groups.append([u, m])
    return groups


def is_essential(net, metric, tol=1e-6, angle_tol=None):
    """False iff at every vertex the edge ends pair off with opposite tangents and equal weight."""
    rep = is_stationary(metric, net, tol)
    if not rep.stationary:
        raise PreconditionError("essentiality is only defined for stationary nets")
    angle_tol = tol if angle_tol is None else angle_tol
    for v in net.vertices:
        chart = net.vertex_charts[v]
        x = net.vertex_positions[v]
        ends = net.graph.ends_at(v)
        if not ends:
            continue
        # orthonormal coordinates at the vertex so Euclidean tolerances apply
        L = np.linalg.cholesky(metric.eval(x, chart))
        dirs = [L.T @ inward_tangent(metric, net, eid, end, chart) for eid, end in ends]
        mults = [net.graph.edges[eid].multiplicity for eid, _ in ends]
        groups = _clusters(dirs, mults, angle_tol)
        for u, m in groups:
            partner = [g for g in groups if np.linalg.norm(g[0] + u) < angle_tol]
            if not partner or partner[0][1] != m:
                return True
    return False
