import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import lattice_loop, line_curve
from geonet.curves import curve_from_function
from geonet.errors import AssemblyError, ParametrizationError, PreconditionError
from geonet.manifolds import FlatTorus, ellipsoid, round_sphere
from geonet.net import (
    Edge,
    GammaNet,
    WeightedMultigraph,
    is_embedded,
    is_essential,
    is_stationary,
    net_length,
    vertex_defect,
)
from geonet.solver import continue_net, find_closed_geodesic, relax_net


def loop_net(curve, mult=1, periods=(1.0, 1.0, 1.0)):
    g = WeightedMultigraph(("p",), {"e": Edge("p", "p", mult)})
    return GammaNet(g, {"p": curve.points[0]}, {"e": curve}, periods=periods)


def tripod(center, ends):
    g = WeightedMultigraph(("c", "p0", "p1", "p2"), {f"e{i}": Edge("c", f"p{i}") for i in range(3)})
    pos = {"c": center, **{f"p{i}": e for i, e in enumerate(ends)}}
    return GammaNet(g, pos, {f"e{i}": line_curve(center, e - center) for i, e in enumerate(ends)})


CENTER = np.array([0.5, 0.5, 0.5])
ENDS = [CENTER + 0.2 * np.array([np.cos(a), np.sin(a), 0.0]) for a in (0.0, 2.3, 4.1)]


def test_graph_validation():
    with pytest.raises(AssemblyError):
        WeightedMultigraph(("a",), {"e": Edge("a", "b")})
    with pytest.raises(AssemblyError):
        WeightedMultigraph(("a",), {"e": Edge("a", "a", 0)})
    g = WeightedMultigraph(("a", "b"), {"e": Edge("a", "b")})
    with pytest.raises(AssemblyError):
        GammaNet(g, {"a": np.zeros(3), "b": np.ones(3)}, {})
    with pytest.raises(AssemblyError):
        GammaNet(g, {"a": np.zeros(3), "b": np.ones(3)}, {"e": line_curve([0, 0, 0], [0.5, 0.5, 0.5])})


def test_graph_dict_round_trip():
    g = WeightedMultigraph(("a", "b"), {"x": Edge("a", "b", 3), "y": Edge("b", "b", 2)})
    assert WeightedMultigraph.from_dict(g.to_dict()) == g
    assert sorted(g.ends_at("b")) == [("x", 1), ("y", 0), ("y", 1)]


@pytest.mark.parametrize("mult", [1, 3])
def test_closed_geodesic_is_stationary_but_not_essential(torus, mult):
    net = loop_net(lattice_loop([0.1, 0.2, 0.3], [1, 0, 0]), mult)
    rep = is_stationary(torus, net)
    assert rep.stationary and rep.max_defect < 1e-12
    assert not is_essential(net, torus)
    assert is_embedded(net, 1e-4, torus)
    assert net_length(torus, net) == pytest.approx(mult)


def test_crossing_geodesics_at_a_vertex_are_not_essential(torus):
    a = lattice_loop([0, 0, 0], [1, 0, 0])
    b = lattice_loop([0, 0, 0], [0, 1, 0])
    g = WeightedMultigraph(("v",), {"a": Edge("v", "v"), "b": Edge("v", "v")})
    net = GammaNet(g, {"v": np.zeros(3)}, {"a": a, "b": b}, periods=(1.0,) * 3)
    assert is_stationary(torus, net).stationary
    assert not is_essential(net, torus)


def test_crossing_away_from_vertices_is_not_embedded(torus):
    a = lattice_loop([0, 0, 0], [1, 0, 0])
    b = lattice_loop([0.5, 0.5, 0], [0, 1, 0])
    g = WeightedMultigraph(("p", "q"), {"a": Edge("p", "p"), "b": Edge("q", "q")})
    net = GammaNet(g, {"p": a.points[0], "q": b.points[0]}, {"a": a, "b": b}, periods=(1.0,) * 3)
    assert not is_embedded(net, 1e-4, torus)
    lifted = lattice_loop([0.5, 0.5, 0.3], [0, 1, 0])
    net2 = GammaNet(g, {"p": a.points[0], "q": lifted.points[0]}, {"a": a, "b": lifted}, periods=(1.0,) * 3)
    assert is_embedded(net2, 1e-4, torus)


def test_essentiality_needs_stationarity(torus):
    net = tripod(CENTER + 0.03, ENDS)
    with pytest.raises(PreconditionError):
        is_essential(net, torus)


def test_tripod_relaxes_to_fermat_point(torus):
    start = tripod(CENTER + np.array([0.03, -0.02, 0.01]), ENDS)
    out = relax_net(torus, start, fixed=("p0", "p1", "p2"), tol=1e-10)
    E = np.array(ENDS)
    ref = minimize(lambda x: np.linalg.norm(E - x, axis=1).sum(), CENTER, method="Nelder-Mead",
                   options=dict(xatol=1e-13, fatol=1e-15, maxiter=20000)).x
    assert np.linalg.norm(out.vertex_positions["c"] - ref) < 1e-8
    assert np.linalg.norm(vertex_defect(torus, out, "c")) < 1e-10
    lengths = [h[0] for h in out.meta["history"]]
    assert lengths[-1] <= lengths[0]


def test_relaxed_tripod_is_essential(torus):
    out = relax_net(torus, tripod(CENTER, ENDS), fixed=("p0", "p1", "p2"), tol=1e-10)
    # only the free vertex matters for essentiality, boundary points are not vertices of a closed net
    dirs = [out.edge_curves[f"e{i}"].velocities[0] for i in range(3)]
    dirs = [d / np.linalg.norm(d) for d in dirs]
    for i in range(3):
        assert dirs[i] @ dirs[(i + 1) % 3] == pytest.approx(-0.5, abs=1e-8)


def test_continuation_moves_linearly_with_the_metric():
    base = FlatTorus(3, 1.0)
    start = relax_net(base, tripod(CENTER, ENDS), fixed=("p0", "p1", "p2"), tol=1e-11)
    disp = []
    for eps in (1e-3, 1e-4, 1e-5):
        bumped = FlatTorus(3, 1.0, bumps=[(eps, [1, 0, 0], 0.3)])
        out = continue_net(bumped, start, fixed=("p0", "p1", "p2"), tol=1e-12)
        assert out.graph.same_type(start.graph)
        disp.append(out.meta["vertex_displacement"] / eps)
    assert max(disp) / min(disp) < 2.0


def test_flat_closed_geodesic_from_wavy_seed(torus):
    s = np.linspace(0, 1, 129)
    seed = curve_from_function(
        lambda s: (np.stack([s, 0.01 * np.sin(2 * np.pi * s), 0 * s + 0.2], -1),
                   np.stack([1 + 0 * s, 0.02 * np.pi * np.cos(2 * np.pi * s), 0 * s], -1),
                   np.zeros((len(s), 3))),
        s, closed=True, shift=[1, 0, 0])
    cg = find_closed_geodesic(torus, seed)
    assert cg.meta["length"] == pytest.approx(1.0, abs=1e-8)
    assert np.ptp(cg.points[:, 1]) < 1e-8


def test_closed_geodesic_on_sphere_is_a_great_circle(sphere):
    th = np.linspace(0, 2 * np.pi, 129)
    X = np.stack([np.cos(th), np.sin(th), 0.05 * np.sin(2 * th)], -1)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    u = sphere.from_embedding(X)
    du = np.gradient(u, th, axis=0)
    seed = curve_from_function(lambda s: (u, du, np.gradient(du, th, axis=0)), th, closed=True)
    cg = find_closed_geodesic(sphere, seed, steps=512)
    assert abs(cg.meta["length"] - 2 * np.pi) < 1e-7
    P = sphere.embed(cg.points, cg.chart_ids)
    assert np.linalg.svd(P, compute_uv=False)[-1] < 1e-6


def test_closed_geodesic_on_ellipsoid_is_a_principal_ellipse():
    axes = [1.0, 1.1, 1.2]
    E = ellipsoid(axes)
    th = np.linspace(0, 2 * np.pi, 129)
    X = np.stack([axes[0] * np.cos(th), axes[1] * np.sin(th), 0.02 * np.sin(th) ** 2], -1)
    u = E.from_embedding(X)
    du = np.gradient(u, th, axis=0)
    seed = curve_from_function(lambda s: (u, du, np.gradient(du, th, axis=0)), th, closed=True)
    cg = find_closed_geodesic(E, seed, steps=512)
    q = np.linspace(0, 2 * np.pi, 4001)
    L = np.trapezoid(np.hypot(axes[0] * np.sin(q), axes[1] * np.cos(q)), q)
    assert abs(cg.meta["length"] - L) < 1e-6
    assert np.abs(E.embed(cg.points, cg.chart_ids)[:, 2]).max() < 1e-6


def test_zero_speed_edges_are_rejected():
    c = line_curve([0, 0, 0], [1, 0, 0])
    bad = type(c)(c.params, c.points, 0 * c.velocities, c.accelerations)
    g = WeightedMultigraph(("a", "b"), {"e": Edge("a", "b")})
    with pytest.raises(ParametrizationError):
        GammaNet(g, {"a": c.points[0], "b": c.points[-1]}, {"e": bad})
