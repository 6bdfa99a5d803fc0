import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import Chebyshev

from conftest import lattice_loop, scenario_doc, unit
from geonet.construction import (
    branch_geodesics,
    build_eyeglass,
    choose_rational_tilt,
    junction_scalar,
)
from geonet.construction.figure_eight import build_figure_eight, rescaled_chart
from geonet.construction.graphs import GraphOffset, matching_defects, taylor_cutoff_connector
from geonet.construction.trends import sweep_tilts, trend_check
from geonet.errors import DegeneracyError, IntersectionError, PreconditionError
from geonet.manifolds import FlatTorus, ellipsoid, round_sphere
from geonet.net import is_embedded, is_essential, is_stationary
from geonet.scenario import build_case


# rational tilt -------------------------------------------------------------

def test_rational_tilt_known_value():
    t, lam, m, n = choose_rational_tilt(4.0, 3.0)
    assert lam == Fraction(6, 5) and (m, n) == (5, 6)
    assert t == pytest.approx(3.0, abs=1e-12)


@given(st.floats(0.05, 5.0), st.floats(1e-4, 0.5), st.integers(2, 500))
@settings(max_examples=60, deadline=None)
def test_multiplicities_balance_exactly(r, t, m_max):
    t2, lam, m, n = choose_rational_tilt(r, t * r, m_max)
    assert m * lam == n
    assert 1 <= m <= m_max
    assert junction_scalar(t2, r) == pytest.approx(float(lam), rel=1e-12)


def test_nonpositive_tilt_is_rejected():
    with pytest.raises(PreconditionError):
        choose_rational_tilt(1.0, 0.0)


# branch geodesics -----------------------------------------------------------

@pytest.mark.parametrize("metric,a,v,e", [
    (FlatTorus(3, 24.0), np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0])),
    (round_sphere(2), np.array([0.1, 0.0]), None, None),
    (ellipsoid([1.0, 1.1, 1.2]), np.array([0.1, -0.05]), None, None),
], ids=["flat", "sphere", "ellipsoid"])
@pytest.mark.parametrize("j", range(3, 9))
def test_branch_inward_sum_matches_junction_scalar(metric, a, v, e, j):
    if v is None:
        g = metric.eval(a)
        v = np.array([1.0, 0.3])
        v = v / np.sqrt(v @ g @ v)
        e = np.array([-(g @ v)[1], (g @ v)[0]])
        e = e / np.sqrt(e @ g @ e)
    r = 0.6 if not metric.is_flat else 9.0
    t = 2.0**-j * (1.0 if metric.is_flat else 0.1)
    a_t, gp, gm, info = branch_geodesics(metric, a, v, e, t, r)
    target = -junction_scalar(t, r) * info["transported_e"]
    assert np.linalg.norm(info["inward_sum"] - target) < 1e-8
    for g in (gp, gm):
        assert np.allclose(g.points[-1], a_t, atol=1e-12)


# connectors -----------------------------------------------------------------

def _wavy_offset():
    s = np.linspace(0, 1, 200)
    h = np.stack([0.01 * np.sin(3 * s), 0.02 * np.cos(2 * s)], -1)
    return GraphOffset([Chebyshev.fit(s, h[:, i], 20, domain=(0, 1)) for i in range(2)], (0, 1))


@pytest.mark.parametrize("k", [1, 2])
def test_connector_matches_to_order_k_plus_2(k):
    h = _wavy_offset()
    u = taylor_cutoff_connector(h, 1.0, (1.0, 1.4), k)
    assert matching_defects(h, u, 1.0, k + 2).max() < 1e-5


def test_undermatched_connector_is_detected():
    h = _wavy_offset()
    u = taylor_cutoff_connector(h, 1.0, (1.0, 1.4), 0)
    defects = matching_defects(h, u, 1.0, 3)
    assert defects[:3].max() < 1e-5
    assert defects[3] > 1e-3


def test_connector_profile_plateau_and_support():
    h = _wavy_offset()
    u = taylor_cutoff_connector(h, 1.0, (1.0, 1.4), 1)
    assert np.allclose(u(np.array([1.3, 1.35, 1.4])), 0.0)
    s = np.linspace(1.0, 1.1, 5)
    taylor = sum(h(np.array(1.0), j)[None] * (s - 1.0)[:, None] ** j / math.factorial(j) for j in range(4))
    assert np.allclose(u(s), taylor, atol=1e-14)


@pytest.mark.parametrize("k", [1, 2])
def test_built_loops_match_connectors(k):
    for name in ("flat_t3_eyeglass.json", "flat_t3_figure8.json"):
        doc = scenario_doc(name, k=k)
        _, _, plan, _ = build_case(doc, doc["t"])
        for loop in plan.loops():
            for side in loop.connector_matching(k + 2).values():
                assert side.max() < 1e-5


# eyeglass -------------------------------------------------------------------

def test_eyeglass_net_is_stationary_embedded_essential(eyeglass_build):
    doc, (stack, net, plan, rep) = eyeglass_build
    assert rep["stationary"] and rep["embedded"] and rep["essential"]
    assert rep["max_defect"] < 1e-8
    assert plan.m * plan.lam == plan.n
    edges = net.graph.edges
    assert edges["alpha"].multiplicity == plan.m == edges["beta"].multiplicity
    assert edges["bridge"].multiplicity == plan.n
    for kill in rep["kill_identity"]:
        assert max(kill["formula_sup"], kill["direct_sup"]) < 1e-6 and kill["agreement"] < 1e-5
    assert max(rep["branch_balance"].values()) < 1e-8
    assert rep["support_distance"] > 0


def test_eyeglass_verifies_independently(eyeglass_build):
    _, (stack, net, _, _) = eyeglass_build
    assert is_stationary(stack, net, 1e-6).stationary
    assert is_embedded(net, 1e-4, stack)
    assert is_essential(net, stack, 1e-6)


def test_base_loops_alone_are_not_essential(torus):
    from test_net_solver import loop_net

    assert not is_essential(loop_net(lattice_loop([0, 0, 0], [1, 0, 0])), torus)


def test_eyeglass_rejects_intersecting_loops(torus):
    a = lattice_loop([0, 0, 0], [1, 0, 0])
    b = lattice_loop([0.3, 0, 0], [0, 0, 1])
    with pytest.raises(IntersectionError):
        build_eyeglass(torus, a, b, 2**-8)


# figure-eight ---------------------------------------------------------------

def test_figure_eight_report(figure8_build):
    _, (stack, net, plan, rep) = figure8_build
    assert plan.chart_balance() == 0.0
    assert rep["stationary"] and rep["embedded"] and rep["essential"]
    assert rep["max_defect"] < 1e-8
    assert rep["support_distance"] > rep["separation"] / 2


def test_figure_eight_rejects_tangential_crossing(torus):
    a = lattice_loop([0, 0, 0], [1, 0, 0])
    with pytest.raises(DegeneracyError):
        build_figure_eight(torus, a, a, 0.1)


def test_figure_eight_needs_a_crossing(torus):
    a = lattice_loop([0, 0, 0], [1, 0, 0])
    b = lattice_loop([0, 0.5, 0], [1, 0, 0])
    with pytest.raises(PreconditionError):
        build_figure_eight(torus, a, b, 0.1)


# rescaled charts ------------------------------------------------------------

def test_rescaled_chart_on_flat_torus_is_euclidean(torus):
    ch = rescaled_chart(torus, np.array([0.1, 0.2, 0.3]), 0.3)
    x = np.random.default_rng(0).uniform(-1, 1, (10, 3))
    assert np.allclose(ch.eval(x), np.eye(3), atol=1e-13)
    assert np.allclose(ch.phi(np.zeros(3)), [0.1, 0.2, 0.3])


def test_rescaled_chart_on_ellipsoid_is_normal():
    E = ellipsoid([1.0, 1.1, 1.2])
    ch = rescaled_chart(E, np.array([0.1, -0.05]), 0.4)
    assert np.allclose(ch.eval(np.zeros(2)), np.eye(2), atol=1e-9)
    # radial lines are unit-speed geodesics of the chart metric
    u = unit([0.6, 0.8])
    for s in (0.3, 0.9):
        assert ch.norm(s * u, u) == pytest.approx(1.0, abs=1e-7)
    assert np.abs(ch.christoffel(np.zeros(2))).max() < 1e-5


def test_rescaled_chart_radius_must_be_below_injectivity(torus):
    with pytest.raises(PreconditionError):
        rescaled_chart(torus, np.zeros(3), torus.injectivity_radius_bound)


# trends ---------------------------------------------------------------------

def test_sweep_tilts():
    assert sweep_tilts(3, 5) == [0.125, 0.0625, 0.03125]


def test_trend_check_rules():
    assert trend_check([8, 4, 2, 0.5])["ok"]
    assert not trend_check([8, 8.8, 4, 0.5])["monotone"]
    assert trend_check([8, 8.3, 4, 0.5], slack=0.05)["monotone"]
    assert not trend_check([8, 6, 5])["decays"]
