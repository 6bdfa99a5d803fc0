"""One check per acceptance criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from conftest import lattice_loop, record, scenario_doc, unit
from geonet.construction import build_eyeglass, choose_rational_tilt
from geonet.construction.figure_eight import build_figure_eight
from geonet.errors import AmbiguityError, DegeneracyError, IntersectionError
from geonet.geodesics import exp_map, geodesic_bvp, integrate_geodesic, parallel_transport
from geonet.net import is_embedded, is_essential
from geonet.scenario import build_case, metric_for, run_scenario, seed_curve
from geonet.solver import continue_net
from test_net_solver import loop_net

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def singles():
    out = {}
    for name in ("flat_t3_eyeglass.json", "flat_t3_figure8.json"):
        doc = scenario_doc(name)
        t0 = time.time()
        built = build_case(doc, doc["t"])
        out[doc["case"]] = (doc, built, time.time() - t0)
    return out


@pytest.fixture(scope="module")
def sweeps():
    return {name: run_scenario(scenario_doc(f"flat_t3_{name}_sweep.json"))
            for name in ("eyeglass", "figure8")}


def test_c1_kill_identity(singles):
    worst_res, worst_gap, worst_time = 0.0, 0.0, 0.0
    for doc, (_, _, _, rep), elapsed in singles.values():
        for kill in rep["kill_identity"]:
            worst_res = max(worst_res, kill["formula_sup"], kill["direct_sup"])
            worst_gap = max(worst_gap, kill["agreement"])
        worst_time = max(worst_time, elapsed)
    ok = worst_res < 1e-6 and worst_gap < 1e-5 and worst_time < 60
    assert record(1, ok, f"residual {worst_res:.2e}, route gap {worst_gap:.2e}, runtime {worst_time:.1f}s")


def test_c2_branch_balance_over_tilts(sweeps):
    runs = sweeps["eyeglass"]["runs"]
    tilts = [r["t_target"] for r in runs]
    bal = max(max(r["report"]["branch_balance"].values()) for r in runs)
    defect = max(r["report"]["max_defect"] for r in runs)
    ok = bal < 1e-8 and defect < 1e-8 and tilts == [2.0**-j for j in range(3, 9)]
    assert record(2, ok, f"inward-sum error {bal:.2e}, vertex defect {defect:.2e} over t=2^-3..2^-8")


def test_c3_rational_multiplicities(sweeps, singles):
    t, lam, m, n = choose_rational_tilt(4.0, 3.0)
    known = (lam.numerator, lam.denominator, m, n) == (6, 5, 5, 6) and abs(t - 3.0) < 1e-12
    plans = [r["report"]["plan"] for r in sweeps["eyeglass"]["runs"]]
    plans.append(singles["eyeglass"][1][3]["plan"])
    exact = all(p["m"] * int(p["lambda"].split("/")[0]) == p["n"] * int(p["lambda"].split("/")[1]) for p in plans)
    assert record(3, known and exact, f"r=4,t=3 -> lambda {lam}, (m,n)=({m},{n}); m*lambda=n on {len(plans)} builds")


def test_c4_figure_eight(singles, sweeps):
    _, (_, _, plan, rep), _ = singles["figure_eight"]
    balance = plan.chart_balance()
    rows = [rep] + [r["report"] for r in sweeps["figure8"]["runs"]]
    defect = max(r["max_defect"] for r in rows)
    margin = min(r["support_distance"] / (r["separation"] / 2) for r in rows)
    ok = balance == 0.0 and defect < 1e-8 and margin > 1
    assert record(4, ok, f"chart sum {balance:.1e}, defect {defect:.2e}, support/(d/2) >= {margin:.2f}")


def test_c5_trends(sweeps):
    parts, ok = [], True
    for name, rep in sweeps.items():
        tr = rep["trends"]
        for key in ("u_Ck+2", "k_Ck", "f_Ck", "g_Ck"):
            ok &= tr[key]["ok"]
            parts.append(f"{name}:{key} last/first {tr[key]['final_ratio']:.3f}")
    assert record(5, ok, "; ".join(parts))


def test_c6_connector_matching():
    worst = {}
    for k in (1, 2):
        for name in ("flat_t3_eyeglass.json", "flat_t3_figure8.json"):
            doc = scenario_doc(name, k=k)
            _, _, plan, _ = build_case(doc, doc["t"])
            for loop in plan.loops():
                for side in loop.connector_matching(k + 2).values():
                    worst[k] = max(worst.get(k, 0.0), float(side.max()))
    ok = all(v < 1e-5 for v in worst.values())
    assert record(6, ok, f"relative jet mismatch k=1 {worst[1]:.2e}, k=2 {worst[2]:.2e}")


def test_c7_essential_and_embedded(singles, torus):
    closed = [lattice_loop([0, 0, 0], [1, 0, 0]), lattice_loop([0.3, 0.3, 0], [0, 0, 1])]
    plain = not any(is_essential(loop_net(c, m), torus) for c in closed for m in (1, 2))
    built = all(is_essential(net, stack) and is_embedded(net, 1e-4, stack)
                for _, (stack, net, _, _), _ in singles.values())
    assert record(7, plain and built, f"closed geodesics essential: {not plain}; constructions essential+embedded: {built}")


def test_c8_oracles(sphere):
    X, Y = unit([1, 0.2, 0.1]), unit([0.3, 1, 0.4])
    rho = geodesic_bvp(sphere, sphere.from_embedding(X), sphere.from_embedding(Y))
    th = np.arccos(X @ Y)
    Z = np.cross(unit(np.cross(X, Y)), X)
    s = rho.params
    exact = np.cos(th * s)[:, None] * X + np.sin(th * s)[:, None] * Z
    bvp = float(np.abs(sphere.embed(rho.points, rho.chart_ids) - exact).max())

    p, v = np.zeros(2), np.array([1.0, 0.0])
    c = integrate_geodesic(sphere, p, v, 2 * np.pi / sphere.norm(p, v))
    drift = float(np.abs(parallel_transport(sphere, c, np.array([0.0, 1.0])) - [0.0, 1.0]).max())

    w = np.array([0.7, -0.3])
    q, cq = exp_map(sphere, np.array([0.1, 0.2]), w, return_chart=True)
    trip = float(np.abs(geodesic_bvp(sphere, np.array([0.1, 0.2]), q, chart_q=cq).meta["initial_velocity"] - w).max())

    def end(steps):
        cc = integrate_geodesic(sphere, p, np.array([0.6, 0.3]), 2.0, steps=steps)
        return sphere.embed(cc.points[-1], cc.chart_ids[-1])

    ref = end(8192)
    errs = np.array([np.linalg.norm(end(n) - ref) for n in (32, 64, 128)])
    rates = np.log2(errs[:-1] / errs[1:])
    ok = bvp < 1e-7 and drift < 1e-10 and trip < 1e-7 and np.all(np.abs(rates - 4) <= 1)
    assert record(8, ok, f"BVP {bvp:.1e}, transport drift {drift:.1e}, exp/BVP {trip:.1e}, "
                         f"RK4 rates {np.round(rates, 2).tolist()}")


def test_c9_continuation(singles):
    doc, (stack, net, plan, _), _ = singles["eyeglass"]
    metric = metric_for(doc)
    alpha = seed_curve(metric, doc["inputs"]["alpha"])
    beta = seed_curve(metric, doc["inputs"]["beta"])
    ratios, same = [], True
    for d in (1e-3, 1e-4, 1e-5):
        new_stack, _, _, _ = build_eyeglass(metric, alpha, beta, plan.t + d, k=doc["k"],
                                            multiplicities=(plan.m, plan.n), strict=False)
        out = continue_net(new_stack, net, tol=1e-10)
        same &= out.graph.same_type(net.graph)
        ratios.append(out.meta["vertex_displacement"] / d)
    spread = max(ratios) / min(ratios)
    ok = same and spread < 2.0
    assert record(9, ok, f"same type {same}; displacement/dt {np.round(ratios, 3).tolist()} (spread {spread:.2f})")


def test_c10_failure_modes(torus, sphere):
    raised = []
    a = lattice_loop([0, 0, 0], [1, 0, 0])
    for fun, exc in (
        (lambda: build_eyeglass(torus, a, lattice_loop([0.3, 0, 0], [0, 0, 1]), 2**-8), IntersectionError),
        (lambda: build_figure_eight(torus, a, a, 0.1), DegeneracyError),
        (lambda: geodesic_bvp(sphere, sphere.from_embedding(np.array([1.0, 0, 0])),
                              sphere.from_embedding(np.array([-1.0, 0, 0]))), AmbiguityError),
    ):
        try:
            fun()
            raised.append(None)
        except exc:
            raised.append(exc.__name__)
    assert record(10, None not in raised, f"raised {raised}")
