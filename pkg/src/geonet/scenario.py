"""Scenario files: schema, seed curves and the run pipeline."""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .construction import build_eyeglass
from .construction.figure_eight import build_figure_eight
from .construction.trends import construction_norms, sweep_report, sweep_tilts
from .curves import DiscretizedCurve
from .errors import ConstructionError, GeonetError
from .io import SCHEMA_VERSION, export_csv, export_obj, net_document, write_json
from .manifolds import metric_from_spec
from .solver import find_closed_geodesic

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 2}

SEED_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["lattice_line", "samples"]},
        "point": _VEC,
        "lattice": {"type": "array", "items": {"type": "integer"}, "minItems": 2},
        "n": {"type": "integer", "minimum": 16},
        "points": {"type": "array", "items": _VEC, "minItems": 8},
        "shift": _VEC,
        "chart": {"type": "integer", "minimum": 0},
    },
    "allOf": [
        {"if": {"properties": {"type": {"const": "lattice_line"}}},
         "then": {"required": ["point", "lattice"]}},
        {"if": {"properties": {"type": {"const": "samples"}}},
         "then": {"required": ["points"]}},
    ],
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["manifold", "case", "inputs", "t", "k"],
    "properties": {
        "schema_version": {"type": "string"},
        "name": {"type": "string"},
        "manifold": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["flat_torus", "hypersurface", "circle_times_sphere"]},
                "params": {"type": "object"},
                "injectivity_radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "case": {"enum": ["eyeglass", "figure_eight"]},
        "inputs": {
            "type": "object",
            "required": ["alpha", "beta"],
            "properties": {"alpha": SEED_SCHEMA, "beta": SEED_SCHEMA},
        },
        "t": {
            "oneOf": [
                {"type": "number", "exclusiveMinimum": 0},
                {
                    "type": "object",
                    "required": ["sweep"],
                    "properties": {
                        "sweep": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}
                    },
                },
            ]
        },
        "k": {"type": "integer", "minimum": 0},
        "m_max": {"type": "integer", "minimum": 1},
        "r": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "tolerances": {
            "type": "object",
            "properties": {
                "stationarity": _NUM,
                "defect": _NUM,
                "kill": _NUM,
                "agreement": _NUM,
                "trend_slack": _NUM,
                "trend_final_ratio": _NUM,
            },
        },
        "out_dir": {"type": "string"},
    },
}

DEFAULT_TOLERANCES = {
    "stationarity": 1e-6,
    "defect": 1e-8,
    "kill": 1e-6,
    "agreement": 1e-5,
    "trend_slack": 0.05,
    "trend_final_ratio": 0.1,
}


class ScenarioError(ValueError):
    """Scenario file that cannot be parsed or does not validate."""


def validate_scenario(doc):
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"scenario invalid at {path}: {exc.message}") from None
    return doc


def load_scenario(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    return validate_scenario(doc)


def shipped_scenarios():
    """Names of the scenario files bundled with the package."""
    root = resources.files("geonet") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def shipped_scenario_path(name):
    return Path(str(resources.files("geonet") / "scenarios" / name))


def metric_for(doc):
    m = doc["manifold"]
    spec = dict(m.get("params", {}))
    spec["type"] = m["type"]
    if "injectivity_radius" in m:
        spec["injectivity_radius"] = m["injectivity_radius"]
    return metric_from_spec(spec)


def seed_curve(metric, seed):
    """Closed geodesic from a seed spec (exact for lattice lines, searched otherwise)."""
    if seed["type"] == "lattice_line":
        per = np.asarray(metric.periods, float)
        shift = per * np.asarray(seed["lattice"], float)
        L = float(np.linalg.norm(shift))
        if not L > 0:
            raise ScenarioError("lattice seed needs a nonzero lattice vector")
        u = shift / L
        n = int(seed.get("n", 257))
        s = np.linspace(0.0, L, n)
        p = np.asarray(seed["point"], float)
        x = p + s[:, None] * u
        return DiscretizedCurve(s, x, np.tile(u, (n, 1)), np.zeros_like(x), np.zeros(n, int), True, shift)
    pts = np.asarray(seed["points"], float)
    shift = np.asarray(seed.get("shift", np.zeros(pts.shape[1])), float)
    closed_pts = np.vstack([pts, pts[:1] + shift])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed_pts, axis=0), axis=1))])
    # periodic finite-difference jets for the seed polygon
    v = np.gradient(closed_pts, s, axis=0)
    v[0] = v[-1] = (closed_pts[1] - closed_pts[-2] + shift) / (s[1] + s[-1] - s[-2])
    a = np.gradient(v, s, axis=0)
    chart = int(seed.get("chart", 0))
    loop = DiscretizedCurve(s, closed_pts, v, a, np.full(len(s), chart), True, shift)
    return find_closed_geodesic(metric, loop)


def _options(doc):
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(doc.get("tolerances", {}))
    seed = int(os.environ.get("GEONET_SEED", doc.get("seed", 0)))
    return tol, seed


def build_case(doc, t, seed=0, tol=None):
    """Run one construction; returns ``(stack, net, plan, report)``."""
    tol = tol or DEFAULT_TOLERANCES
    metric = metric_for(doc)
    alpha = seed_curve(metric, doc["inputs"]["alpha"])
    beta = seed_curve(metric, doc["inputs"]["beta"])
    k = int(doc["k"])
    if doc["case"] == "eyeglass":
        return build_eyeglass(
            metric, alpha, beta, t, k=k, m_max=int(doc.get("m_max", 64)),
            stationarity_tol=tol["stationarity"], seed=seed,
        )
    return build_figure_eight(
        metric, alpha, beta, t, k=k, r=doc.get("r"), stationarity_tol=tol["stationarity"], seed=seed
    )


def _flags(report, tol):
    kill = report.get("kill_identity", [])
    flags = {
        "stationary": report["stationary"],
        "embedded": report["embedded"],
        "essential": report["essential"],
        "vertex_defect": report["max_defect"] < tol["defect"],
        "kill_identity": all(
            max(kv["formula_sup"], kv["direct_sup"]) < tol["kill"] and kv["agreement"] < tol["agreement"]
            for kv in kill
        ),
    }
    if "supports_separated" in report:
        flags["supports_separated"] = report["supports_separated"]
    return flags


def _single(doc, t, seed, tol, out_dir=None, name="scenario"):
    t0 = time.time()
    try:
        stack, net, plan, report = build_case(doc, t, seed, tol)
        failed = False
    except ConstructionError as exc:
        if exc.report is None:
            raise
        report, net, stack, plan, failed = exc.report, exc.net, exc.stack, exc.plan, True
    report = dict(report)
    report["flags"] = _flags(report, tol)
    report["passed"] = (not failed) and all(report["flags"].values())
    report["runtime_s"] = time.time() - t0
    outputs = {}
    if out_dir is not None and net is not None:
        out_dir = Path(out_dir)
        outputs["net"] = str(write_json(out_dir / f"{name}_net.json", net_document(net, stack.base)))
        outputs["metric"] = str(write_json(out_dir / f"{name}_metric.json", {
            "schema_version": SCHEMA_VERSION, "kind": "metric", "metric": stack.to_spec()}))
        (out_dir / f"{name}.obj").write_text(export_obj(net))
        (out_dir / f"{name}.csv").write_text(export_csv(net))
        outputs["obj"] = str(out_dir / f"{name}.obj")
        outputs["csv"] = str(out_dir / f"{name}.csv")
    report["outputs"] = outputs
    return report, (stack, net, plan)


def _sweep_worker(args):
    doc, t, seed, tol = args
    try:
        stack, net, plan, report = build_case(doc, t, seed, tol)
    except ConstructionError as exc:
        if exc.report is None or exc.plan is None:
            raise
        stack, plan, report, failed = exc.stack, exc.plan, exc.report, True
    else:
        failed = False
    norms = construction_norms(stack, plan.loops(), int(doc["k"]))
    report = dict(report)
    report["flags"] = _flags(report, tol)
    report["flags"]["verified"] = not failed
    return {"t": float(plan.t), "norms": norms, "report": report}


def run_scenario(doc, out_dir=None, jobs=1, name=None):
    """Execute a validated scenario; returns the report dictionary."""
    tol, seed = _options(doc)
    name = name or doc.get("name", "scenario")
    out_dir = out_dir or doc.get("out_dir")
    t_spec = doc["t"]
    head = {
        "schema_version": SCHEMA_VERSION,
        "scenario": name,
        "case": doc["case"],
        "seed": seed,
        "tolerances": tol,
        "manifold": doc["manifold"],
    }
    if isinstance(t_spec, dict):
        ts = sweep_tilts(*t_spec["sweep"])
        tasks = [(doc, t, seed, tol) for t in ts]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(_sweep_worker, tasks))
        else:
            rows = [_sweep_worker(a) for a in tasks]
        trends = sweep_report([r["norms"] for r in rows], tol["trend_slack"], tol["trend_final_ratio"])
        per_t = [dict(t_target=t, **r) for t, r in zip(ts, rows)]
        report = dict(head, mode="sweep", runs=per_t, trends=trends)
        report["passed"] = bool(trends["ok"] and all(all(r["report"]["flags"].values()) for r in rows))
    else:
        single, _ = _single(doc, float(t_spec), seed, tol, out_dir, name)
        report = dict(head, mode="single", **single)
    if out_dir is not None:
        report["report_path"] = str(Path(out_dir) / f"{name}_report.json")
        write_json(report["report_path"], report)
    return report


def stage_of(exc: GeonetError):
    return exc.stage or type(exc).__name__
