import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import scenario_doc
from geonet import cli
from geonet.io import SCHEMA_VERSION, dumps, export_csv, export_obj, load_net, net_document, read_json
from geonet.scenario import (
    SCENARIO_SCHEMA,
    ScenarioError,
    _options,
    load_scenario,
    shipped_scenario_path,
    shipped_scenarios,
    validate_scenario,
)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = cli.main(["run", "--scenario", str(shipped_scenario_path("flat_t3_eyeglass.json")), "--out", str(out)])
    assert code == 0
    return out


def test_dumps_keeps_seventeen_digits():
    x = 0.1 + 0.2
    text = dumps({"x": x, "v": np.array([1 / 3]), "n": np.int64(4), "ok": np.bool_(True)})
    d = json.loads(text)
    assert d["x"] == x and d["v"][0] == 1 / 3 and d["n"] == 4 and d["ok"] is True
    assert "0.30000000000000004" in text


def test_non_finite_values_are_written():
    assert json.loads(dumps({"a": float("inf")}))["a"] == float("inf")


def test_shipped_scenarios_validate():
    names = shipped_scenarios()
    assert {"flat_t3_eyeglass.json", "flat_t3_figure8.json"} <= set(names)
    for n in names:
        doc = load_scenario(shipped_scenario_path(n))
        assert doc["manifold"]["type"] in SCENARIO_SCHEMA["properties"]["manifold"]["properties"]["type"]["enum"]


def test_missing_manifold_is_a_schema_error():
    doc = scenario_doc("flat_t3_eyeglass.json")
    del doc["manifold"]
    with pytest.raises(ScenarioError, match="manifold"):
        validate_scenario(doc)


def test_seed_override_from_environment(monkeypatch):
    monkeypatch.setenv("GEONET_SEED", "17")
    assert _options(scenario_doc("flat_t3_eyeglass.json"))[1] == 17


def test_run_writes_reports(run_dir):
    rep = read_json(run_dir / "flat_t3_eyeglass_report.json")
    assert rep["schema_version"] == SCHEMA_VERSION
    assert rep["passed"] and all(rep["flags"].values())
    for suffix in ("_net.json", "_metric.json", ".obj", ".csv"):
        assert (run_dir / f"flat_t3_eyeglass{suffix}").exists()


def test_json_export_round_trip(run_dir, tmp_path, capsys):
    src = run_dir / "flat_t3_eyeglass_net.json"
    out = tmp_path / "again.json"
    assert cli.main(["export", "--net", str(src), "--format", "json", "--out", str(out)]) == 0
    a, b = load_net(src), load_net(out)
    for eid in a.edge_curves:
        for field in ("params", "points", "velocities", "accelerations"):
            assert np.abs(getattr(a.edge_curves[eid], field) - getattr(b.edge_curves[eid], field)).max() <= 1e-12
    again = load_net(json.loads(dumps(net_document(a))))
    assert np.array_equal(again.edge_curves["alpha"].points, a.edge_curves["alpha"].points)


def test_obj_export_layout(run_dir):
    net = load_net(run_dir / "flat_t3_eyeglass_net.json")
    text = export_obj(net)
    lines = text.splitlines()
    expected = sum(c.n_samples - 1 for c in net.edge_curves.values())
    assert sum(ln.startswith("l ") for ln in lines) == expected
    assert sum(ln.startswith("v ") for ln in lines) == sum(c.n_samples for c in net.edge_curves.values())
    for eid, e in net.edges():
        assert f"# edge {eid} tail {e.tail} head {e.head} multiplicity {e.multiplicity}" in lines


def test_csv_export_layout(run_dir):
    net = load_net(run_dir / "flat_t3_eyeglass_net.json")
    rows = export_csv(net).splitlines()
    assert rows[0] == "edge_id,s,x1,x2,x3"
    assert len(rows) == 1 + sum(c.n_samples for c in net.edge_curves.values())


def test_unknown_export_format_exits_2(run_dir, capsys):
    code = cli.main(["export", "--net", str(run_dir / "flat_t3_eyeglass_net.json"), "--format", "stl"])
    assert code == 2
    assert "unknown format" in capsys.readouterr().err


def test_verify_round_trip(run_dir, capsys):
    code = cli.main(["verify", "--net", str(run_dir / "flat_t3_eyeglass_net.json"),
                     "--metric", str(run_dir / "flat_t3_eyeglass_metric.json")])
    rep = json.loads(capsys.readouterr().out)
    assert code == 0 and rep["stationary"] and rep["essential"] and rep["embedded"]


def test_verify_against_base_metric_fails_with_4(run_dir, tmp_path, capsys):
    base = {"schema_version": SCHEMA_VERSION, "kind": "metric", "metric": {"type": "flat_torus", "dim": 3, "period": 1.0}}
    p = tmp_path / "flat.json"
    p.write_text(json.dumps(base))
    out = tmp_path / "rep.json"
    code = cli.main(["verify", "--net", str(run_dir / "flat_t3_eyeglass_net.json"), "--metric", str(p),
                     "--out", str(out)])
    assert code == 4
    assert not read_json(out)["stationary"]


def _write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_malformed_scenario_exits_2(tmp_path, capsys):
    doc = scenario_doc("flat_t3_eyeglass.json")
    del doc["manifold"]
    assert cli.main(["run", "--scenario", _write(tmp_path, doc), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "junk.json"
    bad.write_text("{")
    assert cli.main(["run", "--scenario", str(bad)]) == 2


def test_stage_error_exits_3(tmp_path, capsys):
    doc = scenario_doc("flat_t3_eyeglass.json")
    doc["inputs"]["beta"]["point"] = [0.3, 0.0, 0.0]
    assert cli.main(["run", "--scenario", _write(tmp_path, doc), "--out", str(tmp_path)]) == 3
    assert "[stage junction]" in capsys.readouterr().err


def test_verification_failure_exits_4_and_writes_report(tmp_path, capsys):
    doc = scenario_doc("flat_t3_eyeglass.json")
    doc["tolerances"] = {"defect": 1e-30}
    assert cli.main(["run", "--scenario", _write(tmp_path, doc), "--out", str(tmp_path)]) == 4
    rep = read_json(tmp_path / "flat_t3_eyeglass_report.json")
    assert not rep["passed"] and not rep["flags"]["vertex_defect"]


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "geonet.cli", "export", "--net", "missing.json", "--format", "csv"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2
