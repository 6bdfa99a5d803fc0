"""Command-line entry point: ``geonet run | verify | export``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import GeonetError
from .io import EXPORT_FORMATS, SCHEMA_VERSION, dumps, export_net, load_metric, load_net, write_json
from .net import is_embedded, is_essential, is_stationary

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STAGE = 3
EXIT_VERIFY = 4


def _parser():
    p = argparse.ArgumentParser(prog="geonet", description="Stationary geodesic net constructions.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a scenario file")
    r.add_argument("--scenario", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    r.add_argument("--jobs", type=int, default=1)
    v = sub.add_parser("verify", help="check a stored net against a stored metric")
    v.add_argument("--net", required=True)
    v.add_argument("--metric", required=True)
    v.add_argument("--tol", type=float, default=1e-6)
    v.add_argument("--out", default=None, help="write the report here as well")
    e = sub.add_parser("export", help="convert a stored net")
    e.add_argument("--net", required=True)
    e.add_argument("--format", required=True)
    e.add_argument("--out", default=None)
    return p


def _fail(code, msg):
    print(f"geonet: {msg}", file=sys.stderr)
    return code


def cmd_run(args):
    from .scenario import ScenarioError, load_scenario, run_scenario, stage_of

    try:
        doc = load_scenario(args.scenario)
    except ScenarioError as exc:
        return _fail(EXIT_INPUT, str(exc))
    name = doc.get("name", Path(args.scenario).stem)
    out = args.out or doc.get("out_dir") or "geonet_out"
    try:
        report = run_scenario(doc, out, max(1, args.jobs), name)
    except GeonetError as exc:
        return _fail(EXIT_STAGE, f"[stage {stage_of(exc)}] {exc}")
    sys.stdout.write(dumps({k: report[k] for k in ("schema_version", "scenario", "mode", "passed", "report_path")
                            if k in report}))
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_verify(args):
    from .io import read_json

    try:
        net = load_net(read_json(args.net))
        metric = load_metric(read_json(args.metric))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_INPUT, f"cannot load inputs: {exc}")
    try:
        rep = is_stationary(metric, net, args.tol)
        embedded = is_embedded(net, 1e-4, metric)
        essential = is_essential(net, metric, args.tol) if rep.stationary else False
    except GeonetError as exc:
        return _fail(EXIT_STAGE, f"[stage {exc.stage or 'verify'}] {exc}")
    report = {"schema_version": SCHEMA_VERSION, "kind": "verification", **rep.to_dict(),
              "embedded": bool(embedded), "essential": bool(essential)}
    report["passed"] = bool(rep.stationary and embedded and essential)
    if args.out:
        write_json(args.out, report)
    sys.stdout.write(dumps(report))
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_export(args):
    from .io import read_json

    if args.format not in EXPORT_FORMATS:
        return _fail(EXIT_INPUT, f"unknown format {args.format!r}; choose from {', '.join(EXPORT_FORMATS)}")
    try:
        doc = read_json(args.net)
        net = load_net(doc)
        metric = load_metric(doc["metric"]) if "metric" in doc else None
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_INPUT, f"cannot load net: {exc}")
    text = export_net(net, args.format, metric)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    return {"run": cmd_run, "verify": cmd_verify, "export": cmd_export}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
