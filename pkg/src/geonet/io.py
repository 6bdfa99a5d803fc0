"""Reports and geometry files: JSON with 17 significant digits, OBJ polylines, CSV samples."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .curves import DiscretizedCurve
from .manifolds import metric_from_spec
from .net import GammaNet

SCHEMA_VERSION = "1.0"
EXPORT_FORMATS = ("json", "obj-polyline", "csv")


def _float(x):
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj):
    """Convert numpy containers and scalars to built-in types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if hasattr(obj, "numerator") and hasattr(obj, "denominator") and not isinstance(obj, (int, float)):
        return f"{obj.numerator}/{obj.denominator}"
    return obj


def dumps(obj, indent=1):
    """JSON text with every float written to 17 significant digits."""

    def emit(o, level):
        pad = "\n" + " " * (indent * (level + 1)) if indent else ""
        end = "\n" + " " * (indent * level) if indent else ""
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            return _float(o)
        if isinstance(o, (int, str)):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [pad + json.dumps(str(k)) + ": " + emit(v, level + 1) for k, v in o.items()]
            return "{" + ",".join(items) + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in o):
                return "[" + ", ".join(emit(v, level) for v in o) + "]"
            return "[" + ",".join(pad + emit(v, level + 1) for v in o) + end + "]"
        raise TypeError(f"cannot serialise {type(o).__name__}")

    return emit(_plain(obj), 0) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def net_document(net, metric=None, meta=None):
    doc = {"schema_version": SCHEMA_VERSION, "kind": "gamma_net", "net": net.to_dict()}
    if metric is not None:
        doc["metric"] = metric.to_spec()
    if meta:
        doc["meta"] = meta
    return doc


def load_net(source):
    """Net from a path or parsed document (bare ``GammaNet.to_dict`` output is accepted)."""
    d = read_json(source) if isinstance(source, (str, Path)) else source
    return GammaNet.from_dict(d.get("net", d))


def load_metric(source):
    d = read_json(source) if isinstance(source, (str, Path)) else source
    return metric_from_spec(d.get("metric", d))


def export_obj(net):
    """Wavefront OBJ polylines; one ``l`` record per sample segment."""
    out = io.StringIO()
    out.write("# geonet polyline export\n")
    base = 1
    for eid, e in net.edges():
        c = net.edge_curves[eid]
        pts = np.asarray(c.points, float)
        n = pts.shape[1]
        out.write(f"# edge {eid} tail {e.tail} head {e.head} multiplicity {e.multiplicity}\n")
        if n > 3:
            out.write(f"# coordinates beyond the third of {n} are omitted\n")
        out.write(f"o {eid}\n")
        for p in pts:
            q = list(p[:3]) + [0.0] * (3 - min(n, 3))
            out.write("v " + " ".join(_float(float(x)) for x in q) + "\n")
        for i in range(len(pts) - 1):
            out.write(f"l {base + i} {base + i + 1}\n")
        base += len(pts)
    return out.getvalue()


def export_csv(net):
    """Rows ``edge_id, s, x1..xn`` for every edge sample."""
    dim = next(iter(net.edge_curves.values())).dim
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["edge_id", "s"] + [f"x{i + 1}" for i in range(dim)])
    for eid, _ in net.edges():
        c = net.edge_curves[eid]
        for s, p in zip(c.params, c.points):
            w.writerow([eid, _float(float(s))] + [_float(float(x)) for x in p])
    return out.getvalue()


def export_net(net, fmt, metric=None):
    if fmt == "json":
        return dumps(net_document(net, metric))
    if fmt == "obj-polyline":
        return export_obj(net)
    if fmt == "csv":
        return export_csv(net)
    raise ValueError(f"unknown export format {fmt!r}")


def curve_document(curve: DiscretizedCurve):
    return {"schema_version": SCHEMA_VERSION, "kind": "curve", "curve": curve.to_dict()}
