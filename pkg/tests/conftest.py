import json

import numpy as np
import pytest

from geonet.curves import curve_from_function
from geonet.manifolds import FlatTorus, round_sphere
from geonet.scenario import build_case, shipped_scenario_path


def line_curve(p, d, span=1.0, n=65, closed=False, shift=None):
    """Straight segment ``p + s d`` for ``s`` in ``[0, span]``."""
    p = np.asarray(p, float)
    d = np.asarray(d, float)

    def fun(s):
        return p + s[:, None] * d, np.tile(d, (len(s), 1)), np.zeros((len(s), len(p)))

    return curve_from_function(fun, np.linspace(0.0, span, n), closed=closed, shift=shift)


def lattice_loop(point, direction, period=1.0, n=257):
    d = np.asarray(direction, float)
    return line_curve(point, d / np.linalg.norm(d), period * np.linalg.norm(d), n, closed=True,
                      shift=period * d)


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def scenario_doc(name, **changes):
    doc = json.loads(shipped_scenario_path(name).read_text())
    doc.update(changes)
    return doc


@pytest.fixture(scope="session")
def torus():
    return FlatTorus(3, 1.0)


@pytest.fixture(scope="session")
def sphere():
    return round_sphere(2)


@pytest.fixture(scope="session")
def eyeglass_build():
    doc = scenario_doc("flat_t3_eyeglass.json")
    return doc, build_case(doc, doc["t"])


@pytest.fixture(scope="session")
def figure8_build():
    doc = scenario_doc("flat_t3_figure8.json")
    return doc, build_case(doc, doc["t"])


ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Store and print one acceptance line; returns ``ok`` for asserting."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
