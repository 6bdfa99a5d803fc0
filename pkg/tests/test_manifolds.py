import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geonet.errors import DomainError
from geonet.manifolds import (
    ChartMetric,
    CircleTimesSphere,
    FlatTorus,
    christoffel,
    ellipsoid,
    metric_from_spec,
    round_sphere,
)

BACKENDS = [
    FlatTorus(3, 1.0),
    FlatTorus(2, 2.0, bumps=[(0.1, [1, 0], 0.0)]),
    round_sphere(2),
    round_sphere(3),
    ellipsoid([1.0, 1.1, 1.2]),
    CircleTimesSphere(1.0, 0.8),
]

coord = st.floats(-0.7, 0.7)


@pytest.mark.parametrize("metric", BACKENDS, ids=lambda m: type(m).__name__)
def test_metric_is_symmetric_positive(metric):
    x = np.random.default_rng(0).uniform(-0.6, 0.6, (16, metric.dim))
    g = metric.eval(x)
    assert np.allclose(g, np.swapaxes(g, -1, -2))
    assert np.all(np.linalg.eigvalsh(g) > 0)


@pytest.mark.parametrize("metric", BACKENDS, ids=lambda m: type(m).__name__)
def test_christoffel_matches_finite_differences(metric):
    x = np.random.default_rng(1).uniform(-0.5, 0.5, (4, metric.dim))
    ref = ChartMetric(lambda y: metric.eval(y), metric.dim, 1.0)
    assert np.abs(metric.christoffel(x) - christoffel(ref, x)).max() < 1e-6


@pytest.mark.parametrize("metric", BACKENDS, ids=lambda m: type(m).__name__)
def test_acceleration_is_christoffel_contraction(metric):
    rng = np.random.default_rng(2)
    x = rng.uniform(-0.5, 0.5, (5, metric.dim))
    v = rng.normal(size=(5, metric.dim))
    gam = metric.christoffel(x)
    assert np.allclose(metric.acceleration(x, v), -np.einsum("...kij,...i,...j->...k", gam, v, v), atol=1e-10)


@given(coord, coord)
@settings(max_examples=30, deadline=None)
def test_stereographic_transition_is_an_isometry(x, y):
    S = round_sphere(2)
    p = np.array([x, y]) + 0.05
    v = np.array([0.3, -0.7])
    q, w = S.transition(p, v, 0, 1)
    assert np.allclose(S.embed(q, 1), S.embed(p, 0), atol=1e-12)
    assert abs(S.norm(q, w, 1) - S.norm(p, v, 0)) < 1e-12
    back, wb = S.transition(q, w, 1, 0)
    assert np.allclose(back, p) and np.allclose(wb, v)


def test_embedding_inverse(sphere):
    X = np.array([0.3, -0.4, 0.5])
    X /= np.linalg.norm(X)
    for chart in (0, 1):
        assert np.allclose(sphere.embed(sphere.from_embedding(X, chart), chart), X)


def test_pole_has_no_image(sphere):
    with pytest.raises(DomainError):
        sphere.transition(np.zeros(2), np.ones(2), 0, 1)


def test_flat_torus_wraps_displacement():
    M = FlatTorus(3, 1.0)
    d = M.displacement(np.array([0.9, 0.1, 0.5]), np.array([0.1, 0.9, 0.5]))
    assert np.allclose(d, [0.2, -0.2, 0.0])
    assert np.allclose(M.lattice_shift(np.zeros(3), np.array([0.9, 0, 0])), [1.0, 0, 0])


@pytest.mark.parametrize("metric", BACKENDS, ids=lambda m: type(m).__name__)
def test_spec_round_trip(metric):
    again = metric_from_spec(metric.to_spec())
    x = np.random.default_rng(3).uniform(-0.5, 0.5, (4, metric.dim))
    assert np.allclose(again.eval(x), metric.eval(x))
    assert again.injectivity_radius_bound == metric.injectivity_radius_bound


def test_unknown_spec_type():
    with pytest.raises(ValueError):
        metric_from_spec({"type": "klein_bottle"})
