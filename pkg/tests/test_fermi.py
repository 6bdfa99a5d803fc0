import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import lattice_loop, line_curve
from geonet.errors import GeometryError
from geonet.fermi import (
    fermi_tube,
    geodesic_curvature,
    geodesic_residual,
    tube_coordinates,
    tube_coordinates_batch,
    tube_point,
)
from geonet.manifolds import FlatTorus, round_sphere
from test_curves_norms import circle


def test_frame_is_orthonormal_and_transported(torus):
    tube = fermi_tube(torus, circle(), 0.1)
    assert tube.orthonormality_defect() < 1e-10
    assert tube.transport_residual() < 1e-6


CIRCLE_TUBE = fermi_tube(FlatTorus(3, 10.0), circle(), 0.1)


@given(st.floats(0.05, 1.7), st.floats(0, 0.09), st.floats(0, 2 * np.pi))
@settings(max_examples=40, deadline=None)
def test_tube_coordinates_invert_tube_point(s, rho, ang):
    tube = CIRCLE_TUBE
    h = rho * np.array([np.cos(ang), np.sin(ang)])
    x = tube_point(tube, np.array([s]), h[None])[0]
    s2, h2_, ok = tube_coordinates_batch(tube, x[None])
    assert ok[0]
    assert abs(s2[0] - s) < 1e-9 and np.abs(h2_[0] - h).max() < 1e-8


def test_circle_curvature_is_inverse_radius():
    M = FlatTorus(3, 10.0)
    c = circle(R=0.3)
    prof = geodesic_curvature(M, c, fermi_tube(M, c, 0.1))
    assert np.allclose(prof.magnitude(), 1 / 0.3, rtol=1e-10)
    assert np.allclose(geodesic_residual(M, c), 1 / 0.3, rtol=1e-10)


def test_straight_loop_is_geodesic_with_trivial_holonomy(torus):
    c = lattice_loop([0, 0, 0], [1, 0, 0])
    tube = fermi_tube(torus, c, 0.2)
    assert np.abs(geodesic_residual(torus, c)).max() < 1e-12
    assert np.allclose(tube.holonomy(), np.eye(2), atol=1e-12)


def test_equator_has_zero_curvature_on_sphere():
    S = round_sphere(2)
    th = np.linspace(0, 1.5, 97)
    from geonet.curves import curve_from_function

    c = curve_from_function(
        lambda s: (np.stack([np.cos(s), np.sin(s)], -1), np.stack([-np.sin(s), np.cos(s)], -1),
                   np.stack([-np.cos(s), -np.sin(s)], -1)), th)
    assert geodesic_residual(S, c).max() < 1e-10


def test_overlapping_tube_is_rejected():
    with pytest.raises(GeometryError):
        fermi_tube(FlatTorus(3, 10.0), circle(R=0.3), 0.5)


def test_point_outside_tube_is_flagged():
    tube = fermi_tube(FlatTorus(3, 10.0), line_curve([0, 0, 0], [1, 0, 0]), 0.1)
    _, _, ok = tube_coordinates_batch(tube, np.array([[0.5, 0.5, 0.0]]))
    assert not ok[0]
