import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import line_curve
from geonet.curves import DiscretizedCurve, concatenate, curve_from_function
from geonet.errors import DomainError, ParametrizationError, ResolutionError
from geonet.manifolds import FlatTorus, round_sphere
from geonet.norms import Cutoff, central_derivatives, ck_norm, fd_weights, smoothstep


def circle(R=0.3, n=129):
    def fun(s):
        c, sn = np.cos(s / R), np.sin(s / R)
        z = np.zeros_like(s)
        return (np.stack([R * c, R * sn, z], -1), np.stack([-sn, c, z], -1),
                np.stack([-c / R, -sn / R, z], -1))
    return curve_from_function(fun, np.linspace(0, 2 * np.pi * R, n), closed=True)


def test_quintic_interpolation_is_exact_on_circle_to_high_order():
    c = circle()
    s = np.linspace(0.01, 1.8, 37)
    R = 0.3
    exact = np.stack([R * np.cos(s / R), R * np.sin(s / R), 0 * s], -1)
    assert np.abs(c.evaluate(s) - exact).max() < 1e-9


def test_length_of_circle():
    assert abs(circle().length(FlatTorus(3, 10.0)) - 2 * np.pi * 0.3) < 1e-10


def test_rejects_bad_grids():
    with pytest.raises(ParametrizationError):
        DiscretizedCurve(np.array([0.0, 0.0]), np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
    c = line_curve([0, 0, 0], [1, 0, 0])
    with pytest.raises(DomainError):
        c.evaluate(2.0)


def test_dict_round_trip_and_reverse():
    c = circle()
    d = DiscretizedCurve.from_dict(c.to_dict())
    assert np.array_equal(d.points, c.points) and d.closed
    r = c.reversed()
    assert np.allclose(r.points[::-1], c.points)
    assert np.allclose(r.velocities[::-1], -c.velocities)


def test_concatenate_joins_segments():
    a = line_curve([0, 0, 0], [1, 0, 0], 0.5, 17)
    b = line_curve([0.5, 0, 0], [1, 0, 0], 0.5, 17).reparametrized(0.5, 1.0)
    c = concatenate([a, b])
    assert c.span == (0.0, 1.0)
    assert abs(c.length(FlatTorus(3, 10.0)) - 1.0) < 1e-12


def test_sphere_length_in_chart_coordinates():
    S = round_sphere(2)
    t = np.linspace(0, 1, 65)

    def fun(s):
        # equator of chart 0 is the unit circle
        return (np.stack([np.cos(s), np.sin(s)], -1), np.stack([-np.sin(s), np.cos(s)], -1),
                np.stack([-np.cos(s), -np.sin(s)], -1))

    c = curve_from_function(fun, t)
    assert abs(c.length(S) - 1.0) < 1e-10


@given(st.integers(0, 6), st.floats(-1, 1))
@settings(max_examples=30, deadline=None)
def test_fd_weights_are_exact_on_polynomials(deg, z):
    nodes = np.linspace(-1, 1, 9)
    w = fd_weights(z, nodes, 4)
    for j in range(5):
        exact = 0.0 if j > deg else np.prod(range(deg - j + 1, deg + 1)) * z ** (deg - j)
        assert abs(w[j] @ nodes**deg - exact) < 1e-9 * max(1.0, abs(exact))


def test_central_derivatives_of_sine():
    d = central_derivatives(np.sin, 0.4, 4, 1e-2)
    exact = [np.sin(0.4), np.cos(0.4), -np.sin(0.4), -np.cos(0.4), np.sin(0.4)]
    assert np.abs(d - exact).max() < 1e-6


def test_ck_norm_of_sine():
    h = 2 * np.pi / 2000
    s = np.arange(2001) * h
    total, orders = ck_norm(3 * np.sin(2 * s), 2, h, return_orders=True)
    assert np.allclose(orders, [3, 6, 12], rtol=1e-3)
    assert total == pytest.approx(12, rel=1e-3)


def test_ck_norm_needs_resolution():
    with pytest.raises(ResolutionError):
        ck_norm(np.ones(3), 2, 0.1)


@pytest.mark.parametrize("order", [1, 3, 5])
def test_smoothstep_boundary_behaviour(order):
    S = smoothstep(order)
    assert S(0) == pytest.approx(0) and S(1) == pytest.approx(1)
    for j in range(1, order + 1):
        assert abs(S.deriv(j)(0)) < 1e-9 and abs(S.deriv(j)(1)) < 1e-9
    x = np.linspace(0, 1, 201)
    assert np.all(np.diff(S(x)) >= -1e-14)


def test_cutoff_plateau_and_support():
    psi = Cutoff(0.25, 0.5, 4)
    x = np.linspace(0, 1, 401)
    y = psi(x)
    assert np.all(y[x <= 0.25] == 1) and np.all(y[x >= 0.5] == 0)
    assert np.all((0 <= y) & (y <= 1))
    assert np.allclose(psi(x, 1), np.gradient(y, x, edge_order=2), atol=0.05)
    with pytest.raises(ValueError):
        Cutoff(0.5, 0.5, 2)
