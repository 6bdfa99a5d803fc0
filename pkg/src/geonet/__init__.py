"""Stationary geodesic nets on chart-defined manifolds and their conformal perturbations."""

from .conformal import ConformalFactor, ConformalStack, apply_conformal, conformal_geodesic_curvature
from .curves import DiscretizedCurve, curve_from_function
from .errors import GeonetError
from .geodesics import exp_map, geodesic_bvp, integrate_geodesic, parallel_transport
from .manifolds import FlatTorus, ellipsoid, metric_from_spec, round_sphere
from .net import Edge, GammaNet, WeightedMultigraph, is_embedded, is_essential, is_stationary
from .solver import continue_net, find_closed_geodesic, relax_net

__version__ = "0.1.0"

__all__ = [
    "ConformalFactor",
    "ConformalStack",
    "DiscretizedCurve",
    "Edge",
    "FlatTorus",
    "GammaNet",
    "GeonetError",
    "WeightedMultigraph",
    "apply_conformal",
    "conformal_geodesic_curvature",
    "continue_net",
    "curve_from_function",
    "ellipsoid",
    "exp_map",
    "find_closed_geodesic",
    "geodesic_bvp",
    "integrate_geodesic",
    "is_embedded",
    "is_essential",
    "is_stationary",
    "metric_from_spec",
    "parallel_transport",
    "relax_net",
    "round_sphere",
]
