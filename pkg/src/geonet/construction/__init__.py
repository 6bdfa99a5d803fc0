"""Net constructions and their verification."""

from .eyeglass import EyeglassPlan, build_eyeglass, kill_identity, verify_construction
from .junction import branch_geodesics, choose_rational_tilt, junction_geometry, junction_scalar
from .loops import TiltedLoop, loop_kill_factors, tilted_loop

__all__ = [
    "EyeglassPlan",
    "TiltedLoop",
    "branch_geodesics",
    "build_eyeglass",
    "choose_rational_tilt",
    "junction_geometry",
    "junction_scalar",
    "kill_identity",
    "loop_kill_factors",
    "tilted_loop",
    "verify_construction",
]
