"""Sphere immersions with a prescribed zero Gauss-Kronecker set."""

from .cantor import CantorPlan, compose_stack, plan_cantor, verify_fractal_zero_set
from .grid import GridSpec
from .immersion import ImmersionMap, SpherePoint, shape_operator_fd, zero_set_scan
from .perturbation import GeodesicBall, build_variation, calibrate_t
from .profile import ProfileParams, ProfileSolution, assemble_profile

__version__ = "0.1.0"

__all__ = [
    "CantorPlan", "GeodesicBall", "GridSpec", "ImmersionMap", "ProfileParams",
    "ProfileSolution", "SpherePoint", "assemble_profile", "build_variation", "calibrate_t",
    "compose_stack", "plan_cantor", "shape_operator_fd", "verify_fractal_zero_set",
    "zero_set_scan",
]
