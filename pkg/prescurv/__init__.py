"""prescurv - curves and knots with prescribed curvature."""

__version__ = "0.1.0"

from prescurv.core.curves import CurvatureSpec, Domain, ParamCurve, SphericalCurve
from prescurv.core.pipeline import ProblemSpec, constant_curvature_knot, prescribe_curvature
from prescurv.core.presets import make_preset

__all__ = [
    "CurvatureSpec",
    "Domain",
    "ParamCurve",
    "SphericalCurve",
    "ProblemSpec",
    "prescribe_curvature",
    "constant_curvature_knot",
    "make_preset",
]
