"""Finite element solver for a singular quasilinear system with variable exponents.

    -Delta_{p(x)} u = -gamma log v + theta v^{alpha(x)}
    -Delta_{q(x)} v = -gamma log u + theta u^{beta(x)}

with zero Dirichlet data, built from barrier boxes, truncated auxiliary
solves, eps-regularization and lambda-continuation.
"""
from .barrier import BarrierBox, check_sub_super, construct_box
from .config import ScenarioConfig, parse_config
from .exponent import ExponentField, validate
from .fields import Flavor, ScalarField, SystemParams
from .mesh import build_interval_mesh, build_rectangle_mesh
from .pxlap import SolverOptions, solve_dirichlet
from .system import epsilon_continuation, lambda_continuation, solve_truncated

__version__ = "0.1.0"

__all__ = [
    "BarrierBox", "ExponentField", "Flavor", "ScalarField", "ScenarioConfig", "SolverOptions",
    "SystemParams", "build_interval_mesh", "build_rectangle_mesh", "check_sub_super",
    "construct_box", "epsilon_continuation", "lambda_continuation", "parse_config",
    "solve_dirichlet", "solve_truncated", "validate",
]
