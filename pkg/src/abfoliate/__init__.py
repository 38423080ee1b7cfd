"""Leaf operators and integral formulae for foliated (alpha, beta)-Finsler spaces.

Numerical companion that samples a Riemannian metric ``a`` and a 1-form
``beta`` on a periodic grid, builds the Finsler normal of the level-set
foliation, and checks closed-form shape operators, curvature vectors and
integral formulae against independent oracles.
"""

from .errors import (ConditionViolated, ConfigError, DomainError, FinslerError, FormMismatch,
                     NoConvergence, NoRoot, NotConstantCase, NotTangential, NotUnitVector,
                     PreconditionFailed, SingularMetric, WrongFamily)
from .minkowski import (AlphaBetaPoint, PhiFamily, check_minkowski_condition, fundamental_matrix,
                        fundamental_tensor, hessian_tensor_oracle, rho_coeffs, sigma_g)
from .normal import HyperplaneData, build_frame, frame_arrays, normal_oracle, solve_beta_n
from .manifold import ChartGrid, Foliation, Geometry, MetricField
from .scenarios import SCENARIOS, ScenarioParams, get_scenario
from .leaf_operators import (FrameField, curvature_vector_g, curvature_vector_g_oracle,
                             leaf_operator_field, shape_operator_g, shape_operator_g_oracle)
from .integrals import (observed_orders, q_constants, reeb_residual_g, constant_formula_residual,
                        general_formula_residual)
from .config import ScenarioConfig, Tolerances
from .harness import converge, list_scenarios, run_scenario

__version__ = "0.1.0"

__all__ = [
    "AlphaBetaPoint", "ChartGrid", "ConditionViolated", "ConfigError", "DomainError",
    "FinslerError", "Foliation", "FormMismatch", "FrameField", "Geometry", "HyperplaneData",
    "MetricField", "NoConvergence", "NoRoot", "NotConstantCase", "NotTangential", "NotUnitVector",
    "PhiFamily", "PreconditionFailed", "SCENARIOS", "ScenarioConfig", "ScenarioParams",
    "SingularMetric", "Tolerances", "WrongFamily", "build_frame", "check_minkowski_condition",
    "converge", "curvature_vector_g", "curvature_vector_g_oracle", "frame_arrays",
    "fundamental_matrix", "fundamental_tensor", "get_scenario", "hessian_tensor_oracle",
    "leaf_operator_field", "list_scenarios", "normal_oracle", "observed_orders", "q_constants",
    "reeb_residual_g", "rho_coeffs", "run_scenario", "shape_operator_g", "shape_operator_g_oracle",
    "sigma_g", "solve_beta_n", "constant_formula_residual", "general_formula_residual",
]
