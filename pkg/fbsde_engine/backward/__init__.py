"""
Implicit backward scheme with regression-estimated conditional expectations.
"""

from fbsde_engine.backward.regression import (
    BasisKind,
    RegressionSpec,
    RegressionDiagnostics,
    LeastSquaresRegressor
)
from fbsde_engine.backward.scheme import (
    BackwardSolution,
    gamma_weight,
    jump_weight_moment,
    backward_step,
    solve_backward
)

__all__ = [
    "BasisKind",
    "RegressionSpec",
    "RegressionDiagnostics",
    "LeastSquaresRegressor",
    "BackwardSolution",
    "gamma_weight",
    "jump_weight_moment",
    "backward_step",
    "solve_backward"
]
