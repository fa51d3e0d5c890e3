"""
FBSDE Engine

This package simulates decoupled forward-backward SDEs driven by a Brownian
motion and a truncated shot noise Lévy process, solves them backward by
least-squares regression, and measures the convergence of the scheme.
"""

__version__ = "0.1.0"

from fbsde_engine.problems import FbsdeProblem, BenchmarkProblem, get_problem, available_problems
from fbsde_engine.forward import PathEnsemble, simulate_ensemble, coarsen_ensemble, refine_ensemble
from fbsde_engine.backward import RegressionSpec, BackwardSolution, solve_backward
from fbsde_engine.harness import ErrorReport, StudyResult, StudySetup, empirical_norms, rate_fit

__all__ = [
    "FbsdeProblem",
    "BenchmarkProblem",
    "get_problem",
    "available_problems",
    "PathEnsemble",
    "simulate_ensemble",
    "coarsen_ensemble",
    "refine_ensemble",
    "RegressionSpec",
    "BackwardSolution",
    "solve_backward",
    "ErrorReport",
    "StudyResult",
    "StudySetup",
    "empirical_norms",
    "rate_fit"
]
