"""
FBSDE problem definitions, structural checks and built-in benchmarks.
"""

from fbsde_engine.problems.problem import (
    FbsdeProblem,
    CheckStatus,
    SampleSpec,
    InvertibilityReport,
    LipschitzReport,
    constant,
    validate_invertibility,
    estimate_lipschitz
)
from fbsde_engine.problems.expressions import compile_expression
from fbsde_engine.problems.benchmarks import (
    BenchmarkProblem,
    linear_benchmark,
    discounting_benchmark,
    diffusion_benchmark,
    nonlinear_forward_problem,
    nonlinear_generator_problem,
    builtin_benchmarks,
    available_problems,
    get_problem,
    problem_from_expressions
)

__all__ = [
    "FbsdeProblem",
    "CheckStatus",
    "SampleSpec",
    "InvertibilityReport",
    "LipschitzReport",
    "constant",
    "validate_invertibility",
    "estimate_lipschitz",
    "compile_expression",
    "BenchmarkProblem",
    "linear_benchmark",
    "discounting_benchmark",
    "diffusion_benchmark",
    "nonlinear_forward_problem",
    "nonlinear_generator_problem",
    "builtin_benchmarks",
    "available_problems",
    "get_problem",
    "problem_from_expressions"
]
