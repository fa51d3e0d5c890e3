"""
Reference solutions for error measurements.

- closed form: a benchmark's (Y, Z, Γ) evaluated at the run's own regular
  nodes and states
- fine discretization: the run's paths refined to a larger N (Brownian
  bridge) and/or a higher truncation level (shared epochs), then solved
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from levy_engine.errors import ConfigurationError
from fbsde_engine.backward.regression import RegressionSpec
from fbsde_engine.backward.scheme import BackwardSolution, solve_backward
from fbsde_engine.forward.ensemble import PathEnsemble, refine_ensemble
from fbsde_engine.problems.benchmarks import BenchmarkProblem
from fbsde_engine.problems.problem import FbsdeProblem


logger = logging.getLogger(__name__)


class ReferenceMode(str, Enum):
    CLOSED_FORM = "closed_form"
    FINE_DISCRETIZATION = "fine_discretization"


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    """
    Reference (Y, Z, Γ) on a regular grid nested with the run's grid.

    Attributes:
        mode: How the reference was produced
        times: Regular nodes, shape (N_ref + 1,)
        y: Shape (M, N_ref + 1)
        z, gamma: Shape (M, N_ref)
        y0: Reference value of Y_0
        steps, level: N_ref and n_ref
        ensemble: Forward paths of the reference (fine discretization only)
        solution: Backward solution of the reference (fine discretization only)
    """
    mode: ReferenceMode
    times: np.ndarray
    y: np.ndarray
    z: np.ndarray
    gamma: np.ndarray
    y0: float
    steps: int
    level: float
    ensemble: Optional[PathEnsemble] = None
    solution: Optional[BackwardSolution] = None


def closed_form_reference(benchmark: BenchmarkProblem, ensemble: PathEnsemble) -> ReferenceSolution:
    """
    Closed-form (Y, Z, Γ) at the ensemble's regular nodes.

    Z and Γ are evaluated at the left node of every interval; Γ is the
    scheme's target u(t, x)·∫ρ(e)e² ν^n(de).
    """
    times = ensemble.regular_times
    states = ensemble.regular_states()
    _, second = benchmark.rho_moments(ensemble.representation, ensemble.level)
    left = times[None, :-1]
    return ReferenceSolution(
        mode=ReferenceMode.CLOSED_FORM,
        times=times,
        y=np.asarray(benchmark.y_exact(times[None, :], states), dtype=float),
        z=np.asarray(benchmark.z_exact(left, states[:, :-1]), dtype=float),
        gamma=benchmark.gamma_exact(left, states[:, :-1], second),
        y0=float(benchmark.y_exact(0.0, benchmark.problem.x0)),
        steps=ensemble.steps,
        level=ensemble.level
    )


def fine_reference(
    ensemble: PathEnsemble,
    steps: Optional[int] = None,
    level: Optional[float] = None,
    problem: Optional[FbsdeProblem] = None,
    spec: Optional[RegressionSpec] = None
) -> ReferenceSolution:
    """
    Refine the run's paths to (steps, level) and solve the scheme on them.

    With ``steps`` and ``level`` equal to the run's own, the reference is the
    run itself.

    Raises:
        RefinementRequiredError: if ``steps`` is not a multiple of the run's N
    """
    problem = problem or ensemble.problem
    fine = refine_ensemble(ensemble, steps or ensemble.steps, level, problem=problem)
    solution = solve_backward(fine, problem, spec)
    logger.info("Fine reference at N=%d, n=%g: Y0 = %.6f", fine.steps, fine.level, solution.y0)
    return ReferenceSolution(
        mode=ReferenceMode.FINE_DISCRETIZATION,
        times=solution.times,
        y=solution.y,
        z=solution.z,
        gamma=solution.gamma,
        y0=solution.y0,
        steps=fine.steps,
        level=fine.level,
        ensemble=fine,
        solution=solution
    )


def reference_solution(
    problem: Union[BenchmarkProblem, FbsdeProblem],
    ensemble: PathEnsemble,
    mode: Union[ReferenceMode, str] = ReferenceMode.FINE_DISCRETIZATION,
    steps: Optional[int] = None,
    level: Optional[float] = None,
    spec: Optional[RegressionSpec] = None
) -> ReferenceSolution:
    """
    Reference for a run on ``ensemble``.

    Args:
        problem: Benchmark (closed form available) or plain problem
        ensemble: Forward paths of the run
        mode: closed_form or fine_discretization
        steps, level: N_ref and n_ref (fine discretization)
        spec: Regression configuration (fine discretization)

    Raises:
        ConfigurationError: if a closed form is requested for a problem without one
    """
    mode = ReferenceMode(mode)
    if mode == ReferenceMode.CLOSED_FORM:
        if not isinstance(problem, BenchmarkProblem):
            name = getattr(problem, "name", type(problem).__name__)
            raise ConfigurationError(f"Problem {name!r} has no closed-form solution")
        return closed_form_reference(problem, ensemble)
    plain = problem.problem if isinstance(problem, BenchmarkProblem) else problem
    return fine_reference(ensemble, steps, level, plain, spec)
