"""
Jump-adapted Euler scheme for the truncated forward SDE.

On an interval (t_k, t_{k+1}] of the jump-adapted grid

    X_{k+1} = X_k + b(t_k, X_k)Δ + a(t_k, X_k)ΔB + h(t_k, X_k)(J_{k+1} − Δζ(n))

where J_{k+1} is the jump landing at t_{k+1} (zero if none). The jump uses
the pre-jump coefficient, i.e. the left limit X_{t−}.
"""

import logging

import numpy as np

from levy_engine.errors import DomainError
from fbsde_engine.forward.grid import JumpAdaptedGrid
from fbsde_engine.problems.problem import FbsdeProblem


logger = logging.getLogger(__name__)


def euler_step(problem: FbsdeProblem, zeta1: float, x, t, t_next, dB, jump=0.0):
    """
    One Euler step; every argument except ``problem`` and ``zeta1`` may be an
    array (one entry per path). Zero-length steps with no jump leave x
    unchanged, which is how padded grid columns are handled.

    Raises:
        DomainError: if t_next < t
        NumericError: if a coefficient evaluates to a non-finite value
    """
    dt = np.asarray(t_next, dtype=float) - np.asarray(t, dtype=float)
    if np.any(dt < 0):
        raise DomainError("Euler step needs t_k <= t_{k+1}")
    b, a, h = problem.coefficients(t, x)
    return x + b * dt + a * dB + h * (jump - dt * zeta1)


def simulate_path(problem: FbsdeProblem, grid: JumpAdaptedGrid, brownian_increments: np.ndarray,
                  zeta1: float) -> np.ndarray:
    """
    Run the scheme along one grid.

    Args:
        problem: FBSDE whose forward coefficients are used
        grid: Jump-adapted grid
        brownian_increments: ΔB per grid interval, length ``grid.size - 1``
        zeta1: Compensator ζ(n)

    Returns:
        States at every grid node, starting from x0
    """
    if brownian_increments.shape != (grid.size - 1,):
        raise DomainError(
            f"Expected {grid.size - 1} Brownian increments, got {brownian_increments.shape}"
        )
    states = np.empty(grid.size)
    states[0] = problem.x0
    for k in range(grid.size - 1):
        states[k + 1] = euler_step(
            problem, zeta1, states[k], grid.nodes[k], grid.nodes[k + 1],
            brownian_increments[k], grid.jump_sizes[k + 1]
        )
    return states


def simulate_states(problem: FbsdeProblem, times: np.ndarray, brownian_increments: np.ndarray,
                    jumps: np.ndarray, zeta1: float) -> np.ndarray:
    """
    Column-vectorised scheme over padded (M, K) grids.

    Args:
        times: Node times, shape (M, K); padding repeats T
        brownian_increments: Shape (M, K − 1), zero on padding
        jumps: Jump landing at each node, shape (M, K)
        zeta1: Compensator ζ(n)

    Returns:
        States, shape (M, K)
    """
    paths, columns = times.shape
    states = np.empty((paths, columns))
    states[:, 0] = problem.x0
    for k in range(columns - 1):
        states[:, k + 1] = euler_step(
            problem, zeta1, states[:, k], times[:, k], times[:, k + 1],
            brownian_increments[:, k], jumps[:, k + 1]
        )
    return states
