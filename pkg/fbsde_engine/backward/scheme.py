"""
Implicit backward Euler scheme for (Ȳ, Z̄, Γ̄).

On every regular interval (t_k, t_{k+1}] with Δ = t_{k+1} − t_k

    Z̄_k = Δ⁻¹ E[Ȳ_{k+1} ΔB_k | X_k]
    Γ̄_k = Δ⁻¹ E[Ȳ_{k+1} (Σ ρ(J_i)J_i − Δζ_ρ(n)) | X_k]
    Ȳ_k = E[Ȳ_{k+1} | X_k] + Δ f(t_k, X_k, Ȳ_k, Z̄_k, Γ̄_k)

where the sums run over the jumps in the interval. Conditional expectations
are estimated by cross-path regression on X_k, and the implicit equation for
Ȳ_k is solved per path by Picard iteration.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm

from levy_engine.errors import ConfigurationError, FixedPointError
from levy_engine.measures.moments import retained_weighted_moment
from levy_engine.shotnoise.skeleton import JumpSkeleton
from fbsde_engine.backward.regression import LeastSquaresRegressor, RegressionDiagnostics, RegressionSpec
from fbsde_engine.forward.ensemble import PathEnsemble
from fbsde_engine.problems.problem import FbsdeProblem


logger = logging.getLogger(__name__)

FIXED_POINT_TOLERANCE = 1e-12
MAX_FIXED_POINT_ITERATIONS = 50
TRUNCATION_FACTOR = 10.0


def gamma_weight(skeleton: JumpSkeleton, s: float, t: float, rho: Callable[[np.ndarray], np.ndarray],
                 zeta_rho: float) -> float:
    """
    Compensated ρ-weighted jump sum over (s, t]: Σ ρ(J_i)J_i − (t − s)ζ_ρ(n).

    Raises:
        DomainError: if (s, t] is not a sub-interval of [0, T]
    """
    # the plain increment validates the interval
    skeleton.increment(s, t)
    inside = (skeleton.times > s) & (skeleton.times <= t)
    sizes = skeleton.sizes[inside]
    weighted = np.asarray(rho(sizes), dtype=float) * sizes if sizes.size else np.zeros(0)
    return float(np.sum(weighted) - (t - s) * zeta_rho)


def jump_weight_moment(problem: FbsdeProblem, ensemble: PathEnsemble) -> float:
    """ζ_ρ(n) = ∫ρ(e)e ν^n(de) for the ensemble's truncated measure."""
    return retained_weighted_moment(ensemble.representation, ensemble.level,
                                    lambda e: problem.jump_weight(e) * e)


@dataclass(frozen=True, eq=False)
class BackwardSolution:
    """
    Scheme output on the regular nodes.

    Attributes:
        times: Regular nodes kT/N, shape (N + 1,)
        states: X at the regular nodes, shape (M, N + 1)
        y: Ȳ, shape (M, N + 1); the last column is g(X_T)
        z, gamma: Z̄ and Γ̄, shape (M, N)
        fixed_point_iters: Picard iterations per node, shape (N,)
        diagnostics: RegressionDiagnostics per node
        clipped: Mask of Ȳ values cut at the truncation bound
        y0_samples: Pathwise Ȳ_1 + Δ f(t_0, ...), whose mean is Ȳ_0
        truncation_bound: Clip level used
        zeta_rho: ζ_ρ(n) used in the Γ̄ weight
        level, steps: n and N
    """
    times: np.ndarray
    states: np.ndarray
    y: np.ndarray
    z: np.ndarray
    gamma: np.ndarray
    fixed_point_iters: np.ndarray
    diagnostics: Tuple[RegressionDiagnostics, ...]
    clipped: np.ndarray
    y0_samples: np.ndarray
    truncation_bound: float
    zeta_rho: float
    level: float
    steps: int

    @property
    def paths(self) -> int:
        return int(self.y.shape[0])

    @property
    def y0(self) -> float:
        return float(self.y[:, 0].mean())

    @property
    def y0_standard_error(self) -> float:
        if self.paths < 2:
            return float("nan")
        return float(self.y0_samples.std(ddof=1) / np.sqrt(self.paths))

    def y0_interval(self, confidence: float = 0.95) -> Tuple[float, float]:
        half_width = norm.ppf(0.5 + confidence / 2.0) * self.y0_standard_error
        return self.y0 - half_width, self.y0 + half_width

    def summary_table(self) -> pd.DataFrame:
        """Per-node statistics of Ȳ, Z̄, Γ̄ and the regression diagnostics."""
        steps = self.steps
        pad = np.full(1, np.nan)
        table = pd.DataFrame({
            "node": np.arange(steps + 1),
            "t": self.times,
            "y_mean": self.y.mean(axis=0),
            "y_std": self.y.std(axis=0),
            "z_mean": np.concatenate((self.z.mean(axis=0), pad)),
            "z_std": np.concatenate((self.z.std(axis=0), pad)),
            "gamma_mean": np.concatenate((self.gamma.mean(axis=0), pad)),
            "gamma_std": np.concatenate((self.gamma.std(axis=0), pad)),
            "fixed_point_iters": np.concatenate((self.fixed_point_iters, [0])),
            "clipped": self.clipped.sum(axis=0),
        })
        diagnostics = pd.DataFrame([d.as_row() for d in self.diagnostics]).drop(columns=["clipped"])
        return table.merge(diagnostics, on="node", how="left")


def _solve_fixed_point(problem: FbsdeProblem, node: int, t: float, x: np.ndarray, expected: np.ndarray,
                       z: np.ndarray, gamma: np.ndarray, dt: float) -> Tuple[np.ndarray, int]:
    y = expected
    residual = np.inf
    for iteration in range(1, MAX_FIXED_POINT_ITERATIONS + 1):
        updated = expected + dt * problem.generator(t, x, y, z, gamma)
        residual = float(np.max(np.abs(updated - y)))
        y = updated
        if residual <= FIXED_POINT_TOLERANCE * max(1.0, float(np.max(np.abs(y)))):
            return y, iteration
    raise FixedPointError(node, MAX_FIXED_POINT_ITERATIONS, residual)


def _step(problem, regressor, node, t, dt, x, y_next, dB, weight, bound):
    targets = np.column_stack((y_next * dB / dt, y_next * weight / dt, y_next))
    fitted, diagnostics = regressor.fit(x, targets, node=node)
    z, gamma, expected = fitted[:, 0], fitted[:, 1], fitted[:, 2]
    y, iterations = _solve_fixed_point(problem, node, t, x, expected, z, gamma, dt)
    clipped = np.abs(y) > bound
    if clipped.any():
        y = np.clip(y, -bound, bound)
        diagnostics = RegressionDiagnostics(**{**diagnostics.as_row(), "clipped": int(clipped.sum())})
    return y, z, gamma, iterations, diagnostics, clipped


def _truncation_bound(spec: RegressionSpec, terminal: np.ndarray) -> float:
    if spec.truncation_bound is not None:
        return float(spec.truncation_bound)
    return TRUNCATION_FACTOR * max(float(np.max(np.abs(terminal))), 1.0)


def _node_data(ensemble: PathEnsemble, problem: FbsdeProblem, zeta_rho: float):
    times = ensemble.regular_times
    dt = np.diff(times)
    weights = ensemble.regular_jump_sums(problem.jump_weight) - dt[None, :] * zeta_rho
    return times, dt, ensemble.regular_states(), ensemble.regular_brownian_increments(), weights


def backward_step(
    ensemble: PathEnsemble,
    node: int,
    y_next: np.ndarray,
    problem: Optional[FbsdeProblem] = None,
    spec: Optional[RegressionSpec] = None,
    zeta_rho: Optional[float] = None,
    truncation_bound: float = np.inf
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int, RegressionDiagnostics]:
    """
    One step of the scheme from regular node k + 1 to node k.

    Args:
        ensemble: Forward paths
        node: k, with 0 <= k < N
        y_next: Ȳ_{k+1} per path
        problem: FBSDE (defaults to the ensemble's)
        spec: Regression configuration
        zeta_rho: ζ_ρ(n) (computed when omitted)
        truncation_bound: Clip level for Ȳ_k

    Returns:
        (Ȳ_k, Z̄_k, Γ̄_k, Picard iterations, diagnostics)

    Raises:
        InsufficientSamplesError: if M is below 10× the basis dimension
        FixedPointError: if the Picard iteration does not converge
    """
    problem = problem or ensemble.problem
    if problem is None:
        raise ConfigurationError("A problem is required for the backward scheme")
    if not 0 <= node < ensemble.steps:
        raise ConfigurationError(f"Node must lie in [0, {ensemble.steps}), got {node}")
    if zeta_rho is None:
        zeta_rho = jump_weight_moment(problem, ensemble)
    times, dt, states, dB, weights = _node_data(ensemble, problem, zeta_rho)
    y, z, gamma, iterations, diagnostics, _ = _step(
        problem, LeastSquaresRegressor(spec), node, times[node], dt[node], states[:, node],
        np.asarray(y_next, dtype=float), dB[:, node], weights[:, node], truncation_bound
    )
    return y, z, gamma, iterations, diagnostics


def solve_backward(
    ensemble: PathEnsemble,
    problem: Optional[FbsdeProblem] = None,
    spec: Optional[RegressionSpec] = None,
    zeta_rho: Optional[float] = None
) -> BackwardSolution:
    """
    Run the scheme from Ȳ_N = g(X_T) back to node 0.

    Args:
        ensemble: Forward paths
        problem: FBSDE (defaults to the ensemble's)
        spec: Regression configuration (defaults to a cubic global polynomial)
        zeta_rho: ζ_ρ(n) (computed from the problem's ρ when omitted)

    Returns:
        BackwardSolution
    """
    problem = problem or ensemble.problem
    if problem is None:
        raise ConfigurationError("A problem is required for the backward scheme")
    spec = spec or RegressionSpec()
    regressor = LeastSquaresRegressor(spec)
    regressor.check_samples(ensemble.paths)
    if zeta_rho is None:
        zeta_rho = jump_weight_moment(problem, ensemble)

    times, dt, states, dB, weights = _node_data(ensemble, problem, zeta_rho)
    steps, paths = ensemble.steps, ensemble.paths
    y = np.empty((paths, steps + 1))
    z = np.empty((paths, steps))
    gamma = np.empty((paths, steps))
    clipped = np.zeros((paths, steps + 1), dtype=bool)
    iterations = np.zeros(steps, dtype=np.int64)
    diagnostics: List[RegressionDiagnostics] = []

    y[:, steps] = problem.terminal(states[:, steps])
    bound = _truncation_bound(spec, y[:, steps])
    for k in range(steps - 1, -1, -1):
        y[:, k], z[:, k], gamma[:, k], iterations[k], node_diagnostics, clipped[:, k] = _step(
            problem, regressor, k, times[k], dt[k], states[:, k],
            y[:, k + 1], dB[:, k], weights[:, k], bound
        )
        diagnostics.append(node_diagnostics)
    diagnostics.reverse()

    y0_samples = y[:, 1] + dt[0] * problem.generator(times[0], states[:, 0], y[:, 0], z[:, 0], gamma[:, 0])
    fallbacks = sum(d.fallback for d in diagnostics)
    if fallbacks:
        logger.warning("Ridge fallback used at %d of %d nodes", fallbacks, steps)
    if clipped.any():
        logger.warning("Clipped %d values at the truncation bound %.4g", int(clipped.sum()), bound)
    logger.info("Backward pass done: Y0 = %.6f (M=%d, N=%d, n=%g)", y[:, 0].mean(), paths, steps, ensemble.level)

    return BackwardSolution(
        times=times, states=states, y=y, z=z, gamma=gamma,
        fixed_point_iters=iterations, diagnostics=tuple(diagnostics), clipped=clipped,
        y0_samples=y0_samples, truncation_bound=bound, zeta_rho=float(zeta_rho),
        level=ensemble.level, steps=steps
    )
