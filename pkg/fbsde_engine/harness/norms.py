"""
Empirical error norms between two scheme outputs on nested regular grids.

Y errors are reported both as sup_k E[|ΔY_k|^p]^{1/p} (``sup_mean``) and as
E[sup_k |ΔY_k|^p]^{1/p} (``mean_sup``). Z and Γ errors are ℍ^p-type norms:
the squared differences are integrated over time on the finer grid, with the
coarse values held constant over every coarse interval, and the p/2-th power
is averaged over paths.

Confidence intervals come from batch means over the paths.
"""

from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.stats import norm

from levy_engine.errors import ConfigurationError, DomainError, RefinementRequiredError
from fbsde_engine.forward.ensemble import PathEnsemble


DEFAULT_BATCHES = 20
DEFAULT_CONFIDENCE = 0.95

Interval = Tuple[float, float]


@dataclass(frozen=True)
class ErrorReport:
    """
    Error of one study cell against its reference.

    Attributes:
        sup_y_error: sup_k E[|ΔY_k|^p]^{1/p}
        mean_sup_y_error: E[sup_k |ΔY_k|^p]^{1/p}
        z_error, gamma_error: ℍ^p-type norms of ΔZ and ΔΓ
        y0_error: |Ȳ_0 − Y_0^ref|
        forward_error: E[sup_k |ΔX_k|^p]^{1/p}, when a forward reference was given
        *_ci: Batch-means confidence intervals
        n, N, M, p, seed, model, problem: Metadata for reproduction
    """
    sup_y_error: float
    mean_sup_y_error: float
    z_error: float
    gamma_error: float
    y0_error: float
    sup_y_ci: Interval = (float("nan"), float("nan"))
    mean_sup_y_ci: Interval = (float("nan"), float("nan"))
    z_ci: Interval = (float("nan"), float("nan"))
    gamma_ci: Interval = (float("nan"), float("nan"))
    forward_error: Optional[float] = None
    forward_ci: Interval = (float("nan"), float("nan"))
    n: Optional[float] = None
    N: Optional[int] = None
    M: Optional[int] = None
    p: float = 2.0
    seed: Optional[int] = None
    model: str = ""
    problem: str = ""
    extra: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        row = asdict(self)
        extra = row.pop("extra")
        for name in ("sup_y_ci", "mean_sup_y_ci", "z_ci", "gamma_ci", "forward_ci"):
            low, high = row.pop(name)
            prefix = name[:-3]
            row[f"{prefix}_ci_low"] = low
            row[f"{prefix}_ci_high"] = high
        row.update(extra)
        return row


def _check_order(p: float):
    if not p >= 2.0:
        raise DomainError(f"Norm order p must be >= 2, got {p}")


def refinement_ratio(coarse_steps: int, fine_steps: int) -> int:
    """N_fine / N_coarse for nested regular grids."""
    if coarse_steps < 1 or fine_steps < 1 or fine_steps % coarse_steps != 0:
        raise RefinementRequiredError(
            f"Regular grids with N={coarse_steps} and N={fine_steps} are not a common refinement"
        )
    return fine_steps // coarse_steps


def batch_interval(samples: np.ndarray, batches: int = DEFAULT_BATCHES,
                   confidence: float = DEFAULT_CONFIDENCE) -> Tuple[float, float, float]:
    """
    Mean of ``samples`` with a batch-means confidence interval.

    Returns:
        (mean, low, high); the interval is NaN with fewer samples than batches
    """
    samples = np.asarray(samples, dtype=float)
    mean = float(samples.mean())
    if batches < 2 or samples.size < batches:
        return mean, float("nan"), float("nan")
    batch_means = np.array([chunk.mean() for chunk in np.array_split(samples, batches)])
    half_width = norm.ppf(0.5 + confidence / 2.0) * batch_means.std(ddof=1) / np.sqrt(batches)
    return mean, mean - half_width, mean + half_width


def power_mean(samples: np.ndarray, p: float, batches: int) -> Tuple[float, Interval]:
    """(E[samples]^{1/p}, interval) for nonnegative per-path samples of |·|^p."""
    mean, low, high = batch_interval(samples, batches)
    if np.isnan(low):
        return mean ** (1.0 / p), (float("nan"), float("nan"))
    return mean ** (1.0 / p), (max(low, 0.0) ** (1.0 / p), high ** (1.0 / p))


def sup_mean_norm(difference: np.ndarray, p: float = 2.0, batches: int = DEFAULT_BATCHES) -> Tuple[float, Interval]:
    """sup_k E[|d_k|^p]^{1/p} for d of shape (M, K); the interval is taken at the maximising node."""
    _check_order(p)
    moments = np.abs(difference) ** p
    worst = int(np.argmax(moments.mean(axis=0)))
    return power_mean(moments[:, worst], p, batches)


def mean_sup_norm(difference: np.ndarray, p: float = 2.0, batches: int = DEFAULT_BATCHES) -> Tuple[float, Interval]:
    """E[sup_k |d_k|^p]^{1/p} for d of shape (M, K)."""
    _check_order(p)
    return power_mean(np.max(np.abs(difference), axis=1) ** p, p, batches)


def integrated_norm(difference: np.ndarray, dt: np.ndarray, p: float = 2.0,
                    batches: int = DEFAULT_BATCHES) -> Tuple[float, Interval]:
    """E[(Σ_k d_k² Δ_k)^{p/2}]^{1/p} for d of shape (M, K) over intervals Δ of shape (K,)."""
    _check_order(p)
    quadratic = np.sum(difference * difference * np.asarray(dt)[None, :], axis=1)
    return power_mean(quadratic ** (p / 2.0), p, batches)


def _on_fine_grid(values: np.ndarray, ratio: int) -> np.ndarray:
    """Interval values held constant over every coarse interval."""
    return np.repeat(values, ratio, axis=1)


def empirical_norms(approximation, reference, p: float = 2.0, batches: int = DEFAULT_BATCHES) -> ErrorReport:
    """
    Compare two backward solutions on nested regular grids.

    Both arguments need ``y`` (M, N + 1), ``z`` and ``gamma`` (M, N), ``times``
    and ``steps``; BackwardSolution and ReferenceSolution both qualify. The
    grid with fewer steps must divide the other, and rows must be the same
    paths.

    Raises:
        RefinementRequiredError: if the grids are not nested
        DomainError: if p < 2
    """
    _check_order(p)
    if approximation.y.shape[0] != reference.y.shape[0]:
        raise ConfigurationError(
            f"Solutions have {approximation.y.shape[0]} and {reference.y.shape[0]} paths"
        )
    if not np.isclose(approximation.times[-1], reference.times[-1]):
        raise ConfigurationError("Solutions have different horizons")
    coarse, fine = (approximation, reference) if approximation.steps <= reference.steps else (reference, approximation)
    ratio = refinement_ratio(coarse.steps, fine.steps)

    if coarse is approximation:
        delta_y = approximation.y - reference.y[:, ::ratio]
    else:
        delta_y = approximation.y[:, ::ratio] - reference.y
    sup_y, sup_y_ci = sup_mean_norm(delta_y, p, batches)
    mean_sup_y, mean_sup_y_ci = mean_sup_norm(delta_y, p, batches)

    dt = np.diff(fine.times)
    delta_z = _on_fine_grid(coarse.z, ratio) - fine.z
    delta_gamma = _on_fine_grid(coarse.gamma, ratio) - fine.gamma
    z_error, z_ci = integrated_norm(delta_z, dt, p, batches)
    gamma_error, gamma_ci = integrated_norm(delta_gamma, dt, p, batches)

    return ErrorReport(
        sup_y_error=sup_y, mean_sup_y_error=mean_sup_y,
        z_error=z_error, gamma_error=gamma_error,
        y0_error=abs(float(approximation.y[:, 0].mean()) - float(reference.y[:, 0].mean())),
        sup_y_ci=sup_y_ci, mean_sup_y_ci=mean_sup_y_ci, z_ci=z_ci, gamma_ci=gamma_ci,
        N=int(approximation.steps), M=int(approximation.y.shape[0]), p=float(p)
    )


def forward_samples(coarse: PathEnsemble, fine: PathEnsemble, p: float = 2.0) -> np.ndarray:
    """Per-path sup_k |X_k − X_k^fine|^p over the coarse regular nodes."""
    _check_order(p)
    ratio = refinement_ratio(coarse.steps, fine.steps)
    if coarse.paths != fine.paths or not np.array_equal(coarse.path_indices, fine.path_indices):
        raise ConfigurationError("Forward ensembles must hold the same paths")
    difference = coarse.regular_states() - fine.regular_states()[:, ::ratio]
    return np.max(np.abs(difference), axis=1) ** p


def forward_error(coarse: PathEnsemble, fine: PathEnsemble, p: float = 2.0,
                  batches: int = DEFAULT_BATCHES) -> Tuple[float, Interval]:
    """
    E[sup_k |X_k − X_k^fine|^p]^{1/p} over the coarse regular nodes.

    Raises:
        RefinementRequiredError: if ``fine.steps`` is not a multiple of ``coarse.steps``
    """
    return power_mean(forward_samples(coarse, fine, p), p, batches)
