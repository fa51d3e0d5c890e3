"""
Least-squares regression estimators of conditional expectations E[· | X_{t_k}].

Two bases are available:

- global polynomial: 1, u, u², …, u^d on the standardized state u = (x − mean)/std
- partitioned linear: the state range is cut into equal bins and a separate
  line a_j + b_j x is fitted inside every bin

Both always contain the constants (globally or per bin), so fitted values
keep the sample mean of the target. Several targets share one design matrix
and one factorization.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from levy_engine.errors import ConfigurationError, InsufficientSamplesError


logger = logging.getLogger(__name__)

MIN_SAMPLES_PER_BASIS_FUNCTION = 10
CONDITION_LIMIT = 1e12
FALLBACK_RIDGE = 1e-8
# relative spread below which a state sample is treated as constant
DEGENERATE_SPREAD = 1e-12


class BasisKind(str, Enum):
    GLOBAL_POLYNOMIAL = "global_polynomial"
    PARTITIONED_LINEAR = "partitioned_linear"


@dataclass(frozen=True)
class RegressionSpec:
    """
    Configuration of the conditional-expectation estimator.

    Attributes:
        basis: Basis family
        degree: Polynomial degree (global polynomial basis)
        bins: Number of bins (partitioned linear basis)
        state_range: Bin range; the per-node sample range when None
        ridge: Penalty on the non-constant coefficients
        truncation_bound: Clip level for Ȳ; 10·max|g(X_T)| when None
    """
    basis: BasisKind = BasisKind.GLOBAL_POLYNOMIAL
    degree: int = 3
    bins: int = 8
    state_range: Optional[Tuple[float, float]] = None
    ridge: float = 0.0
    truncation_bound: Optional[float] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "basis", BasisKind(self.basis))
        except ValueError as exc:
            names = ", ".join(kind.value for kind in BasisKind)
            raise ConfigurationError(f"Regression basis must be one of: {names}") from exc
        if self.degree < 0:
            raise ConfigurationError(f"Polynomial degree must be >= 0, got {self.degree}")
        if self.bins < 1:
            raise ConfigurationError(f"Number of bins must be >= 1, got {self.bins}")
        if not np.isfinite(self.ridge) or self.ridge < 0:
            raise ConfigurationError(f"Ridge weight must be finite and >= 0, got {self.ridge}")
        if self.truncation_bound is not None and not (np.isfinite(self.truncation_bound) and self.truncation_bound > 0):
            raise ConfigurationError(f"Truncation bound must be finite and > 0, got {self.truncation_bound}")
        if self.state_range is not None:
            low, high = self.state_range
            if not (np.isfinite(low) and np.isfinite(high) and low < high):
                raise ConfigurationError(f"Invalid state range {self.state_range}")
            object.__setattr__(self, "state_range", (float(low), float(high)))

    @property
    def dimension(self) -> int:
        """Number of basis functions."""
        if self.basis == BasisKind.GLOBAL_POLYNOMIAL:
            return self.degree + 1
        return 2 * self.bins

    @property
    def min_samples(self) -> int:
        return MIN_SAMPLES_PER_BASIS_FUNCTION * self.dimension

    @classmethod
    def from_dict(cls, values: Optional[dict]) -> "RegressionSpec":
        values = dict(values or {})
        unknown = set(values) - {"basis", "degree", "bins", "state_range", "ridge", "truncation_bound"}
        if unknown:
            raise ConfigurationError(f"Unknown regression keys: {', '.join(sorted(unknown))}")
        if values.get("state_range") is not None:
            values["state_range"] = tuple(values["state_range"])
        return cls(**values)


@dataclass(frozen=True)
class RegressionDiagnostics:
    """What happened in one node's regression."""
    node: int
    basis_dimension: int
    condition_number: float
    ridge: float
    fallback: bool = False
    degenerate: bool = False
    degenerate_bins: int = 0
    clipped: int = 0

    def as_row(self) -> dict:
        return {
            "node": self.node,
            "basis_dimension": self.basis_dimension,
            "condition_number": self.condition_number,
            "ridge": self.ridge,
            "fallback": self.fallback,
            "degenerate": self.degenerate,
            "degenerate_bins": self.degenerate_bins,
            "clipped": self.clipped,
        }


class LeastSquaresRegressor:
    """
    Projects targets on the regression basis of the current state.

    ``fit`` returns fitted values for every path (the estimated conditional
    expectations evaluated at the paths' own states) together with the
    node diagnostics.
    """

    def __init__(self, spec: Optional[RegressionSpec] = None):
        self.spec = spec or RegressionSpec()

    def check_samples(self, paths: int):
        if paths < self.spec.min_samples:
            raise InsufficientSamplesError(
                f"{paths} paths are too few for a {self.spec.basis.value} basis of dimension "
                f"{self.spec.dimension}; need at least {self.spec.min_samples}"
            )

    def fit(self, x: np.ndarray, targets: np.ndarray, node: int = 0) -> Tuple[np.ndarray, RegressionDiagnostics]:
        """
        Args:
            x: States X_{t_k}, shape (M,)
            targets: Shape (M,) or (M, q)
            node: Node index, for diagnostics

        Returns:
            (fitted values with the shape of ``targets``, RegressionDiagnostics)
        """
        x = np.asarray(x, dtype=float)
        targets = np.asarray(targets, dtype=float)
        vector = targets.ndim == 1
        if vector:
            targets = targets[:, None]
        if targets.shape[0] != x.size:
            raise ConfigurationError(f"Got {targets.shape[0]} targets for {x.size} states")
        self.check_samples(x.size)

        if self.spec.basis == BasisKind.GLOBAL_POLYNOMIAL:
            fitted, diagnostics = self._fit_polynomial(x, targets, node)
        else:
            fitted, diagnostics = self._fit_partitioned(x, targets, node)
        return (fitted[:, 0] if vector else fitted), diagnostics

    # ----- global polynomial -----

    def _fit_polynomial(self, x, targets, node):
        spec = self.spec
        center, spread = x.mean(), x.std()
        if spec.degree == 0 or spread <= DEGENERATE_SPREAD * max(1.0, abs(center)):
            fitted = np.broadcast_to(targets.mean(axis=0), targets.shape).copy()
            return fitted, RegressionDiagnostics(node, 1, 1.0, 0.0, degenerate=spec.degree > 0)

        design = np.vander((x - center) / spread, spec.degree + 1, increasing=True)
        gram = design.T @ design / x.size
        moments = design.T @ targets / x.size
        # the constant column is never penalised
        penalty = np.ones(spec.degree + 1)
        penalty[0] = 0.0

        ridge, fallback = spec.ridge, False
        condition = float(np.linalg.cond(gram + ridge * np.diag(penalty)))
        if not np.isfinite(condition) or condition > CONDITION_LIMIT:
            ridge, fallback = max(ridge, FALLBACK_RIDGE * np.trace(gram) / gram.shape[0]), True
        try:
            factor = cho_factor(gram + ridge * np.diag(penalty))
        except LinAlgError:
            ridge, fallback = max(ridge, FALLBACK_RIDGE * np.trace(gram) / gram.shape[0]), True
            factor = cho_factor(gram + ridge * np.diag(penalty))
        if fallback:
            condition = float(np.linalg.cond(gram + ridge * np.diag(penalty)))
            logger.warning(
                "Ill-conditioned regression at node %d; using ridge %.3e (condition %.3e)",
                node, ridge, condition
            )
        coefficients = cho_solve(factor, moments)
        return design @ coefficients, RegressionDiagnostics(
            node, spec.degree + 1, condition, float(ridge), fallback=fallback
        )

    # ----- partitioned linear -----

    def _fit_partitioned(self, x, targets, node):
        spec = self.spec
        low, high = spec.state_range if spec.state_range is not None else (x.min(), x.max())
        if high > low:
            index = np.clip(np.floor((x - low) / (high - low) * spec.bins).astype(np.int64), 0, spec.bins - 1)
        else:
            index = np.zeros(x.size, dtype=np.int64)

        bins = spec.bins
        count = np.bincount(index, minlength=bins).astype(float)
        occupied = count > 0
        safe = np.where(occupied, count, 1.0)
        mean_x = np.bincount(index, weights=x, minlength=bins) / safe
        centered = x - mean_x[index]
        variance = np.bincount(index, weights=centered * centered, minlength=bins) / safe

        # bins with one point or one distinct state fall back to the bin mean
        linear = (count >= 2) & (variance > (DEGENERATE_SPREAD * np.maximum(1.0, np.abs(mean_x))) ** 2)
        fitted = np.empty_like(targets)
        for column in range(targets.shape[1]):
            y = targets[:, column]
            mean_y = np.bincount(index, weights=y, minlength=bins) / safe
            covariance = np.bincount(index, weights=centered * y, minlength=bins) / safe
            slope = np.where(linear, covariance / np.where(linear, variance + spec.ridge, 1.0), 0.0)
            fitted[:, column] = mean_y[index] + slope[index] * centered

        degenerate_bins = int(np.count_nonzero(occupied & ~linear))
        if degenerate_bins:
            logger.debug("Node %d: %d bins reduced to their mean", node, degenerate_bins)
        return fitted, RegressionDiagnostics(
            node, 2 * bins, float("nan"), spec.ridge,
            degenerate=not linear.any(), degenerate_bins=degenerate_bins
        )
