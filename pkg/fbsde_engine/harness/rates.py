"""
Convergence-rate fits and the predicted error shapes they are compared with.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.stats import linregress

from levy_engine.errors import DomainError
from levy_engine.measures.moments import TruncationMoments


class RateScale(str, Enum):
    LOGLOG = "loglog"
    SEMILOG = "semilog"


@dataclass(frozen=True)
class RateFit:
    """
    Least-squares line through the transformed points.

    On ``loglog`` the slope is the exponent of err ≈ C·x^slope; on
    ``semilog`` it is the decay rate of err ≈ C·e^{slope·x}.
    """
    slope: float
    intercept: float
    r_squared: float
    stderr: float
    scale: RateScale
    points: int

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.scale == RateScale.LOGLOG:
            return np.exp(self.intercept) * x ** self.slope
        return np.exp(self.intercept + self.slope * x)

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "stderr": self.stderr,
            "scale": self.scale.value,
            "points": self.points,
        }


def rate_fit(x: Sequence[float], errors: Sequence[float], scale: str = "loglog") -> RateFit:
    """
    Fit log(err) against log(x) (``loglog``) or against x (``semilog``).

    Raises:
        DomainError: with fewer than 3 points or nonpositive values
    """
    scale = RateScale(scale)
    x = np.asarray(x, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if x.shape != errors.shape or x.ndim != 1:
        raise DomainError(f"Need matching 1-d inputs, got shapes {x.shape} and {errors.shape}")
    if x.size < 3:
        raise DomainError(f"A rate fit needs at least 3 points, got {x.size}")
    if not np.all(np.isfinite(errors)) or np.any(errors <= 0):
        raise DomainError(f"Errors must be finite and positive, got {errors.tolist()}")
    if scale == RateScale.LOGLOG and np.any(x <= 0):
        raise DomainError(f"Log-log fits need positive abscissae, got {x.tolist()}")

    abscissa = np.log(x) if scale == RateScale.LOGLOG else x
    result = linregress(abscissa, np.log(errors))
    return RateFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r_squared=float(result.rvalue ** 2),
        stderr=float(result.stderr),
        scale=scale,
        points=int(x.size)
    )


def predicted_error_shape(moments: TruncationMoments, steps: int) -> float:
    """
    Order of the total approximation-discretization error:
    N^{-1/2} + σ^p(n)^{1/p} + σ²(n)^{1/2} + N^{-1}𝔪¹(n).
    """
    return (steps ** -0.5 + moments.sigma_p ** (1.0 / moments.p) + np.sqrt(moments.sigma2)
            + moments.m1_abs / steps)


def predicted_truncation_shape(moments: TruncationMoments) -> float:
    """n-dependent part of the backward error: σ^p(n)^{1/p} + σ²(n)^{1/2}."""
    return moments.sigma_p ** (1.0 / moments.p) + np.sqrt(moments.sigma2)


def predicted_forward_shape(moments: TruncationMoments, steps: int) -> float:
    """Order of the forward bound E[sup|X − X^{n,π}|^p]: N^{-p/2} + N^{-p}𝔪¹(n)^p."""
    p = moments.p
    return steps ** (-p / 2.0) + steps ** -p * moments.m1_abs ** p
