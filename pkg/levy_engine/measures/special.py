"""
Special functions needed by the inverse Lévy measure representation.
"""

import numpy as np
from scipy.optimize import brentq
from scipy.special import exp1

from levy_engine.errors import DomainError


EXP1_INVERSE_XTOL = 1e-12
EULER_GAMMA = 0.5772156649015329

# Above this level E1^{-1}(s) underflows relative to its asymptotic form
_ASYMPTOTIC_LEVEL = 600.0


def _inverse_exp1_scalar(s: float) -> float:
    if s <= 0:
        raise DomainError(f"E1 inverse is defined for s > 0, got {s}")
    if not np.isfinite(s):
        return 0.0
    if s > _ASYMPTOTIC_LEVEL:
        # E1(y) = -γ - ln y + O(y) as y -> 0
        return float(np.exp(-s - EULER_GAMMA))

    # E1 is strictly decreasing from +inf to 0; bracket the root by doubling
    upper = 1.0
    while exp1(upper) > s:
        upper *= 2.0
    lower = upper / 2.0 if upper > 1.0 else 1.0
    while exp1(lower) < s:
        lower /= 2.0
    if lower == upper:
        return float(lower)
    # solve in log y so the tolerance is relative for tiny roots
    root = brentq(lambda u: exp1(np.exp(u)) - s, np.log(lower), np.log(upper), xtol=EXP1_INVERSE_XTOL)
    return float(np.exp(root))


def inverse_exp1(s):
    """
    Inverse of the exponential integral E1(y) = ∫_y^∞ e^{-u}/u du.

    Solved by bracketed monotone root finding (Brent) on ``scipy.special.exp1``.

    Args:
        s: Positive level(s), scalar or array

    Returns:
        y with E1(y) = s, same shape as ``s``
    """
    values = np.asarray(s, dtype=float)
    if values.ndim == 0:
        return _inverse_exp1_scalar(float(values))
    flat = np.array([_inverse_exp1_scalar(float(v)) for v in values.ravel()])
    return flat.reshape(values.shape)
