"""
Lévy measures and the moment functionals of their truncations.
"""

from levy_engine.measures.models import LevyKind, LevyModel
from levy_engine.measures.special import inverse_exp1
from levy_engine.measures.moments import (
    TruncationMoments,
    truncated_measure_mass,
    discarded_moment,
    retained_moment,
    retained_signed_first_moment,
    retained_weighted_moment,
    centering_drift,
    full_moment,
    truncation_moments,
    moments_table
)

__all__ = [
    "LevyKind",
    "LevyModel",
    "inverse_exp1",
    "TruncationMoments",
    "truncated_measure_mass",
    "discarded_moment",
    "retained_moment",
    "retained_signed_first_moment",
    "retained_weighted_moment",
    "centering_drift",
    "full_moment",
    "truncation_moments",
    "moments_table"
]
