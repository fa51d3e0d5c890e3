"""
Lévy Engine

This package provides Lévy measures, their generalized shot noise series
representations, truncation moment functionals and per-path jump skeletons.
"""

__version__ = "0.1.0"

from levy_engine.errors import (
    LevyFbsdeError,
    ConfigurationError,
    DomainError,
    IntegrationError,
    NumericError,
    CapacityError,
    InsufficientSamplesError,
    FixedPointError,
    RefinementRequiredError,
    NUMERIC_ERRORS
)
from levy_engine.measures import (
    LevyKind,
    LevyModel,
    TruncationMoments,
    truncated_measure_mass,
    discarded_moment,
    retained_moment,
    retained_signed_first_moment,
    truncation_moments,
    moments_table
)
from levy_engine.shotnoise import (
    SeriesMethod,
    SeriesRepresentation,
    default_representation,
    JumpSkeleton,
    sample_epochs,
    sample_skeleton
)

__all__ = [
    "LevyFbsdeError",
    "ConfigurationError",
    "DomainError",
    "IntegrationError",
    "NumericError",
    "CapacityError",
    "InsufficientSamplesError",
    "FixedPointError",
    "RefinementRequiredError",
    "NUMERIC_ERRORS",
    "LevyKind",
    "LevyModel",
    "TruncationMoments",
    "truncated_measure_mass",
    "discarded_moment",
    "retained_moment",
    "retained_signed_first_moment",
    "truncation_moments",
    "moments_table",
    "SeriesMethod",
    "SeriesRepresentation",
    "default_representation",
    "JumpSkeleton",
    "sample_epochs",
    "sample_skeleton"
]
