"""
Error norms, reference solutions, rate fits and convergence studies.
"""

from fbsde_engine.harness.norms import (
    ErrorReport,
    batch_interval,
    empirical_norms,
    forward_error,
    forward_samples,
    integrated_norm,
    mean_sup_norm,
    sup_mean_norm
)
from fbsde_engine.harness.rates import (
    RateFit,
    RateScale,
    rate_fit,
    predicted_error_shape,
    predicted_forward_shape,
    predicted_truncation_shape
)
from fbsde_engine.harness.reference import (
    ReferenceMode,
    ReferenceSolution,
    closed_form_reference,
    fine_reference,
    reference_solution
)
from fbsde_engine.harness.studies import (
    LEDGER_COLUMNS,
    PLOT_COLUMNS,
    StudyResult,
    StudySetup,
    benchmark_study,
    forward_rate_study,
    backward_rate_study,
    truncation_study
)

__all__ = [
    "ErrorReport",
    "batch_interval",
    "empirical_norms",
    "forward_error",
    "forward_samples",
    "integrated_norm",
    "mean_sup_norm",
    "sup_mean_norm",
    "RateFit",
    "RateScale",
    "rate_fit",
    "predicted_error_shape",
    "predicted_forward_shape",
    "predicted_truncation_shape",
    "ReferenceMode",
    "ReferenceSolution",
    "closed_form_reference",
    "fine_reference",
    "reference_solution",
    "LEDGER_COLUMNS",
    "PLOT_COLUMNS",
    "StudyResult",
    "StudySetup",
    "benchmark_study",
    "forward_rate_study",
    "backward_rate_study",
    "truncation_study"
]
