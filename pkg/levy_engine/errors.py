"""
Exception hierarchy shared by the Lévy and FBSDE engines.

Configuration and domain problems derive from ``ValueError``; numerical
failures derive from ``ArithmeticError`` so callers (and the study CLI exit
codes) can separate "you asked for something invalid" from "the numbers went
wrong".
"""

from typing import Optional, Tuple


class LevyFbsdeError(Exception):
    """Root of every error raised by this project."""


class ConfigurationError(LevyFbsdeError, ValueError):
    """Invalid configuration, mismatched components or missing closed forms."""


class DomainError(LevyFbsdeError, ValueError):
    """An argument lies outside the domain of an operation."""


class RefinementRequiredError(LevyFbsdeError, ValueError):
    """Two solutions were compared on grids that are not a common refinement."""


class InsufficientSamplesError(LevyFbsdeError, ValueError):
    """Too few Monte Carlo paths for the requested regression basis."""


class IntegrationError(LevyFbsdeError, ArithmeticError):
    """Quadrature of a moment functional failed."""

    def __init__(
        self,
        message: str,
        bounds: Optional[Tuple[float, float]] = None,
        estimate: Optional[float] = None,
        abserr: Optional[float] = None
    ):
        details = []
        if bounds is not None:
            details.append(f"bounds=[{bounds[0]:g}, {bounds[1]:g}]")
        if estimate is not None:
            details.append(f"estimate={estimate:.6e}")
        if abserr is not None:
            details.append(f"abserr={abserr:.3e}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.bounds = bounds
        self.estimate = estimate
        self.abserr = abserr


class NumericError(LevyFbsdeError, ArithmeticError):
    """A coefficient evaluation produced a non-finite value."""

    def __init__(self, message: str, t: Optional[float] = None, x: Optional[float] = None):
        if t is not None or x is not None:
            message = f"{message} at (t={t!r}, x={x!r})"
        super().__init__(message)
        self.t = t
        self.x = x


class CapacityError(LevyFbsdeError, MemoryError):
    """A simulation would exceed the configured memory budget."""


class FixedPointError(LevyFbsdeError, ArithmeticError):
    """Picard iteration for the implicit generator did not converge."""

    def __init__(self, node: int, iterations: int, residual: float):
        super().__init__(
            f"Fixed-point iteration did not converge at node {node} "
            f"after {iterations} iterations (residual {residual:.3e})"
        )
        self.node = node
        self.iterations = iterations
        self.residual = residual


#: Errors that the study CLI maps to exit code 3.
NUMERIC_ERRORS = (
    IntegrationError,
    NumericError,
    CapacityError,
    FixedPointError,
    InsufficientSamplesError,
)
