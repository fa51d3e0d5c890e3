"""
Moment functionals of the truncated and discarded Lévy measures.

For a representation H and truncation level n,

    ν^n(B) = ∫_0^n P[H(r, V) ∈ B] dr        (retained, mass n)
    ν̄^n    = ν − ν^n                          (discarded small jumps)

    σ^q(n) = ∫_n^∞ E|H(r, V)|^q dr,   𝔪^q(n) = ∫_0^n E|H(r, V)|^q dr,
    ζ(n)   = ∫_0^n E[H(r, V)] dr  (drift compensating the retained jumps)

The outer r-integral is computed by adaptive Gauss-Kronrod quadrature
(``scipy.integrate.quad``); the inner expectation over marks is analytic or
itself a deterministic quadrature (see ``SeriesRepresentation``).
"""

import logging
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, Iterable, List, Optional

import numpy as np
import pandas as pd
from scipy.integrate import quad

from levy_engine.errors import ConfigurationError, DomainError, IntegrationError
from levy_engine.measures.models import LevyKind, LevyModel

if TYPE_CHECKING:
    from levy_engine.shotnoise.representations import SeriesRepresentation


logger = logging.getLogger(__name__)

QUAD_EPSREL = 1e-10
QUAD_LIMIT = 400
# Accepted relative error when QUADPACK reports a warning
ACCEPTABLE_RELATIVE_ERROR = 1e-8
MONTE_CARLO_SAMPLES = 200_000


@dataclass(frozen=True)
class QuadratureResult:
    """Value of a moment functional with its error estimate and method."""
    value: float
    abserr: float
    method: str = "quadrature"
    stderr: Optional[float] = None


@dataclass(frozen=True)
class TruncationMoments:
    """
    Moments of the retained and discarded measures at one truncation level.

    Attributes:
        n: Truncation level (Poisson-epoch cutoff, per unit time)
        p: Moment order of the L^p analysis
        sigma2: σ²(n), second moment of the discarded measure
        sigma_p: σ^p(n), p-th moment of the discarded measure
        m1_abs: 𝔪¹(n), first absolute moment of the retained measure
        m_p: 𝔪^p(n), p-th moment of the retained measure
        zeta1: ζ(n), signed first moment of the retained measure
    """
    n: float
    p: float
    sigma2: float
    sigma_p: float
    m1_abs: float
    m_p: float
    zeta1: float

    def as_row(self) -> dict:
        return asdict(self)


def _check_pair(model: LevyModel, representation: "SeriesRepresentation"):
    if representation.model != model:
        raise ConfigurationError(
            f"Representation {representation.identifier} does not belong to model {model.identifier}"
        )


def _check_order(q: float):
    if q < 1:
        raise DomainError(f"Moment order q must be >= 1, got {q}")


def _monte_carlo_tail(integrand: Callable[[float], float], lower: float, scale: float,
                      samples: int = MONTE_CARLO_SAMPLES, seed: int = 0) -> QuadratureResult:
    """Importance-sampled estimate of ∫_lower^∞ integrand(r) dr with r − lower ~ Exp(scale)."""
    rng = np.random.default_rng(seed)
    offsets = rng.exponential(scale, size=samples)
    density = np.exp(-offsets / scale) / scale
    values = np.array([integrand(lower + offset) for offset in offsets]) / density
    estimate = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(samples))
    return QuadratureResult(value=estimate, abserr=3.0 * stderr, method="monte_carlo", stderr=stderr)


def integrate_epochs(integrand: Callable[[float], float], lower: float, upper: float,
                     tail_scale: Optional[float] = None,
                     allow_monte_carlo: bool = False) -> QuadratureResult:
    """
    Integrate an epoch-density over [lower, upper] (upper may be infinite).

    Args:
        integrand: r -> E[...] at epoch level r
        lower: Lower bound
        upper: Upper bound (``np.inf`` allowed)
        tail_scale: Decay scale of the integrand, used for the Monte Carlo fallback
        allow_monte_carlo: Fall back to importance sampling when quadrature fails

    Returns:
        QuadratureResult
    """
    if upper <= lower:
        return QuadratureResult(value=0.0, abserr=0.0)

    value, abserr, info, *rest = quad(
        integrand, lower, upper, epsabs=0.0, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT, full_output=1
    )
    if not rest:
        return QuadratureResult(value=float(value), abserr=float(abserr))

    message = rest[0]
    if np.isfinite(value) and abserr <= ACCEPTABLE_RELATIVE_ERROR * max(abs(value), 1e-300):
        logger.debug("Quadrature warning on [%g, %g] accepted: %s", lower, upper, message)
        return QuadratureResult(value=float(value), abserr=float(abserr))

    if allow_monte_carlo and not np.isfinite(upper) and tail_scale is not None:
        logger.warning("Quadrature on [%g, inf) failed (%s); using Monte Carlo fallback", lower, message)
        return _monte_carlo_tail(integrand, lower, tail_scale)

    raise IntegrationError(
        f"Moment quadrature failed, representation may be mis-specified: {message}",
        bounds=(lower, upper), estimate=float(value), abserr=float(abserr)
    )


def _tail_scale(representation: "SeriesRepresentation", q: float) -> Optional[float]:
    model = representation.model
    if model.kind == LevyKind.GAMMA:
        return model.alpha / q
    return None


@lru_cache(maxsize=4096)
def _discarded(representation: "SeriesRepresentation", n: float, q: float) -> float:
    model = representation.model
    if model.kind == LevyKind.COMPOUND_POISSON_TEST:
        sizes, kept = representation.atom_retained_masses(n)
        masses = np.array([mass for _, mass in sorted(model.atoms, key=lambda a: -abs(a[0]))])
        return float(np.sum(np.abs(sizes) ** q * (masses - kept)))
    if n == 0.0:
        return model.full_moment(q)
    result = integrate_epochs(
        lambda r: representation.moment_integrand(r, q), n, np.inf,
        tail_scale=_tail_scale(representation, q), allow_monte_carlo=True
    )
    return result.value


@lru_cache(maxsize=4096)
def _retained(representation: "SeriesRepresentation", n: float, q: float) -> float:
    model = representation.model
    if n == 0.0:
        return 0.0
    if model.kind == LevyKind.COMPOUND_POISSON_TEST:
        sizes, kept = representation.atom_retained_masses(n)
        return float(np.sum(np.abs(sizes) ** q * kept))
    if not np.isfinite(n):
        return model.full_moment(q)
    return integrate_epochs(lambda r: representation.moment_integrand(r, q), 0.0, n).value


def discarded_moment(model: LevyModel, representation: "SeriesRepresentation", n: float, q: float) -> float:
    """
    σ^q(n) = ∫|e|^q ν̄^n(de), the q-th moment of the discarded jumps.

    Args:
        model: Lévy model
        representation: Series representation of ``model``
        n: Truncation level (>= 0)
        q: Moment order (>= 1)

    Returns:
        Nonnegative float
    """
    _check_pair(model, representation)
    _check_order(q)
    if n < 0:
        raise DomainError(f"Truncation level must be >= 0, got {n}")
    return _discarded(representation, float(n), float(q))


def retained_moment(model: LevyModel, representation: "SeriesRepresentation", n: float, q: float) -> float:
    """𝔪^q(n) = ∫|e|^q ν^n(de), the q-th moment of the retained jumps."""
    _check_pair(model, representation)
    _check_order(q)
    if n < 0:
        raise DomainError(f"Truncation level must be >= 0, got {n}")
    return _retained(representation, float(n), float(q))


@lru_cache(maxsize=4096)
def _signed_first(representation: "SeriesRepresentation", n: float) -> float:
    model = representation.model
    if n == 0.0:
        return 0.0
    if model.kind == LevyKind.COMPOUND_POISSON_TEST:
        sizes, kept = representation.atom_retained_masses(n)
        return float(np.sum(sizes * kept))
    return _retained(representation, n, 1.0)


def retained_signed_first_moment(model: LevyModel, representation: "SeriesRepresentation", n: float) -> float:
    """
    ζ(n) = ∫ e ν^n(de). Equals 𝔪¹(n) for nonnegative jumps; the compensated
    jump integral over (s, t] is realized as Σ jumps − (t − s)·ζ(n).
    """
    _check_pair(model, representation)
    if n < 0:
        raise DomainError(f"Truncation level must be >= 0, got {n}")
    return _signed_first(representation, float(n))


def retained_weighted_moment(representation: "SeriesRepresentation", n: float,
                             weight: Callable[[np.ndarray], np.ndarray]) -> float:
    """
    ∫ w(e) ν^n(de) for a general weight, e.g. ζ_ρ(n) = ∫ ρ(e) e ν^n(de).
    """
    if n < 0:
        raise DomainError(f"Truncation level must be >= 0, got {n}")
    if n == 0:
        return 0.0
    model = representation.model
    if model.kind == LevyKind.COMPOUND_POISSON_TEST:
        sizes, kept = representation.atom_retained_masses(n)
        return float(np.sum(np.asarray(weight(sizes), dtype=float) * kept))
    return integrate_epochs(lambda r: representation.expected_value(r, weight), 0.0, float(n)).value


def centering_drift(representation: "SeriesRepresentation", n: float) -> float:
    """
    Accumulated centering ∫_0^n E[H(r,V) 1(|H(r,V)| ≤ 1)] dr, i.e. the sum of
    the centering constants c_i over the retained epochs. Zero for
    uncentered representations.
    """
    if not representation.centered:
        return 0.0
    return retained_weighted_moment(representation, n, lambda e: e * (np.abs(e) <= 1.0))


def truncated_measure_mass(model: LevyModel, n: float) -> float:
    """
    ν^n(ℝ), which equals n by the random-truncation construction (capped by
    the total mass of an atomic measure).
    """
    if n <= 0:
        raise DomainError(f"Truncation level must be > 0, got {n}")
    return float(min(n, model.total_mass))


def full_moment(model: LevyModel, q: float) -> float:
    """∫|e|^q ν(de) in closed form."""
    return model.full_moment(q)


def truncation_moments(model: LevyModel, representation: "SeriesRepresentation", n: float,
                       p: Optional[float] = None) -> TruncationMoments:
    """Collect σ², σ^p, 𝔪¹, 𝔪^p and ζ at level n."""
    p = float(model.moment_order_p if p is None else p)
    return TruncationMoments(
        n=float(n),
        p=p,
        sigma2=discarded_moment(model, representation, n, 2.0),
        sigma_p=discarded_moment(model, representation, n, p),
        m1_abs=retained_moment(model, representation, n, 1.0),
        m_p=retained_moment(model, representation, n, p),
        zeta1=retained_signed_first_moment(model, representation, n),
    )


def moments_table(model: LevyModel, representations: Iterable["SeriesRepresentation"],
                  levels: Iterable[float], p: Optional[float] = None) -> pd.DataFrame:
    """
    Moment table with columns (representation, n, sigma2, sigma_p, m1_abs, m_p, zeta1).
    """
    rows: List[dict] = []
    for representation in representations:
        for n in levels:
            row = {"representation": representation.method.value}
            row.update(truncation_moments(model, representation, n, p).as_row())
            rows.append(row)
    return pd.DataFrame(rows, columns=["representation", "n", "p", "sigma2", "sigma_p", "m1_abs", "m_p", "zeta1"])


# ----- closed forms for the gamma Bondesson representation -----

def bondesson_sigma2(alpha: float, beta: float, n: float) -> float:
    """σ²(n) = (α/β²) e^{-2n/α} for the Bondesson representation."""
    return alpha / beta ** 2 * np.exp(-2.0 * n / alpha)


def bondesson_m1(alpha: float, beta: float, n: float) -> float:
    """𝔪¹(n) = (α/β)(1 − e^{-n/α}) for the Bondesson representation."""
    return alpha / beta * -np.expm1(-n / alpha)
