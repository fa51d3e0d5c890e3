"""
Decoupled FBSDE problem definitions and their structural checks.

A problem bundles the forward coefficients b, a, h (functions of (t, x)), the
generator f(t, x, y, z, q), the terminal function g(x) and the weight ρ(e)
that defines Γ = ∫ρ(e)U(e)e ν(de). All callables must accept numpy arrays
and broadcast.
"""

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from levy_engine.errors import ConfigurationError, NumericError
from levy_engine.measures.models import LevyKind
from levy_engine.shotnoise.representations import SeriesRepresentation


logger = logging.getLogger(__name__)

ForwardCoefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]
Generator = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
TerminalFunction = Callable[[np.ndarray], np.ndarray]
JumpWeight = Callable[[np.ndarray], np.ndarray]


def constant(value: float) -> ForwardCoefficient:
    """Coefficient (t, x) -> value, broadcast to the shape of x."""
    value = float(value)

    def coefficient(t, x):
        return np.full(np.shape(x), value)

    return coefficient


def _first_bad(values: np.ndarray, t, x) -> Tuple[Optional[float], Optional[float]]:
    values, t, x = np.broadcast_arrays(np.asarray(values, dtype=float), np.asarray(t, dtype=float),
                                       np.asarray(x, dtype=float))
    index = int(np.flatnonzero(~np.isfinite(values.ravel()))[0])
    return float(t.ravel()[index]), float(x.ravel()[index])


@dataclass(frozen=True, eq=False)
class FbsdeProblem:
    """
    One FBSDE instance

        X_t = X_0 + ∫ b(s, X_s) ds + ∫ a(s, X_s) dB_s + ∫∫ h(s, X_{s-}) e μ̃(de, ds)
        Y_t = g(X_T) + ∫ f(s, X_s, Y_s, Z_s, Γ_s) ds − ∫ Z dB − ∫∫ U(e) e μ̃(de, ds)

    Attributes:
        name: Identifier used in ledgers
        b, a, h: Drift, diffusion and jump coefficients
        f: Generator
        g: Terminal function
        rho: Jump weight entering Γ
        x0: Initial state
        horizon: T
        lipschitz_K: Declared constant of the regularity assumptions
        hx: Derivative of h in x (optional, enables the invertibility check)
        description: Free-form provenance notes
    """
    name: str
    b: ForwardCoefficient
    a: ForwardCoefficient
    h: ForwardCoefficient
    f: Generator
    g: TerminalFunction
    rho: JumpWeight
    x0: float
    horizon: float
    lipschitz_K: float
    hx: Optional[ForwardCoefficient] = None
    description: str = ""

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ConfigurationError(f"Horizon T must be > 0, got {self.horizon}")
        if not np.isfinite(self.x0):
            raise ConfigurationError(f"Initial state must be finite, got {self.x0}")
        if not np.isfinite(self.lipschitz_K) or self.lipschitz_K <= 0:
            raise ConfigurationError(f"Lipschitz constant K must be > 0, got {self.lipschitz_K}")

    def coefficients(self, t, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Evaluate (b, a, h) at (t, x).

        Raises:
            NumericError: if any value is non-finite, with the offending (t, x)
        """
        values = []
        for name, coefficient in (("b", self.b), ("a", self.a), ("h", self.h)):
            value = np.asarray(coefficient(t, x), dtype=float)
            if not np.all(np.isfinite(value)):
                bad_t, bad_x = _first_bad(value, t, x)
                raise NumericError(f"Coefficient {name} is not finite", t=bad_t, x=bad_x)
            values.append(value)
        return values[0], values[1], values[2]

    def generator(self, t, x, y, z, q) -> np.ndarray:
        value = np.asarray(self.f(t, x, y, z, q), dtype=float)
        if not np.all(np.isfinite(value)):
            bad_t, bad_x = _first_bad(value, t, x)
            raise NumericError("Generator f is not finite", t=bad_t, x=bad_x)
        return np.broadcast_to(value, np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def terminal(self, x) -> np.ndarray:
        value = np.asarray(self.g(x), dtype=float)
        if not np.all(np.isfinite(value)):
            bad_t, bad_x = _first_bad(value, self.horizon, x)
            raise NumericError("Terminal function g is not finite", t=bad_t, x=bad_x)
        return np.broadcast_to(value, np.shape(x)).copy()

    def jump_weight(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        return np.broadcast_to(np.asarray(self.rho(e), dtype=float), e.shape)


# ----- invertibility of ℓ(t, x; e) = h_x(t, x) e + 1 -----

class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_CHECKABLE = "not_checkable"


@dataclass(frozen=True)
class SampleSpec:
    """
    Deterministic sampling design for structural checks.

    Attributes:
        t_points: Number of equally spaced times on [0, T]
        x_range: State interval searched
        x_points: Number of equally spaced states
        epoch_points: Epoch levels used for jump-size quantile proxies
        mark_points: Mark quantiles per mark coordinate
        e_values: Explicit jump sizes (replaces the ν^n proxies when given)
    """
    t_points: int = 11
    x_range: Tuple[float, float] = (-5.0, 5.0)
    x_points: int = 101
    epoch_points: int = 64
    mark_points: int = 16
    e_values: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.t_points < 1 or self.x_points < 1 or self.epoch_points < 1 or self.mark_points < 1:
            raise ConfigurationError("Sample counts must be positive")
        if not self.x_range[0] <= self.x_range[1]:
            raise ConfigurationError(f"Invalid x_range {self.x_range}")


@dataclass(frozen=True)
class InvertibilityReport:
    """
    Outcome of the invertibility check.

    The check is advisory: a failure means the full N^{-1/2} rate for Z is
    not expected, not that the scheme is invalid.
    """
    status: CheckStatus
    min_abs_ell: Optional[float] = None
    min_ell: Optional[float] = None
    max_ell: Optional[float] = None
    bound: Optional[float] = None
    sign: Optional[str] = None
    worst_point: Optional[Tuple[float, float, float]] = None
    samples: int = 0
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status == CheckStatus.PASS

    def as_dict(self) -> dict:
        values = asdict(self)
        values["status"] = self.status.value
        return values


def jump_size_proxies(representation: SeriesRepresentation, n: float, spec: SampleSpec) -> np.ndarray:
    """
    Deterministic jump sizes spread like ν^n: H evaluated on midpoint epochs
    in (0, n] crossed with mark quantiles. Structural zeros are dropped.
    """
    model = representation.model
    if model.kind == LevyKind.COMPOUND_POISSON_TEST:
        sizes, kept = representation.atom_retained_masses(n)
        return sizes[kept > 0]
    epochs = (np.arange(spec.epoch_points) + 0.5) / spec.epoch_points * n
    quantiles = (np.arange(spec.mark_points) + 0.5) / spec.mark_points
    dimension = representation.mark_dimension
    if dimension == 0:
        grid_epochs, uniforms = epochs, np.zeros((epochs.size, 0))
    else:
        mesh = np.meshgrid(*([quantiles] * dimension), indexing="ij")
        mark_grid = np.stack([m.ravel() for m in mesh], axis=1)
        grid_epochs = np.repeat(epochs, mark_grid.shape[0])
        uniforms = np.tile(mark_grid, (epochs.size, 1))
    sizes = representation.jump_size(grid_epochs, representation.marks_from_uniforms(uniforms))
    return sizes[sizes != 0.0]


def validate_invertibility(
    problem: FbsdeProblem,
    representation: SeriesRepresentation,
    n: float,
    sample_spec: Optional[SampleSpec] = None
) -> InvertibilityReport:
    """
    Check that ℓ(t, x; e) = h_x(t, x)e + 1 stays on one side of ±K^{-1}.

    Args:
        problem: Problem with ``hx`` set
        representation: Series representation of the driving Lévy model
        n: Truncation level used for the jump-size proxies
        sample_spec: Sampling design (defaults to ``SampleSpec()``)

    Returns:
        InvertibilityReport; ``not_checkable`` when ``hx`` is missing
    """
    spec = sample_spec or SampleSpec()
    if problem.hx is None:
        logger.warning("Problem %s has no hx; invertibility cannot be checked", problem.name)
        return InvertibilityReport(
            status=CheckStatus.NOT_CHECKABLE,
            message="h_x not provided; the invertibility condition was not checked"
        )

    if spec.e_values is not None:
        e = np.asarray(spec.e_values, dtype=float)
    else:
        e = jump_size_proxies(representation, n, spec)
    if e.size == 0:
        return InvertibilityReport(status=CheckStatus.PASS, bound=1.0 / problem.lipschitz_K,
                                 message="No jumps retained; ℓ ≡ 1")

    t = np.linspace(0.0, problem.horizon, spec.t_points)
    x = np.linspace(spec.x_range[0], spec.x_range[1], spec.x_points)
    tt, xx = np.meshgrid(t, x, indexing="ij")
    slope = np.broadcast_to(np.asarray(problem.hx(tt, xx), dtype=float), tt.shape)
    ell = slope[..., None] * e[None, None, :] + 1.0

    bound = 1.0 / problem.lipschitz_K
    low, high = float(ell.min()), float(ell.max())
    worst = np.unravel_index(int(np.argmin(np.abs(ell))), ell.shape)
    worst_point = (float(t[worst[0]]), float(x[worst[1]]), float(e[worst[2]]))

    if low >= bound:
        status, sign = CheckStatus.PASS, "positive"
    elif high <= -bound:
        status, sign = CheckStatus.PASS, "negative"
    else:
        status, sign = CheckStatus.FAIL, None

    message = (
        f"ℓ ranges over [{low:.4g}, {high:.4g}] against K^-1 = {bound:.4g}"
        if status == CheckStatus.PASS
        else f"ℓ crosses (-K^-1, K^-1) = ({-bound:.4g}, {bound:.4g}); "
             f"closest to zero at (t, x, e) = {worst_point}"
    )
    if status == CheckStatus.FAIL:
        logger.info("Invertibility check failed for %s: %s", problem.name, message)
    return InvertibilityReport(
        status=status,
        min_abs_ell=float(np.abs(ell).min()),
        min_ell=low,
        max_ell=high,
        bound=bound,
        sign=sign,
        worst_point=worst_point,
        samples=int(ell.size),
        message=message
    )


# ----- Lipschitz and weight-bound spot checks -----

@dataclass(frozen=True)
class LipschitzReport:
    """Finite-difference Lipschitz estimates compared against the declared K."""
    declared_K: float
    estimates: Dict[str, float]
    violations: List[str] = field(default_factory=list)
    rho_violations: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return not self.violations and not self.rho_violations


def _difference_quotient(func, *args, index, step):
    shifted_up = list(args)
    shifted_down = list(args)
    shifted_up[index] = args[index] + step
    shifted_down[index] = args[index] - step
    return np.abs(np.asarray(func(*shifted_up)) - np.asarray(func(*shifted_down))) / (2.0 * step)


def estimate_lipschitz(
    problem: FbsdeProblem,
    x_range: Tuple[float, float] = (-5.0, 5.0),
    value_range: float = 5.0,
    samples: int = 2000,
    seed: int = 0,
    step: float = 1e-6,
    tolerance: float = 1e-3
) -> LipschitzReport:
    """
    Spot-check the declared K on a random box: central differences of
    b, a, h, g in x and of f in each of (x, y, z, q), plus the bound
    |ρ(e)| ≤ K min(1, |e|) on a log-spaced e-grid.

    This is a sampling-based plausibility check, not a proof.
    """
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, problem.horizon, samples)
    x = rng.uniform(x_range[0], x_range[1], samples)
    y, z, q = (rng.uniform(-value_range, value_range, samples) for _ in range(3))

    estimates = {
        "b": float(_difference_quotient(problem.b, t, x, index=1, step=step).max()),
        "a": float(_difference_quotient(problem.a, t, x, index=1, step=step).max()),
        "h": float(_difference_quotient(problem.h, t, x, index=1, step=step).max()),
        "g": float(_difference_quotient(problem.g, x, index=0, step=step).max()),
    }
    for index, name in enumerate(["f_x", "f_y", "f_z", "f_q"], start=1):
        estimates[name] = float(_difference_quotient(problem.f, t, x, y, z, q, index=index, step=step).max())

    limit = problem.lipschitz_K * (1.0 + tolerance)
    violations = [name for name, value in estimates.items() if value > limit]

    magnitudes = np.logspace(-6, 3, 200)
    e_grid = np.concatenate((-magnitudes[::-1], magnitudes))
    weights = np.abs(problem.jump_weight(e_grid))
    allowed = problem.lipschitz_K * np.minimum(1.0, np.abs(e_grid)) * (1.0 + tolerance)
    rho_violations = [(float(e), float(w)) for e, w, c in zip(e_grid, weights, allowed) if w > c]

    if violations or rho_violations:
        logger.warning(
            "Declared K=%g looks too small for %s: %s%s", problem.lipschitz_K, problem.name,
            ", ".join(violations) or "-", f", rho bound fails at {len(rho_violations)} points" if rho_violations else ""
        )
    return LipschitzReport(
        declared_K=problem.lipschitz_K,
        estimates=estimates,
        violations=violations,
        rho_violations=rho_violations
    )
