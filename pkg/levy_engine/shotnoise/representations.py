"""
Generalized shot noise series representations.

A representation is a map H(r, v) with ν(B) = ∫_0^∞ P[H(r, V) ∈ B] dr, where
r ↦ |H(r, v)| is nonincreasing for every mark v. Random epochs r are Poisson
arrival times rescaled to unit time, so truncating at r ≤ n keeps exactly
mass n of the Lévy measure.

Supported pairs:
    gamma            -> inverse_levy, rejection, thinning, bondesson
    tempered_stable  -> rosinski_tempered_stable
    compound_poisson -> inverse_levy (step function over the atoms)
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn
from scipy.special import gammainc

from levy_engine.errors import ConfigurationError, DomainError
from levy_engine.measures.models import LevyKind, LevyModel
from levy_engine.measures.special import inverse_exp1


class SeriesMethod(str, Enum):
    INVERSE_LEVY = "inverse_levy"
    REJECTION = "rejection"
    THINNING = "thinning"
    BONDESSON = "bondesson"
    ROSINSKI_TEMPERED_STABLE = "rosinski_tempered_stable"


class MarkKind(str, Enum):
    DEGENERATE = "degenerate"
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"
    EXPONENTIAL_UNIFORM = "exponential_uniform"


_SUPPORTED_METHODS = {
    LevyKind.GAMMA: {
        SeriesMethod.INVERSE_LEVY,
        SeriesMethod.REJECTION,
        SeriesMethod.THINNING,
        SeriesMethod.BONDESSON,
    },
    LevyKind.TEMPERED_STABLE: {SeriesMethod.ROSINSKI_TEMPERED_STABLE},
    LevyKind.COMPOUND_POISSON_TEST: {SeriesMethod.INVERSE_LEVY},
}

_MARK_KINDS = {
    SeriesMethod.INVERSE_LEVY: MarkKind.DEGENERATE,
    SeriesMethod.REJECTION: MarkKind.UNIFORM,
    SeriesMethod.THINNING: MarkKind.EXPONENTIAL,
    SeriesMethod.BONDESSON: MarkKind.EXPONENTIAL,
    SeriesMethod.ROSINSKI_TEMPERED_STABLE: MarkKind.EXPONENTIAL_UNIFORM,
}

_MARK_DIMENSIONS = {
    MarkKind.DEGENERATE: 0,
    MarkKind.UNIFORM: 1,
    MarkKind.EXPONENTIAL: 1,
    MarkKind.EXPONENTIAL_UNIFORM: 2,
}

_INNER_EPSREL = 1e-10
# exp(-700) underflows every moment we integrate
_NEGLIGIBLE_EXPONENT = 700.0


@dataclass(frozen=True)
class SeriesRepresentation:
    """
    A series representation H(r, V) of a Lévy model.

    Attributes:
        model: The Lévy model represented
        method: Which representation of that model
        centered: Whether centering constants are subtracted from L^n
            (all shipped subordinator examples use zero centering)
        mark_kind: Distribution of V; must agree with the method when given
    """
    model: LevyModel
    method: SeriesMethod
    centered: bool = False
    mark_kind: Optional[MarkKind] = None

    def __post_init__(self):
        method = SeriesMethod(self.method)
        object.__setattr__(self, "method", method)
        supported = _SUPPORTED_METHODS[self.model.kind]
        if method not in supported:
            names = ", ".join(sorted(m.value for m in supported))
            raise ConfigurationError(
                f"Method {method.value!r} is not available for {self.model.kind.value}; "
                f"choose one of: {names}"
            )
        expected = _MARK_KINDS[method]
        if self.mark_kind is None:
            object.__setattr__(self, "mark_kind", expected)
        elif MarkKind(self.mark_kind) != expected:
            raise ConfigurationError(
                f"Mark sampler {MarkKind(self.mark_kind).value!r} does not match method "
                f"{method.value!r} (expects {expected.value!r})"
            )

    @property
    def mark_dimension(self) -> int:
        return _MARK_DIMENSIONS[self.mark_kind]

    @property
    def produces_structural_zeros(self) -> bool:
        """Rejection and thinning emit zero jumps for rejected proposals."""
        return self.method in (SeriesMethod.REJECTION, SeriesMethod.THINNING)

    @property
    def identifier(self) -> str:
        return f"{self.model.identifier}/{self.method.value}"

    # ----- marks -----

    def marks_from_uniforms(self, uniforms: np.ndarray) -> np.ndarray:
        """Transform U(0,1) draws of shape (k, mark_dimension) into marks V."""
        uniforms = np.asarray(uniforms, dtype=float)
        if self.mark_kind == MarkKind.DEGENERATE:
            return np.zeros((uniforms.shape[0], 0))
        marks = uniforms.copy()
        if self.mark_kind in (MarkKind.EXPONENTIAL, MarkKind.EXPONENTIAL_UNIFORM):
            marks[:, 0] = -np.log1p(-uniforms[:, 0])
        return marks

    def sample_marks(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """
        Draw ``count`` i.i.d. marks.

        Marks are built from one row of uniforms per epoch, so the first k marks
        are the same whatever ``count`` is requested (prefix coupling).
        """
        if self.mark_dimension == 0:
            return np.zeros((count, 0))
        return self.marks_from_uniforms(rng.random((count, self.mark_dimension)))

    # ----- jump sizes -----

    def _atom_table(self):
        atoms = sorted(self.model.atoms, key=lambda atom: -abs(atom[0]))
        sizes = np.array([size for size, _ in atoms])
        cumulative = np.cumsum([mass for _, mass in atoms])
        return sizes, cumulative

    def atom_retained_masses(self, n: float):
        """Per-atom mass kept by truncation at level n (compound Poisson only)."""
        sizes, cumulative = self._atom_table()
        previous = np.concatenate(([0.0], cumulative[:-1]))
        return sizes, np.clip(n - previous, 0.0, cumulative - previous)

    def jump_size(self, r, marks: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Evaluate H(r, v) for epochs r (unit-time scale) and marks v.

        Zero is returned for rejected proposals of the rejection and thinning
        methods and for epochs beyond the mass of an atomic measure.
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r < 0):
            raise DomainError("Epochs must be nonnegative")
        model = self.model
        if marks is None:
            marks = np.zeros((r.size, self.mark_dimension))

        if self.method == SeriesMethod.INVERSE_LEVY:
            if model.kind == LevyKind.COMPOUND_POISSON_TEST:
                sizes, cumulative = self._atom_table()
                index = np.searchsorted(cumulative, r, side="left")
                padded = np.concatenate((sizes, [0.0]))
                return padded[np.minimum(index, sizes.size)]
            return inverse_exp1(r / model.alpha) / model.beta

        if self.method == SeriesMethod.REJECTION:
            with np.errstate(divide="ignore", over="ignore"):
                proposal = 1.0 / (model.beta * np.expm1(r / model.alpha))
                acceptance = (1.0 + model.beta * proposal) * np.exp(-model.beta * proposal)
            acceptance = np.nan_to_num(acceptance, nan=0.0)
            return np.where(marks[:, 0] <= acceptance, proposal, 0.0)

        if self.method == SeriesMethod.THINNING:
            v = marks[:, 0]
            return np.where(v * r <= model.alpha, v / model.beta, 0.0)

        if self.method == SeriesMethod.BONDESSON:
            return np.exp(-r / model.alpha) * marks[:, 0] / model.beta

        # Rosinski tempered stable: ((α r/δ)^{-1/α}) ∧ (V U^{1/α}/λ)
        with np.errstate(divide="ignore"):
            stable_part = (model.alpha * r / model.delta) ** (-1.0 / model.alpha)
        tempered_part = marks[:, 0] * marks[:, 1] ** (1.0 / model.alpha) / model.lam
        return np.minimum(stable_part, tempered_part)

    # ----- expectations over the mark distribution -----

    def moment_integrand(self, r: float, q: float) -> float:
        """
        E[|H(r, V)|^q] for one epoch level r, analytic in the mark variable.
        """
        model = self.model
        method = self.method

        if model.kind == LevyKind.COMPOUND_POISSON_TEST:
            return float(abs(self.jump_size(r)[0]) ** q)

        if method == SeriesMethod.INVERSE_LEVY:
            return float((inverse_exp1(r / model.alpha) / model.beta) ** q) if r > 0 else float("inf")

        if method == SeriesMethod.REJECTION:
            if r <= 0:
                return 0.0
            proposal = 1.0 / (model.beta * np.expm1(r / model.alpha))
            if model.beta * proposal > _NEGLIGIBLE_EXPONENT:
                return 0.0
            acceptance = (1.0 + model.beta * proposal) * np.exp(-model.beta * proposal)
            return float(proposal ** q * acceptance)

        if method == SeriesMethod.THINNING:
            level = np.inf if r <= 0 else model.alpha / r
            return float(model.beta ** (-q) * gamma_fn(q + 1.0) * gammainc(q + 1.0, level))

        if method == SeriesMethod.BONDESSON:
            return float(model.beta ** (-q) * gamma_fn(q + 1.0) * np.exp(-q * r / model.alpha))

        # Rosinski: E[min(a, cV)^q] = c^q Γ(q+1) P(q+1, a/c) + a^q e^{-a/c}, c = U^{1/α}/λ
        alpha, lam = model.alpha, model.lam
        if r <= 0:
            return float(gamma_fn(q + 1.0) * lam ** (-q) / (1.0 + q / alpha))
        cap = (alpha * r / model.delta) ** (-1.0 / alpha)

        def over_u(u):
            scale = u ** (1.0 / alpha) / lam
            if scale <= 0.0:
                return 0.0
            ratio = cap / scale
            return scale ** q * gamma_fn(q + 1.0) * gammainc(q + 1.0, ratio) + cap ** q * np.exp(-ratio)

        value, _ = quad(over_u, 0.0, 1.0, epsabs=0.0, epsrel=_INNER_EPSREL, limit=200)
        return float(value)

    def expected_value(self, r: float, weight: Callable[[np.ndarray], np.ndarray]) -> float:
        """
        E[w(H(r, V)); H(r, V) ≠ 0] for a general weight w, by deterministic
        quadrature over the mark distribution.
        """
        model = self.model
        method = self.method

        def w(value):
            return float(np.asarray(weight(np.asarray(value, dtype=float))))

        if method == SeriesMethod.INVERSE_LEVY:
            size = float(self.jump_size(r)[0]) if r > 0 else None
            if size is None or size == 0.0:
                return 0.0
            return w(size)

        if method == SeriesMethod.REJECTION:
            if r <= 0:
                return 0.0
            proposal = 1.0 / (model.beta * np.expm1(r / model.alpha))
            if model.beta * proposal > _NEGLIGIBLE_EXPONENT:
                return 0.0
            acceptance = (1.0 + model.beta * proposal) * np.exp(-model.beta * proposal)
            return w(proposal) * float(acceptance)

        if method == SeriesMethod.THINNING:
            upper = np.inf if r <= 0 else model.alpha / r
            value, _ = quad(lambda v: w(v / model.beta) * np.exp(-v), 0.0, upper,
                            epsabs=0.0, epsrel=_INNER_EPSREL, limit=200)
            return float(value)

        if method == SeriesMethod.BONDESSON:
            factor = np.exp(-r / model.alpha) / model.beta
            value, _ = quad(lambda v: w(factor * v) * np.exp(-v), 0.0, np.inf,
                            epsabs=0.0, epsrel=_INNER_EPSREL, limit=200)
            return float(value)

        alpha, lam = model.alpha, model.lam
        cap = np.inf if r <= 0 else (alpha * r / model.delta) ** (-1.0 / alpha)

        def over_u(u):
            scale = u ** (1.0 / alpha) / lam
            if scale <= 0.0:
                return 0.0
            upper = cap / scale
            inner, _ = quad(lambda v: w(scale * v) * np.exp(-v), 0.0, upper,
                            epsabs=0.0, epsrel=_INNER_EPSREL, limit=200)
            tail = 0.0 if not np.isfinite(cap) else w(cap) * np.exp(-upper)
            return inner + tail

        value, _ = quad(over_u, 0.0, 1.0, epsabs=0.0, epsrel=_INNER_EPSREL, limit=200)
        return float(value)

    def signed_first_integrand(self, r: float) -> float:
        """E[H(r, V)], the signed first moment density in r."""
        if self.model.kind == LevyKind.COMPOUND_POISSON_TEST:
            return float(self.jump_size(r)[0])
        return self.moment_integrand(r, 1.0)


def default_representation(model: LevyModel) -> SeriesRepresentation:
    """The representation used when a configuration does not name one."""
    if model.kind == LevyKind.GAMMA:
        return SeriesRepresentation(model, SeriesMethod.BONDESSON)
    if model.kind == LevyKind.TEMPERED_STABLE:
        return SeriesRepresentation(model, SeriesMethod.ROSINSKI_TEMPERED_STABLE)
    return SeriesRepresentation(model, SeriesMethod.INVERSE_LEVY)
