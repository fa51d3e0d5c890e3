"""
Lévy measures of the supported driving processes.

Three kinds are supported:
- gamma process, ν(de) = α e^{-βe}/e de on e > 0
- classical tempered stable subordinator, ν(de) = δ e^{-1-α} e^{-λe} de on e > 0
- a finite atomic measure (compound Poisson), used as an exact test oracle

All measures are per unit time.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn

from levy_engine.errors import ConfigurationError, DomainError


class LevyKind(str, Enum):
    GAMMA = "gamma"
    TEMPERED_STABLE = "tempered_stable"
    COMPOUND_POISSON_TEST = "compound_poisson_test"


@dataclass(frozen=True)
class LevyModel:
    """
    A Lévy measure together with the moment order p of the L^p analysis.

    Use the constructors ``LevyModel.gamma``, ``LevyModel.tempered_stable`` and
    ``LevyModel.compound_poisson`` rather than filling the fields by hand.
    """
    kind: LevyKind
    moment_order_p: float = 2.0
    alpha: Optional[float] = None  # gamma rate / stability index
    beta: Optional[float] = None  # gamma scale
    delta: Optional[float] = None  # tempered stable intensity
    lam: Optional[float] = None  # tempered stable tempering
    atoms: Tuple[Tuple[float, float], ...] = field(default=())  # (size, mass) pairs

    def __post_init__(self):
        if self.moment_order_p < 2:
            raise ConfigurationError(
                f"moment_order_p must be >= 2, got {self.moment_order_p}"
            )
        if self.kind == LevyKind.GAMMA:
            self._require_positive(alpha=self.alpha, beta=self.beta)
        elif self.kind == LevyKind.TEMPERED_STABLE:
            self._require_positive(delta=self.delta, lam=self.lam)
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ConfigurationError(
                    f"Tempered stable index alpha must lie in (0, 1), got {self.alpha}"
                )
        elif self.kind == LevyKind.COMPOUND_POISSON_TEST:
            self._check_atoms()
        else:
            raise ConfigurationError(f"Unknown Lévy kind: {self.kind!r}")

    @staticmethod
    def _require_positive(**values):
        for name, value in values.items():
            if value is None or not np.isfinite(value) or value <= 0:
                raise ConfigurationError(f"Parameter {name} must be > 0, got {value}")

    def _check_atoms(self):
        if not self.atoms:
            raise ConfigurationError("compound_poisson_test needs at least one atom")
        for size, mass in self.atoms:
            if not np.isfinite(size) or size == 0.0:
                raise ConfigurationError(f"Atom size must be finite and nonzero, got {size}")
            if not np.isfinite(mass) or mass <= 0.0:
                raise ConfigurationError(f"Atom mass must be finite and > 0, got {mass}")
        # ∫ min(1, e²) ν(de) and ∫ |e|^p ν(de) are finite sums for atoms
        small_jump_mass = sum(min(1.0, size * size) * mass for size, mass in self.atoms)
        if not np.isfinite(small_jump_mass):
            raise ConfigurationError("Atomic measure violates ∫ min(1, e²) ν(de) < ∞")

    # ----- constructors -----

    @classmethod
    def gamma(cls, alpha: float, beta: float, p: float = 2.0) -> "LevyModel":
        """Gamma process with Lévy density α e^{-βe}/e."""
        return cls(kind=LevyKind.GAMMA, moment_order_p=p, alpha=alpha, beta=beta)

    @classmethod
    def tempered_stable(cls, alpha: float, delta: float, lam: float, p: float = 2.0) -> "LevyModel":
        """Classical tempered stable subordinator with density δ e^{-1-α} e^{-λe}."""
        return cls(kind=LevyKind.TEMPERED_STABLE, moment_order_p=p, alpha=alpha, delta=delta, lam=lam)

    @classmethod
    def compound_poisson(cls, atoms, p: float = 2.0) -> "LevyModel":
        """Finite atomic measure given as (jump size, mass) pairs."""
        normalized = tuple((float(size), float(mass)) for size, mass in atoms)
        return cls(kind=LevyKind.COMPOUND_POISSON_TEST, moment_order_p=p, atoms=normalized)

    # ----- properties -----

    @property
    def is_subordinator(self) -> bool:
        """True when every jump is nonnegative."""
        if self.kind == LevyKind.COMPOUND_POISSON_TEST:
            return all(size > 0 for size, _ in self.atoms)
        return True

    @property
    def total_mass(self) -> float:
        """ν(ℝ); infinite for the gamma and tempered stable kinds."""
        if self.kind == LevyKind.COMPOUND_POISSON_TEST:
            return float(sum(mass for _, mass in self.atoms))
        return float("inf")

    @property
    def identifier(self) -> str:
        """Short human-readable identifier used in ledgers."""
        if self.kind == LevyKind.GAMMA:
            return f"gamma(alpha={self.alpha:g},beta={self.beta:g})"
        if self.kind == LevyKind.TEMPERED_STABLE:
            return f"tempered_stable(alpha={self.alpha:g},delta={self.delta:g},lambda={self.lam:g})"
        return f"compound_poisson({len(self.atoms)} atoms)"

    def density(self, e) -> np.ndarray:
        """Lévy density at e (absolutely continuous kinds only)."""
        e = np.asarray(e, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == LevyKind.GAMMA:
                values = self.alpha * np.exp(-self.beta * e) / e
            elif self.kind == LevyKind.TEMPERED_STABLE:
                values = self.delta * e ** (-1.0 - self.alpha) * np.exp(-self.lam * e)
            else:
                raise ConfigurationError("An atomic measure has no Lebesgue density")
        return np.where(e > 0, values, 0.0)

    def full_moment(self, q: float) -> float:
        """
        Full absolute moment ∫ |e|^q ν(de) in closed form.

        Args:
            q: Moment order (> 0 for gamma, > alpha for tempered stable)

        Returns:
            The moment as a float
        """
        if self.kind == LevyKind.GAMMA:
            if q <= 0:
                raise DomainError(f"Gamma moments need q > 0, got {q}")
            return float(self.alpha * gamma_fn(q) * self.beta ** (-q))
        if self.kind == LevyKind.TEMPERED_STABLE:
            if q <= self.alpha:
                raise DomainError(f"Tempered stable moments need q > alpha, got {q}")
            return float(self.delta * gamma_fn(q - self.alpha) * self.lam ** (self.alpha - q))
        return float(sum(abs(size) ** q * mass for size, mass in self.atoms))

    # ----- serialization -----

    def to_dict(self) -> dict:
        """Plain-data form used by manifests and ensemble files."""
        values = {"kind": self.kind.value, "p": self.moment_order_p}
        if self.kind == LevyKind.GAMMA:
            values.update(alpha=self.alpha, beta=self.beta)
        elif self.kind == LevyKind.TEMPERED_STABLE:
            values.update(alpha=self.alpha, delta=self.delta, lam=self.lam)
        else:
            values["atoms"] = [list(atom) for atom in self.atoms]
        return values

    @classmethod
    def from_dict(cls, values: dict) -> "LevyModel":
        """
        Build a model from a configuration mapping.

        Raises:
            ConfigurationError: on unknown kinds or missing parameters
        """
        values = dict(values)
        try:
            kind = LevyKind(values.pop("kind"))
        except (KeyError, ValueError) as exc:
            names = ", ".join(k.value for k in LevyKind)
            raise ConfigurationError(f"Model kind must be one of: {names}") from exc
        p = float(values.pop("p", 2.0))
        try:
            if kind == LevyKind.GAMMA:
                return cls.gamma(alpha=float(values["alpha"]), beta=float(values["beta"]), p=p)
            if kind == LevyKind.TEMPERED_STABLE:
                return cls.tempered_stable(alpha=float(values["alpha"]), delta=float(values["delta"]),
                                           lam=float(values.get("lam", values.get("lambda"))), p=p)
            return cls.compound_poisson(values["atoms"], p=p)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"Missing or invalid parameter for {kind.value} model: {exc}") from exc
