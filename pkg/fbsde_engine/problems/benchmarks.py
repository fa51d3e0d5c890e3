"""
Built-in problems: closed-form benchmarks and nonlinear test problems.

Closed forms are stated for the truncated model, so they carry no truncation
error. For a benchmark with U_t(e) ≡ u(t) the scheme's Γ̄ estimates
u(t)∫ρ(e)e² ν^n(de) (returned by ``gamma_exact``), while the generator-level
Γ = u(t)∫ρ(e)e ν^n(de) = u(t)ζ_ρ(n) is returned by ``gamma_integrand_exact``.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from levy_engine.errors import ConfigurationError
from levy_engine.measures.moments import retained_weighted_moment
from levy_engine.shotnoise.representations import SeriesRepresentation
from fbsde_engine.problems.expressions import compile_expression
from fbsde_engine.problems.problem import FbsdeProblem, constant


def _zero_generator(t, x, y, z, q):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


def _identity(x):
    return np.asarray(x, dtype=float)


def _rho_min(e):
    return np.minimum(1.0, np.abs(e))


@dataclass(frozen=True, eq=False)
class BenchmarkProblem:
    """
    A problem with closed-form references.

    Attributes:
        problem: The FBSDE
        y_exact: (t, x) -> Y_t
        z_exact: (t, x) -> Z_t
        u_exact: (t, x) -> u with U_t(e) = u for every e
        discrete_y0: N -> Y_0 of the regular-grid scheme with exact
            conditional expectations (optional)
        notes: Provenance of the closed forms
    """
    problem: FbsdeProblem
    y_exact: Callable[[np.ndarray, np.ndarray], np.ndarray]
    z_exact: Callable[[np.ndarray, np.ndarray], np.ndarray]
    u_exact: Callable[[np.ndarray, np.ndarray], np.ndarray]
    discrete_y0: Optional[Callable[[int], float]] = None
    notes: str = ""

    @property
    def name(self) -> str:
        return self.problem.name

    def rho_moments(self, representation: SeriesRepresentation, n: float):
        """(ζ_ρ(n), ∫ρ(e)e² ν^n(de)) for this problem's ρ."""
        rho = self.problem.jump_weight
        zeta_rho = retained_weighted_moment(representation, n, lambda e: rho(e) * e)
        second = retained_weighted_moment(representation, n, lambda e: rho(e) * e * e)
        return zeta_rho, second

    def gamma_exact(self, t, x, rho_second_moment: float) -> np.ndarray:
        """Target of the scheme's Γ̄ regression: u(t, x)·∫ρ(e)e² ν^n(de)."""
        return np.asarray(self.u_exact(t, x), dtype=float) * rho_second_moment

    def gamma_integrand_exact(self, t, x, zeta_rho: float) -> np.ndarray:
        """Γ_t = ∫ρ(e)U_t(e)e ν^n(de) = u(t, x)·ζ_ρ(n)."""
        return np.asarray(self.u_exact(t, x), dtype=float) * zeta_rho


def linear_benchmark(b0: float = 0.2, a0: float = 0.3, h0: float = 0.5,
                     x0: float = 1.0, horizon: float = 1.0) -> BenchmarkProblem:
    """
    B1: f ≡ 0, g(x) = x, constant coefficients. Y_t = X_t + b₀(T − t),
    Z ≡ a₀, U ≡ h₀.
    """
    problem = FbsdeProblem(
        name="b1_linear",
        b=constant(b0), a=constant(a0), h=constant(h0),
        f=_zero_generator, g=_identity, rho=_rho_min,
        x0=x0, horizon=horizon, lipschitz_K=1.0, hx=constant(0.0),
        description="zero generator, linear terminal, constant coefficients"
    )
    return BenchmarkProblem(
        problem=problem,
        y_exact=lambda t, x: np.asarray(x, dtype=float) + b0 * (horizon - np.asarray(t, dtype=float)),
        z_exact=lambda t, x: np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, a0),
        u_exact=lambda t, x: np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, h0),
        discrete_y0=lambda steps: x0 + b0 * horizon,
        notes="E[X_T | X_t] = X_t + b0 (T - t) since the compensated jumps are a martingale"
    )


def discounting_benchmark(rate: float = 0.5, b0: float = 0.2, a0: float = 0.3, h0: float = 0.5,
                          x0: float = 1.0, horizon: float = 1.0) -> BenchmarkProblem:
    """
    B2: f = −r·y, g(x) = x. Y_t = e^{−r(T−t)}(X_t + b₀(T − t)),
    Z_t = a₀e^{−r(T−t)}, U_t ≡ h₀e^{−r(T−t)}.

    The implicit scheme on N regular steps gives Y_0 = (1 + rT/N)^{−N}(x₀ + b₀T).
    """
    def discount(t):
        return np.exp(-rate * (horizon - np.asarray(t, dtype=float)))

    problem = FbsdeProblem(
        name="b2_discounting",
        b=constant(b0), a=constant(a0), h=constant(h0),
        f=lambda t, x, y, z, q: -rate * np.asarray(y, dtype=float),
        g=_identity, rho=_rho_min,
        x0=x0, horizon=horizon, lipschitz_K=max(1.0, rate), hx=constant(0.0),
        description="linear discounting generator"
    )
    return BenchmarkProblem(
        problem=problem,
        y_exact=lambda t, x: discount(t) * (np.asarray(x, dtype=float) + b0 * (horizon - np.asarray(t, dtype=float))),
        z_exact=lambda t, x: a0 * discount(t) * np.ones(np.broadcast(np.asarray(t), np.asarray(x)).shape),
        u_exact=lambda t, x: h0 * discount(t) * np.ones(np.broadcast(np.asarray(t), np.asarray(x)).shape),
        discrete_y0=lambda steps: (1.0 + rate * horizon / steps) ** (-steps) * (x0 + b0 * horizon),
        notes="Y_t = E[e^{-r(T-t)} X_T | X_t] for the linear generator -r y"
    )


def diffusion_benchmark(x0: float = 0.0, horizon: float = 1.0) -> BenchmarkProblem:
    """B3: h ≡ 0, f ≡ 0, g(x) = x, a ≡ 1, b ≡ 0. Y = X = B, Z ≡ 1, Γ ≡ 0."""
    problem = FbsdeProblem(
        name="b3_diffusion",
        b=constant(0.0), a=constant(1.0), h=constant(0.0),
        f=_zero_generator, g=_identity, rho=_rho_min,
        x0=x0, horizon=horizon, lipschitz_K=1.0, hx=constant(0.0),
        description="pure diffusion"
    )
    return BenchmarkProblem(
        problem=problem,
        y_exact=lambda t, x: np.asarray(x, dtype=float) + 0.0 * np.asarray(t, dtype=float),
        z_exact=lambda t, x: np.ones(np.broadcast(np.asarray(t), np.asarray(x)).shape),
        u_exact=lambda t, x: np.zeros(np.broadcast(np.asarray(t), np.asarray(x)).shape),
        discrete_y0=lambda steps: x0,
        notes="Y is the Brownian motion itself"
    )


def nonlinear_forward_problem(x0: float = 1.0, horizon: float = 1.0) -> FbsdeProblem:
    """Lipschitz forward test: b = sin x, a = 0.5 + 0.15 cos x, h = 0.2."""
    return FbsdeProblem(
        name="nonlinear_forward",
        b=lambda t, x: np.sin(x),
        a=lambda t, x: 0.5 + 0.15 * np.cos(x),
        h=constant(0.2),
        f=_zero_generator, g=_identity, rho=_rho_min,
        x0=x0, horizon=horizon, lipschitz_K=1.0, hx=constant(0.0),
        description="nonlinear Lipschitz forward coefficients, constant jump coefficient"
    )


def nonlinear_generator_problem(x0: float = 0.5, horizon: float = 1.0) -> FbsdeProblem:
    """
    Nonlinear generator with constant h (so ℓ ≡ 1):
    f = −0.3y + 0.2cos(z) + 0.1sin(q), g = cos x.
    """
    return FbsdeProblem(
        name="nonlinear_generator",
        b=lambda t, x: 0.2 * np.sin(x),
        a=constant(0.4),
        h=constant(0.3),
        f=lambda t, x, y, z, q: -0.3 * np.asarray(y) + 0.2 * np.cos(z) + 0.1 * np.sin(q),
        g=lambda x: np.cos(x),
        rho=_rho_min,
        x0=x0, horizon=horizon, lipschitz_K=1.0, hx=constant(0.0),
        description="Lipschitz nonlinear generator, invertible jump coefficient"
    )


_BENCHMARKS: Dict[str, Callable[..., BenchmarkProblem]] = {
    "b1_linear": linear_benchmark,
    "b2_discounting": discounting_benchmark,
    "b3_diffusion": diffusion_benchmark,
}

_PROBLEMS: Dict[str, Callable[..., FbsdeProblem]] = {
    "nonlinear_forward": nonlinear_forward_problem,
    "nonlinear_generator": nonlinear_generator_problem,
}


def builtin_benchmarks() -> List[BenchmarkProblem]:
    """B1, B2 and B3 with default parameters."""
    return [factory() for factory in _BENCHMARKS.values()]


def available_problems() -> List[str]:
    return sorted(_BENCHMARKS) + sorted(_PROBLEMS)


def get_problem(name: str, **params):
    """
    Look up a built-in problem by name.

    Returns:
        BenchmarkProblem for the closed-form benchmarks, FbsdeProblem otherwise
    """
    factory = _BENCHMARKS.get(name) or _PROBLEMS.get(name)
    if factory is None:
        raise ConfigurationError(
            f"Unknown problem {name!r}; choose one of: {', '.join(available_problems())} or 'custom'"
        )
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"Invalid parameters for problem {name!r}: {exc}") from exc


_EXPRESSION_FIELDS = {
    "b": ("t", "x"),
    "a": ("t", "x"),
    "h": ("t", "x"),
    "hx": ("t", "x"),
    "f": ("t", "x", "y", "z", "q"),
    "g": ("x",),
    "rho": ("e",),
}


def problem_from_expressions(definition: dict) -> FbsdeProblem:
    """
    Build a custom problem from expression strings, e.g.::

        {"b": "sin(x)", "a": "0.4", "h": "0.2", "hx": "0",
         "f": "-0.5*y", "g": "x", "rho": "min(1, e)",
         "x0": 0.0, "horizon": 1.0, "lipschitz_K": 1.0}
    """
    missing = [key for key in ("b", "a", "h", "f", "g", "x0", "horizon", "lipschitz_K") if key not in definition]
    if missing:
        raise ConfigurationError(f"Custom problem is missing: {', '.join(missing)}")
    unknown = set(definition) - set(_EXPRESSION_FIELDS) - {"name", "x0", "horizon", "lipschitz_K", "description"}
    if unknown:
        raise ConfigurationError(f"Unknown custom problem keys: {', '.join(sorted(unknown))}")

    compiled = {
        key: compile_expression(definition[key], variables)
        for key, variables in _EXPRESSION_FIELDS.items()
        if key in definition and definition[key] is not None
    }
    compiled.setdefault("rho", compile_expression("min(1, max(e, -e))", ("e",)))
    return FbsdeProblem(
        name=str(definition.get("name", "custom")),
        b=compiled["b"], a=compiled["a"], h=compiled["h"],
        f=compiled["f"], g=compiled["g"], rho=compiled["rho"],
        x0=float(definition["x0"]),
        horizon=float(definition["horizon"]),
        lipschitz_K=float(definition["lipschitz_K"]),
        hx=compiled.get("hx"),
        description=str(definition.get("description", "expression-defined problem"))
    )
