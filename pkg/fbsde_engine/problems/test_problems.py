"""
Tests for problem definitions, the expression grammar and the structural checks.
"""

import numpy as np
import pytest

from levy_engine.errors import ConfigurationError, NumericError
from levy_engine.measures.models import LevyModel
from levy_engine.shotnoise.representations import SeriesMethod, SeriesRepresentation, default_representation
from fbsde_engine.problems.benchmarks import (
    available_problems,
    builtin_benchmarks,
    discounting_benchmark,
    get_problem,
    linear_benchmark,
    nonlinear_generator_problem,
    problem_from_expressions,
)
from fbsde_engine.problems.expressions import compile_expression
from fbsde_engine.problems.problem import (
    CheckStatus,
    FbsdeProblem,
    SampleSpec,
    constant,
    estimate_lipschitz,
    validate_invertibility,
)


def make_problem(**overrides):
    values = dict(
        name="test",
        b=constant(0.0), a=constant(1.0), h=constant(0.5),
        f=lambda t, x, y, z, q: np.zeros(np.shape(y)),
        g=lambda x: np.asarray(x, dtype=float),
        rho=lambda e: np.minimum(1.0, np.abs(e)),
        x0=0.0, horizon=1.0, lipschitz_K=1.0, hx=constant(0.0),
    )
    values.update(overrides)
    return FbsdeProblem(**values)


@pytest.fixture
def bondesson():
    return SeriesRepresentation(LevyModel.gamma(1.0, 1.0), SeriesMethod.BONDESSON)


# ----- expressions -----

def test_expression_evaluates_and_broadcasts():
    b = compile_expression("0.2*sin(x) + 0.1", ("t", "x"))
    x = np.linspace(-1.0, 1.0, 5)
    assert np.allclose(b(0.0, x), 0.2 * np.sin(x) + 0.1)
    assert b(0.0, x).shape == (5,)

    c = compile_expression("0.3", ("t", "x"))
    assert np.array_equal(c(np.zeros(3), np.ones(3)), np.full(3, 0.3))


def test_expression_min_max_and_unary_minus():
    rho = compile_expression("min(1, max(e, -e))", ("e",))
    e = np.array([-3.0, -0.5, 0.0, 0.25, 2.0])
    assert np.allclose(rho(e), np.minimum(1.0, np.abs(e)))
    f = compile_expression("-(y - 2*z) + exp(0)*q", ("t", "x", "y", "z", "q"))
    assert f(0, 0, 1.0, 2.0, 3.0) == pytest.approx(6.0)


@pytest.mark.parametrize("text", [
    "x**2",
    "x / 2",
    "__import__('os')",
    "x.real",
    "log(x)",
    "sin(x, x)",
    "y + x",
    "[x]",
    "'x'",
    "True",
    "sin(",
])
def test_expression_rejects_syntax_outside_grammar(text):
    with pytest.raises(ConfigurationError):
        compile_expression(text, ("t", "x"))


def test_expression_argument_count():
    g = compile_expression("x", ("x",))
    with pytest.raises(TypeError):
        g(1.0, 2.0)


# ----- problem definition -----

def test_problem_validation():
    with pytest.raises(ConfigurationError):
        make_problem(horizon=0.0)
    with pytest.raises(ConfigurationError):
        make_problem(lipschitz_K=-1.0)
    with pytest.raises(ConfigurationError):
        make_problem(x0=float("nan"))


def test_non_finite_coefficient_reports_context():
    problem = make_problem(b=lambda t, x: np.where(np.asarray(x) > 1.0, np.inf, 0.0))
    with pytest.raises(NumericError) as info:
        problem.coefficients(0.5, np.array([0.0, 2.0]))
    assert info.value.t == 0.5
    assert info.value.x == 2.0


def test_jump_weight_broadcasts_constant_rho():
    problem = make_problem(rho=lambda e: 0.0)
    assert np.array_equal(problem.jump_weight(np.array([1.0, -2.0])), np.zeros(2))


# ----- invertibility check -----

def test_invertibility_passes_for_small_positive_slope(bondesson):
    problem = make_problem(h=lambda t, x: 0.1 * np.sin(x), hx=lambda t, x: 0.1 * np.cos(x), lipschitz_K=2.0)
    spec = SampleSpec(e_values=tuple(np.linspace(0.05, 5.0, 100)))
    report = validate_invertibility(problem, bondesson, 5.0, spec)
    assert report.passed
    assert report.sign == "positive"
    assert report.min_ell >= 0.5


def test_invertibility_passes_for_constant_h(bondesson):
    report = validate_invertibility(make_problem(), bondesson, 10.0)
    assert report.passed
    assert report.min_ell == pytest.approx(1.0)
    assert report.samples > 0


def test_invertibility_fails_for_linear_h_with_negative_atoms():
    model = LevyModel.compound_poisson([(-1.0, 2.0), (0.5, 1.0)])
    representation = default_representation(model)
    problem = make_problem(h=lambda t, x: np.asarray(x, dtype=float), hx=constant(1.0))
    report = validate_invertibility(problem, representation, 3.0)
    assert report.status == CheckStatus.FAIL
    assert report.worst_point[2] == -1.0
    assert report.min_abs_ell == pytest.approx(0.0)
    assert "closest to zero" in report.message
    assert report.as_dict()["status"] == "fail"


def test_invertibility_not_checkable_without_hx(bondesson):
    report = validate_invertibility(make_problem(hx=None), bondesson, 1.0)
    assert report.status == CheckStatus.NOT_CHECKABLE
    assert not report.passed


def test_invertibility_proxies_follow_retained_atoms():
    model = LevyModel.compound_poisson([(2.0, 1.0), (-4.0, 1.0)])
    problem = make_problem(hx=constant(0.5))
    # at n = 1 only the largest atom (-4) is retained: ℓ = 1 - 2 = -1
    report = validate_invertibility(problem, default_representation(model), 1.0)
    assert report.passed
    assert report.sign == "negative"


# ----- Lipschitz spot check -----

def test_lipschitz_check_accepts_builtin_problem():
    report = estimate_lipschitz(nonlinear_generator_problem(), samples=500)
    assert report.consistent, report.violations


def test_lipschitz_check_flags_steep_drift_and_rho():
    problem = make_problem(b=lambda t, x: 3.0 * np.asarray(x), rho=lambda e: np.abs(e))
    report = estimate_lipschitz(problem, samples=200)
    assert "b" in report.violations
    assert report.estimates["b"] == pytest.approx(3.0, rel=1e-4)
    assert report.rho_violations
    assert all(abs(e) > 1.0 for e, _ in report.rho_violations)


# ----- built-in problems -----

def test_registry():
    names = available_problems()
    assert {"b1_linear", "b2_discounting", "b3_diffusion", "nonlinear_forward"} <= set(names)
    assert [b.name for b in builtin_benchmarks()] == ["b1_linear", "b2_discounting", "b3_diffusion"]
    assert get_problem("b2_discounting", rate=1.0).problem.lipschitz_K == 1.0
    with pytest.raises(ConfigurationError):
        get_problem("unknown")
    with pytest.raises(ConfigurationError):
        get_problem("b1_linear", volatility=2.0)


def test_closed_forms_meet_terminal_condition():
    for benchmark in builtin_benchmarks():
        x = np.linspace(-2.0, 2.0, 7)
        T = benchmark.problem.horizon
        assert np.allclose(benchmark.y_exact(T, x), benchmark.problem.terminal(x))


def test_linear_benchmark_values():
    benchmark = linear_benchmark(b0=0.2, a0=0.3, h0=0.5, x0=1.0)
    assert benchmark.y_exact(0.0, 1.0) == pytest.approx(1.2)
    assert np.all(benchmark.z_exact(0.3, np.zeros(4)) == 0.3)
    assert benchmark.discrete_y0(64) == pytest.approx(1.2)


def test_discounting_discrete_value_tends_to_closed_form():
    benchmark = discounting_benchmark(rate=0.5)
    exact = benchmark.y_exact(0.0, benchmark.problem.x0)
    assert benchmark.discrete_y0(64) == pytest.approx(1.2 / (1.0 + 0.5 / 64) ** 64)
    assert abs(benchmark.discrete_y0(10_000) - exact) < 1e-4
    assert benchmark.discrete_y0(64) > exact


def test_gamma_conventions(bondesson):
    benchmark = linear_benchmark(h0=0.5)
    zeta_rho, second = benchmark.rho_moments(bondesson, 4.0)
    assert second > 0.0 and zeta_rho > 0.0
    assert benchmark.gamma_exact(0.0, 1.0, second) == pytest.approx(0.5 * second)
    assert benchmark.gamma_integrand_exact(0.0, 1.0, zeta_rho) == pytest.approx(0.5 * zeta_rho)


def test_problem_from_expressions():
    problem = problem_from_expressions({
        "name": "custom_ou",
        "b": "-0.5*x", "a": "0.4", "h": "0.2", "hx": "0",
        "f": "-0.5*y + 0.1*z", "g": "max(x, 0)",
        "x0": 0.5, "horizon": 1.0, "lipschitz_K": 1.0,
    })
    assert problem.name == "custom_ou"
    b, a, h = problem.coefficients(0.0, np.array([1.0, 2.0]))
    assert np.allclose(b, [-0.5, -1.0])
    assert np.allclose(a, 0.4)
    assert np.allclose(problem.terminal(np.array([-1.0, 3.0])), [0.0, 3.0])
    assert np.allclose(problem.jump_weight(np.array([-2.0, 0.5])), [1.0, 0.5])


def test_problem_from_expressions_errors():
    with pytest.raises(ConfigurationError, match="missing"):
        problem_from_expressions({"b": "x"})
    with pytest.raises(ConfigurationError, match="Unknown"):
        problem_from_expressions({
            "b": "0", "a": "1", "h": "0", "f": "0", "g": "x",
            "x0": 0.0, "horizon": 1.0, "lipschitz_K": 1.0, "sigma": "1",
        })
    with pytest.raises(ConfigurationError):
        problem_from_expressions({
            "b": "0", "a": "1", "h": "0", "f": "w", "g": "x",
            "x0": 0.0, "horizon": 1.0, "lipschitz_K": 1.0,
        })
