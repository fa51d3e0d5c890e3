"""
Convergence studies built from coupled ensembles.

Every study runs a list of cells, compares each cell with its reference and
collects one ledger row per cell. A cell that fails numerically is recorded
with its error and the study moves on; invalid configuration aborts.

- benchmark: every (n, N) cell against a closed form or a fine reference
- forward_rate: forward error of coarse N against one fine N_ref ensemble
- backward_rate: backward error of coarse N against the scheme at N_ref
- truncation: backward error of level n against level n_ref at fixed N
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.stats import norm
from tqdm import tqdm

from levy_engine.errors import ConfigurationError, DomainError, NUMERIC_ERRORS
from levy_engine.measures.models import LevyModel
from levy_engine.measures.moments import truncation_moments
from levy_engine.shotnoise.representations import SeriesRepresentation
from levy_engine.utils import chunk_ranges
from fbsde_engine.backward.regression import RegressionSpec
from fbsde_engine.backward.scheme import solve_backward
from fbsde_engine.forward.ensemble import DEFAULT_MAX_CELLS, coarsen_ensemble, simulate_ensemble
from fbsde_engine.harness.norms import (
    DEFAULT_BATCHES,
    DEFAULT_CONFIDENCE,
    ErrorReport,
    empirical_norms,
    forward_samples,
    power_mean,
)
from fbsde_engine.harness.rates import (
    RateFit,
    predicted_error_shape,
    predicted_forward_shape,
    predicted_truncation_shape,
    rate_fit,
)
from fbsde_engine.harness.reference import ReferenceMode, reference_solution
from fbsde_engine.problems.benchmarks import BenchmarkProblem
from fbsde_engine.problems.problem import FbsdeProblem


logger = logging.getLogger(__name__)

LEDGER_COLUMNS = [
    "study_id", "kind", "cell", "status", "problem", "model", "representation",
    "n", "N", "M", "p", "seed",
    "y0", "y0_se", "y0_ci_low", "y0_ci_high", "reference_y0", "discrete_y0", "y0_error", "y0_within_ci",
    "sup_y_error", "sup_y_ci_low", "sup_y_ci_high",
    "mean_sup_y_error", "mean_sup_y_ci_low", "mean_sup_y_ci_high",
    "z_error", "z_ci_low", "z_ci_high",
    "gamma_error", "gamma_ci_low", "gamma_ci_high",
    "forward_error", "forward_ci_low", "forward_ci_high",
    "predicted", "fallback_nodes", "clipped_values",
]

PLOT_COLUMNS = ["study_id", "metric", "axis", "value", "error", "ci_low", "ci_high"]


@dataclass(frozen=True, eq=False)
class StudyResult:
    """
    Outcome of one study.

    Attributes:
        study_id: Label of the study
        kind: Study kind
        ledger: One row per cell, columns LEDGER_COLUMNS
        plot_table: Long-format (study_id, metric, axis, value, error, ci_low, ci_high)
        fit: Rate fit of the study's headline metric, when one was possible
        checks: Named pass/fail checks of the study
    """
    study_id: str
    kind: str
    ledger: pd.DataFrame
    plot_table: pd.DataFrame
    fit: Optional[RateFit] = None
    checks: Dict[str, bool] = field(default_factory=dict)

    @property
    def failed_cells(self) -> int:
        return int((self.ledger["status"] != "ok").sum())


@dataclass(frozen=True)
class StudySetup:
    """Components shared by every study kind."""
    problem: Union[BenchmarkProblem, FbsdeProblem]
    model: LevyModel
    representation: SeriesRepresentation
    paths: int
    seed: int
    spec: RegressionSpec = field(default_factory=RegressionSpec)
    p: float = 2.0
    batches: int = DEFAULT_BATCHES
    num_workers: Optional[int] = None
    max_cells: int = DEFAULT_MAX_CELLS
    show_progress: bool = False

    @property
    def fbsde(self) -> FbsdeProblem:
        if isinstance(self.problem, BenchmarkProblem):
            return self.problem.problem
        return self.problem

    def simulate(self, n: float, steps: int, path_indices: Optional[Sequence[int]] = None):
        paths = self.paths if path_indices is None else len(path_indices)
        return simulate_ensemble(
            self.fbsde, self.model, self.representation, n, steps, paths, self.seed,
            path_indices=path_indices, num_workers=self.num_workers, max_cells=self.max_cells
        )

    def base_row(self, study_id: str, kind: str, cell: str, n: float, steps: int) -> dict:
        return {
            "study_id": study_id, "kind": kind, "cell": cell, "status": "ok",
            "problem": self.fbsde.name, "model": self.model.identifier,
            "representation": self.representation.method.value,
            "n": float(n), "N": int(steps), "M": int(self.paths), "p": float(self.p), "seed": int(self.seed),
        }


def _run_cell(row: dict, work: Callable[[], dict]) -> dict:
    """Run one cell; numeric failures become the row's status."""
    try:
        row.update(work())
    except NUMERIC_ERRORS as exc:
        logger.warning("Cell %s failed: %s", row["cell"], exc)
        row["status"] = f"failed: {type(exc).__name__}: {exc}"
    return row


def _solution_fields(solution) -> dict:
    low, high = solution.y0_interval()
    return {
        "y0": solution.y0,
        "y0_se": solution.y0_standard_error,
        "y0_ci_low": low,
        "y0_ci_high": high,
        "fallback_nodes": int(sum(d.fallback for d in solution.diagnostics)),
        "clipped_values": int(solution.clipped.sum()),
    }


def _report_fields(report: ErrorReport) -> dict:
    keys = [column for column in LEDGER_COLUMNS if column.startswith(("sup_y", "mean_sup_y", "z_", "gamma_"))]
    row = report.as_row()
    fields = {key: row[key] for key in keys}
    fields["y0_error"] = report.y0_error
    return fields


def _ledger(rows: List[dict]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=LEDGER_COLUMNS)


def _plot_rows(study_id: str, ledger: pd.DataFrame, metric: str, axis: str) -> List[dict]:
    ok = ledger[ledger["status"] == "ok"]
    low_column, high_column = f"{metric}_ci_low", f"{metric}_ci_high"
    rows = []
    for _, row in ok.iterrows():
        rows.append({
            "study_id": study_id, "metric": metric, "axis": axis,
            "value": row[axis], "error": row[metric],
            "ci_low": row[low_column] if low_column in ledger else np.nan,
            "ci_high": row[high_column] if high_column in ledger else np.nan,
        })
    return rows


def _fit(ledger: pd.DataFrame, axis: str, metric: str, scale: str) -> Optional[RateFit]:
    ok = ledger[ledger["status"] == "ok"]
    try:
        fit = rate_fit(ok[axis].to_numpy(dtype=float), ok[metric].to_numpy(dtype=float), scale)
    except DomainError as exc:
        logger.warning("No rate fit for %s against %s: %s", metric, axis, exc)
        return None
    logger.info("Fitted %s slope of %s against %s: %.3f (R² %.3f)", scale, metric, axis, fit.slope, fit.r_squared)
    return fit


def _decreasing_within_noise(ledger: pd.DataFrame, metric: str) -> bool:
    """
    Each error lies below its predecessor by more than three combined
    batch-means standard errors.
    """
    ok = ledger[ledger["status"] == "ok"]
    errors = ok[metric].to_numpy(dtype=float)
    upper = ok[f"{metric}_ci_high"].to_numpy(dtype=float)
    sigma = np.where(np.isnan(upper), 0.0, upper - errors) / norm.ppf(0.5 + DEFAULT_CONFIDENCE / 2.0)
    drops = errors[:-1] - errors[1:]
    bands = 3.0 * np.sqrt(sigma[:-1] ** 2 + sigma[1:] ** 2)
    return bool(np.all(drops > bands))


def benchmark_study(
    setup: StudySetup,
    levels: Sequence[float],
    steps_list: Sequence[int],
    mode: Union[ReferenceMode, str] = ReferenceMode.CLOSED_FORM,
    reference_steps: Optional[int] = None,
    reference_level: Optional[float] = None,
    study_id: str = "benchmark"
) -> StudyResult:
    """
    Run every (n, N) cell and compare it with its reference.

    With a closed form the reference is exact at the cell's own nodes; with a
    fine discretization each cell's paths are refined to
    (reference_steps, reference_level).
    """
    mode = ReferenceMode(mode)
    benchmark = setup.problem if isinstance(setup.problem, BenchmarkProblem) else None
    if mode == ReferenceMode.CLOSED_FORM and benchmark is None:
        raise ConfigurationError(f"Problem {setup.fbsde.name!r} has no closed-form solution")
    cells = [(float(n), int(steps)) for n in levels for steps in steps_list]
    rows = []
    for n, steps in tqdm(cells, desc="Benchmark cells", disable=not setup.show_progress):
        row = setup.base_row(study_id, "benchmark", f"n={n:g},N={steps}", n, steps)

        def work(n=n, steps=steps):
            ensemble = setup.simulate(n, steps)
            solution = solve_backward(ensemble, setup.fbsde, setup.spec)
            reference = reference_solution(
                setup.problem, ensemble, mode,
                steps=reference_steps, level=reference_level, spec=setup.spec
            )
            report = with_metadata(empirical_norms(solution, reference, setup.p, setup.batches), setup, n)
            fields = _solution_fields(solution)
            fields.update(_report_fields(report))
            fields["reference_y0"] = reference.y0
            fields["y0_error"] = abs(solution.y0 - reference.y0)
            fields["y0_within_ci"] = bool(fields["y0_ci_low"] <= reference.y0 <= fields["y0_ci_high"])
            if benchmark is not None and benchmark.discrete_y0 is not None:
                fields["discrete_y0"] = float(benchmark.discrete_y0(steps))
            fields["predicted"] = predicted_error_shape(
                truncation_moments(setup.model, setup.representation, n, setup.p), steps
            )
            return fields

        rows.append(_run_cell(row, work))

    ledger = _ledger(rows)
    plot_rows = _plot_rows(study_id, ledger, "sup_y_error", "N")
    plot_rows += _plot_rows(study_id, ledger, "y0_error", "N")
    ok = ledger[ledger["status"] == "ok"]
    checks = {"all_cells_ok": len(ok) == len(ledger)}
    if len(ok) and ok["y0_within_ci"].notna().all():
        checks["y0_within_ci"] = bool(ok["y0_within_ci"].astype(bool).all())
    return StudyResult(study_id, "benchmark", ledger, pd.DataFrame(plot_rows, columns=PLOT_COLUMNS), checks=checks)


def forward_rate_study(
    setup: StudySetup,
    level: float,
    steps_list: Sequence[int],
    reference_steps: int,
    chunk_paths: Optional[int] = None,
    study_id: str = "forward_rate"
) -> StudyResult:
    """
    Strong forward error E[sup_k |X_k − X_k^ref|^p]^{1/p} against N.

    The fine ensemble at N_ref is simulated in blocks of paths (to respect the
    cell budget) and every coarse N is read off the same Brownian paths and
    skeletons.
    """
    steps_list = sorted(int(steps) for steps in steps_list)
    for steps in steps_list:
        if reference_steps % steps != 0:
            raise DomainError(f"N_ref={reference_steps} is not a multiple of N={steps}")
    if chunk_paths is None:
        width = reference_steps + 1 + int(np.ceil(4 * level * setup.fbsde.horizon)) + 16
        chunk_paths = max(1, setup.max_cells // width)

    samples: Dict[int, List[np.ndarray]] = {steps: [] for steps in steps_list}
    failures: Dict[int, str] = {}
    blocks = chunk_ranges(setup.paths, chunk_paths)
    for start, stop in tqdm(blocks, desc="Forward blocks", disable=not setup.show_progress):
        fine = setup.simulate(level, reference_steps, path_indices=np.arange(start, stop))
        for steps in steps_list:
            if steps in failures:
                continue
            try:
                coarse = coarsen_ensemble(fine, steps=steps, max_cells=setup.max_cells)
                samples[steps].append(forward_samples(coarse, fine, setup.p))
            except NUMERIC_ERRORS as exc:
                logger.warning("Forward cell N=%d failed: %s", steps, exc)
                failures[steps] = f"failed: {type(exc).__name__}: {exc}"

    moments = truncation_moments(setup.model, setup.representation, level, setup.p)
    rows = []
    for steps in steps_list:
        row = setup.base_row(study_id, "forward_rate", f"N={steps}", level, steps)
        if steps in failures:
            row["status"] = failures[steps]
        else:
            error, (low, high) = power_mean(np.concatenate(samples[steps]), setup.p, setup.batches)
            row.update({
                "forward_error": error, "forward_ci_low": low, "forward_ci_high": high,
                "predicted": predicted_forward_shape(moments, steps) ** (1.0 / setup.p),
            })
        rows.append(row)

    ledger = _ledger(rows)
    fit = _fit(ledger, "N", "forward_error", "loglog")
    plot = pd.DataFrame(_plot_rows(study_id, ledger, "forward_error", "N"), columns=PLOT_COLUMNS)
    return StudyResult(study_id, "forward_rate", ledger, plot, fit, {"all_cells_ok": not failures})


def backward_rate_study(
    setup: StudySetup,
    level: float,
    steps_list: Sequence[int],
    reference_steps: int,
    study_id: str = "backward_rate"
) -> StudyResult:
    """
    Backward error of coarse N against the scheme on the same paths at N_ref.

    The headline metric is the Y_0 error; the path norms are reported next to it.
    """
    steps_list = sorted(int(steps) for steps in steps_list)
    for steps in steps_list:
        if reference_steps % steps != 0:
            raise DomainError(f"N_ref={reference_steps} is not a multiple of N={steps}")
    fine = setup.simulate(level, reference_steps)
    reference = solve_backward(fine, setup.fbsde, setup.spec)
    logger.info("Reference at N=%d: Y0 = %.6f", reference_steps, reference.y0)
    moments = truncation_moments(setup.model, setup.representation, level, setup.p)

    rows = []
    for steps in tqdm(steps_list, desc="Backward cells", disable=not setup.show_progress):
        row = setup.base_row(study_id, "backward_rate", f"N={steps}", level, steps)

        def work(steps=steps):
            coarse = coarsen_ensemble(fine, steps=steps, max_cells=setup.max_cells)
            solution = solve_backward(coarse, setup.fbsde, setup.spec)
            report = with_metadata(empirical_norms(solution, reference, setup.p, setup.batches), setup, level)
            fields = _solution_fields(solution)
            fields.update(_report_fields(report))
            fields["reference_y0"] = reference.y0
            fields["predicted"] = predicted_error_shape(moments, steps)
            return fields

        rows.append(_run_cell(row, work))

    ledger = _ledger(rows)
    fit = _fit(ledger, "N", "y0_error", "loglog")
    plot_rows = _plot_rows(study_id, ledger, "y0_error", "N") + _plot_rows(study_id, ledger, "sup_y_error", "N")
    checks = {"all_cells_ok": bool((ledger["status"] == "ok").all())}
    return StudyResult(study_id, "backward_rate", ledger, pd.DataFrame(plot_rows, columns=PLOT_COLUMNS), fit, checks)


def truncation_study(
    setup: StudySetup,
    levels: Sequence[float],
    steps: int,
    reference_level: float,
    study_id: str = "truncation"
) -> StudyResult:
    """
    Error against the truncation level n at fixed N.

    All levels share the epochs of the reference level n_ref, so the cells
    differ only by the jumps they drop. The headline metric is the sup-mean
    Y error, fitted on a semilog scale.
    """
    levels = sorted(float(n) for n in levels)
    if levels[-1] > reference_level:
        raise DomainError(f"Levels must not exceed the reference level {reference_level}, got {levels[-1]}")
    fine = setup.simulate(reference_level, steps)
    reference = solve_backward(fine, setup.fbsde, setup.spec)
    logger.info("Reference at n=%g: Y0 = %.6f", reference_level, reference.y0)

    rows = []
    for n in tqdm(levels, desc="Truncation cells", disable=not setup.show_progress):
        row = setup.base_row(study_id, "truncation", f"n={n:g}", n, steps)

        def work(n=n):
            coarse = coarsen_ensemble(fine, level=n, max_cells=setup.max_cells)
            solution = solve_backward(coarse, setup.fbsde, setup.spec)
            report = with_metadata(empirical_norms(solution, reference, setup.p, setup.batches), setup, n)
            fields = _solution_fields(solution)
            fields.update(_report_fields(report))
            forward, (low, high) = power_mean(forward_samples(coarse, fine, setup.p), setup.p, setup.batches)
            fields.update({"forward_error": forward, "forward_ci_low": low, "forward_ci_high": high})
            fields["reference_y0"] = reference.y0
            fields["predicted"] = predicted_truncation_shape(
                truncation_moments(setup.model, setup.representation, n, setup.p)
            )
            return fields

        rows.append(_run_cell(row, work))

    ledger = _ledger(rows)
    fit = _fit(ledger, "n", "sup_y_error", "semilog")
    plot_rows = _plot_rows(study_id, ledger, "sup_y_error", "n") + _plot_rows(study_id, ledger, "forward_error", "n")
    checks = {
        "all_cells_ok": bool((ledger["status"] == "ok").all()),
        "decreasing_in_n": _decreasing_within_noise(ledger, "sup_y_error"),
    }
    return StudyResult(study_id, "truncation", ledger, pd.DataFrame(plot_rows, columns=PLOT_COLUMNS), fit, checks)


def with_metadata(report: ErrorReport, setup: StudySetup, n: float) -> ErrorReport:
    """Attach the reproduction metadata of a study to a bare report."""
    return replace(
        report, n=float(n), M=setup.paths, p=setup.p, seed=setup.seed,
        model=setup.model.identifier, problem=setup.fbsde.name
    )
