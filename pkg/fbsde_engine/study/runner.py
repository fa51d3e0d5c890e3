"""
Run a configured study and write its artifacts.

Artifacts in ``output_dir``:
- ledger.csv: one row per cell (columns LEDGER_COLUMNS)
- plot_table.csv: long-format (study_id, metric, axis, value, error, ci_low, ci_high)
- moments.csv: (representation, n, p, sigma2, sigma_p, m1_abs, m_p, zeta1)
- manifest.json: config hash, seed, versions, fit, checks and the SHA-256 of
  every artifact above
"""

import hashlib
import json
import logging
import os
import platform
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd
import scipy

from levy_engine.measures.moments import moments_table
from fbsde_engine import __version__
from fbsde_engine.harness.studies import (
    StudyResult,
    StudySetup,
    backward_rate_study,
    benchmark_study,
    forward_rate_study,
    truncation_study
)
from fbsde_engine.problems.benchmarks import BenchmarkProblem
from fbsde_engine.problems.problem import (
    InvertibilityReport,
    CheckStatus,
    LipschitzReport,
    SampleSpec,
    estimate_lipschitz,
    validate_invertibility
)
from fbsde_engine.study.config import StudyConfig, StudyKind


logger = logging.getLogger(__name__)

LEDGER_FILE = "ledger.csv"
PLOT_TABLE_FILE = "plot_table.csv"
MOMENTS_FILE = "moments.csv"
MANIFEST_FILE = "manifest.json"

FLOAT_FORMAT = "%.17g"


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def library_versions() -> Dict[str, str]:
    return {
        "fbsde_engine": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def write_table(table: pd.DataFrame, path: Path) -> Path:
    """CSV with full float precision so reruns compare byte for byte."""
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


@dataclass(frozen=True)
class ValidationResult:
    """Structural checks of a configured problem."""
    invertibility: InvertibilityReport
    lipschitz: LipschitzReport
    level: float

    @property
    def passed(self) -> bool:
        return self.lipschitz.consistent and self.invertibility.status != CheckStatus.FAIL

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "invertibility": self.invertibility.as_dict(),
            "lipschitz": {
                "declared_K": self.lipschitz.declared_K,
                "estimates": self.lipschitz.estimates,
                "violations": self.lipschitz.violations,
                "rho_violations": len(self.lipschitz.rho_violations),
                "consistent": self.lipschitz.consistent,
            },
        }


class StudyRunner:
    """
    Executes one StudyConfig.

    Example:
        >>> runner = StudyRunner(load_config("studies/b1_smoke.yaml"))
        >>> result = runner.run()
        >>> runner.save(result)
    """

    def __init__(
        self,
        config: StudyConfig,
        output_dir: Optional[Path] = None,
        num_workers: Optional[int] = None,
        show_progress: bool = False
    ):
        """
        Args:
            config: Validated study configuration
            output_dir: Overrides ``config.output_dir``
            num_workers: Overrides ``scheme.num_workers``
            show_progress: Show tqdm bars over cells
        """
        self.config = config
        self.output_dir = Path(output_dir) if output_dir is not None else config.output_dir
        self.num_workers = num_workers if num_workers is not None else config.scheme.num_workers
        self.show_progress = show_progress
        self.problem = config.build_problem()

    def setup(self) -> StudySetup:
        scheme = self.config.scheme
        return StudySetup(
            problem=self.problem,
            model=self.config.model.model,
            representation=self.config.model.representation,
            paths=scheme.paths,
            seed=self.config.seed,
            spec=scheme.regression,
            p=scheme.p,
            batches=scheme.batches,
            num_workers=self.num_workers,
            max_cells=scheme.max_cells,
            show_progress=self.show_progress
        )

    def run(self) -> StudyResult:
        """Dispatch to the study of ``config.kind``."""
        config = self.config
        scheme, reference = config.scheme, config.reference
        setup = self.setup()
        logger.info(
            "Study %s (%s): %s driven by %s, seed %d",
            config.study_id, config.kind.value, setup.fbsde.name,
            setup.representation.identifier, config.seed
        )
        if config.kind == StudyKind.BENCHMARK:
            return benchmark_study(
                setup, scheme.levels, scheme.steps, reference.mode,
                reference_steps=reference.steps, reference_level=reference.level,
                study_id=config.study_id
            )
        if config.kind == StudyKind.FORWARD_RATE:
            return forward_rate_study(
                setup, scheme.levels[0], scheme.steps, reference.steps,
                chunk_paths=scheme.chunk_paths, study_id=config.study_id
            )
        if config.kind == StudyKind.BACKWARD_RATE:
            return backward_rate_study(
                setup, scheme.levels[0], scheme.steps, reference.steps, study_id=config.study_id
            )
        return truncation_study(
            setup, scheme.levels, scheme.steps[0], reference.level, study_id=config.study_id
        )

    def moments(self) -> pd.DataFrame:
        """Moment table over the configured representations and levels."""
        config = self.config
        return moments_table(
            config.model.model, config.moments.representations, config.moments.levels,
            p=config.model.model.moment_order_p
        )

    def validate(self) -> ValidationResult:
        """Invertibility check at the largest level and a Lipschitz spot check."""
        config = self.config
        fbsde = self.problem.problem if isinstance(self.problem, BenchmarkProblem) else self.problem
        level = max(config.scheme.levels)
        invertibility = validate_invertibility(
            fbsde, config.model.representation, level,
            SampleSpec(x_range=config.validation.x_range)
        )
        lipschitz = estimate_lipschitz(
            fbsde, config.validation.x_range, config.validation.value_range,
            config.validation.samples, seed=config.seed
        )
        return ValidationResult(invertibility, lipschitz, level)

    # ----- artifacts -----

    def _prepare_output(self) -> Path:
        os.makedirs(self.output_dir, exist_ok=True)
        return self.output_dir

    def manifest(self, artifacts: Dict[str, Path], extra: Optional[dict] = None) -> dict:
        config = self.config
        values = {
            "study_id": config.study_id,
            "kind": config.kind.value,
            "seed": config.seed,
            "config_hash": config.config_hash,
            "config": config.raw,
            "model": config.model.model.to_dict(),
            "representation": config.model.representation.method.value,
            "problem": config.problem.name,
            "versions": library_versions(),
            "created_at": datetime.now(timezone.utc).isoformat(),
            "artifacts": {
                name: {"file": path.name, "sha256": file_sha256(path)}
                for name, path in sorted(artifacts.items())
            },
        }
        values.update(extra or {})
        return values

    def _write_manifest(self, values: dict) -> Path:
        path = self.output_dir / MANIFEST_FILE
        with open(path, "w", encoding="utf-8") as f:
            json.dump(values, f, indent=2, sort_keys=True, default=str)
        return path

    def save(self, result: StudyResult) -> Dict[str, Path]:
        """Write ledger, plot table and manifest of a finished study."""
        self._prepare_output()
        artifacts = {
            "ledger": write_table(result.ledger, self.output_dir / LEDGER_FILE),
            "plot_table": write_table(result.plot_table, self.output_dir / PLOT_TABLE_FILE),
        }
        extra = {
            "cells": int(len(result.ledger)),
            "failed_cells": result.failed_cells,
            "fit": result.fit.as_dict() if result.fit is not None else None,
            "checks": result.checks,
        }
        artifacts["manifest"] = self._write_manifest(self.manifest(artifacts, extra))
        logger.info("Wrote %d artifacts to %s", len(artifacts), self.output_dir)
        return artifacts

    def save_moments(self, table: pd.DataFrame) -> Dict[str, Path]:
        """Write the moments table and a manifest for it."""
        self._prepare_output()
        artifacts = {"moments": write_table(table, self.output_dir / MOMENTS_FILE)}
        artifacts["manifest"] = self._write_manifest(self.manifest(artifacts, {"rows": int(len(table))}))
        return artifacts


def run_study(config: StudyConfig, output_dir: Optional[Path] = None, num_workers: Optional[int] = None,
              show_progress: bool = False):
    """
    Run a study and write its artifacts.

    Returns:
        (StudyResult, {artifact name: path})
    """
    runner = StudyRunner(config, output_dir, num_workers, show_progress)
    result = runner.run()
    return result, runner.save(result)


def write_moments_table(config: StudyConfig, output_dir: Optional[Path] = None):
    """
    Compute and write the moments table of a study's model.

    Returns:
        (table, {artifact name: path})
    """
    runner = StudyRunner(config, output_dir)
    table = runner.moments()
    return table, runner.save_moments(table)
