"""
Study configuration files.

A study is one YAML file::

    study:
      id: b1_smoke
      kind: benchmark            # benchmark | forward_rate | backward_rate | truncation
    seed: 2024
    output_dir: results/b1_smoke
    model:
      kind: gamma
      alpha: 1.0
      beta: 1.0
      representation: bondesson
    problem:
      name: b1_linear            # or "custom" with an ``expressions`` block
      params: {b0: 0.2}
    scheme:
      steps: [32]
      levels: [10]
      paths: 10000
      p: 2
      regression: {basis: global_polynomial, degree: 3}
    reference:
      mode: closed_form          # or fine_discretization with steps / level
    moments:
      representations: [bondesson, inverse_levy]
      levels: [0, 0.5, 1, 2, 4, 8]

Everything is validated when the file is loaded, before any simulation.
"""

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import yaml

from levy_engine.errors import ConfigurationError, LevyFbsdeError
from levy_engine.measures.models import LevyModel
from levy_engine.shotnoise.representations import SeriesRepresentation, default_representation
from fbsde_engine.backward.regression import RegressionSpec
from fbsde_engine.forward.ensemble import DEFAULT_MAX_CELLS
from fbsde_engine.harness.norms import DEFAULT_BATCHES
from fbsde_engine.harness.reference import ReferenceMode
from fbsde_engine.problems.benchmarks import BenchmarkProblem, get_problem, problem_from_expressions
from fbsde_engine.problems.problem import FbsdeProblem


CUSTOM_PROBLEM = "custom"

_TOP_LEVEL_KEYS = {"study", "seed", "output_dir", "model", "problem", "scheme", "reference", "moments", "validation"}


class StudyKind(str, Enum):
    BENCHMARK = "benchmark"
    FORWARD_RATE = "forward_rate"
    BACKWARD_RATE = "backward_rate"
    TRUNCATION = "truncation"


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, default=str)


def _section(raw: dict, key: str, required: bool = True) -> dict:
    value = raw.get(key)
    if value is None:
        if required:
            raise ConfigurationError(f"Missing config section {key!r}")
        return {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"Config section {key!r} must be a mapping")
    return value


def _check_keys(section: str, values: dict, allowed):
    unknown = set(values) - set(allowed)
    if unknown:
        raise ConfigurationError(f"Unknown keys in {section!r}: {', '.join(sorted(unknown))}")


def _number_list(section: str, key: str, values, cast) -> tuple:
    if values is None:
        raise ConfigurationError(f"{section}.{key} is required")
    if not isinstance(values, (list, tuple)):
        values = [values]
    if len(values) == 0:
        raise ConfigurationError(f"{section}.{key} must not be empty")
    try:
        return tuple(cast(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{section}.{key} holds a non-numeric entry: {values}") from exc


def _representation(model: LevyModel, value) -> SeriesRepresentation:
    if value is None:
        return default_representation(model)
    if isinstance(value, str):
        value = {"method": value}
    if not isinstance(value, dict) or "method" not in value:
        raise ConfigurationError("model.representation must be a method name or a mapping with 'method'")
    _check_keys("model.representation", value, ("method", "centered", "mark_kind"))
    try:
        return SeriesRepresentation(
            model, value["method"],
            centered=bool(value.get("centered", False)),
            mark_kind=value.get("mark_kind")
        )
    except ConfigurationError:
        raise
    except ValueError as exc:
        raise ConfigurationError(f"Invalid representation {value!r}: {exc}") from exc


@dataclass(frozen=True)
class ModelConfig:
    """Lévy model and the series representation used to simulate it."""
    model: LevyModel
    representation: SeriesRepresentation

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        values = dict(values)
        representation = values.pop("representation", None)
        model = LevyModel.from_dict(values)
        return cls(model, _representation(model, representation))


@dataclass(frozen=True)
class ProblemConfig:
    """A built-in problem by name, or a custom one from expressions."""
    name: str
    params: Dict[str, Any] = field(default_factory=dict)
    expressions: Optional[Dict[str, Any]] = None

    @classmethod
    def from_dict(cls, values: dict) -> "ProblemConfig":
        _check_keys("problem", values, ("name", "params", "expressions"))
        name = values.get("name")
        if not name:
            raise ConfigurationError("problem.name is required")
        params = values.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigurationError("problem.params must be a mapping")
        expressions = values.get("expressions")
        if name == CUSTOM_PROBLEM and not isinstance(expressions, dict):
            raise ConfigurationError("A custom problem needs an 'expressions' mapping")
        if name != CUSTOM_PROBLEM and expressions is not None:
            raise ConfigurationError(f"problem.expressions is only read when name is {CUSTOM_PROBLEM!r}")
        return cls(str(name), dict(params), dict(expressions) if expressions is not None else None)

    def build(self) -> Union[BenchmarkProblem, FbsdeProblem]:
        if self.name == CUSTOM_PROBLEM:
            definition = dict(self.expressions)
            definition.setdefault("name", CUSTOM_PROBLEM)
            return problem_from_expressions(definition)
        return get_problem(self.name, **self.params)


@dataclass(frozen=True)
class SchemeConfig:
    """
    Discretization grid of the study.

    Attributes:
        steps: Regular step counts N
        levels: Truncation levels n
        paths: Number of paths M
        p: Norm order of the error measurements
        batches: Batches for the batch-means intervals
        regression: Conditional expectation estimator
        max_cells: Cell budget of one ensemble
        num_workers: Sampling threads (None reads FBSDE_NUM_WORKERS)
        chunk_paths: Paths per block of a forward rate study
    """
    steps: Tuple[int, ...]
    levels: Tuple[float, ...]
    paths: int
    p: float = 2.0
    batches: int = DEFAULT_BATCHES
    regression: RegressionSpec = field(default_factory=RegressionSpec)
    max_cells: int = DEFAULT_MAX_CELLS
    num_workers: Optional[int] = None
    chunk_paths: Optional[int] = None

    @classmethod
    def from_dict(cls, values: dict) -> "SchemeConfig":
        _check_keys("scheme", values, (
            "steps", "levels", "paths", "p", "batches", "regression", "max_cells", "num_workers", "chunk_paths"
        ))
        steps = _number_list("scheme", "steps", values.get("steps"), int)
        levels = _number_list("scheme", "levels", values.get("levels"), float)
        if any(s < 1 for s in steps):
            raise ConfigurationError(f"scheme.steps must be positive, got {list(steps)}")
        if any(not n > 0 for n in levels):
            raise ConfigurationError(f"scheme.levels must be positive, got {list(levels)}")
        if len(set(steps)) != len(steps) or len(set(levels)) != len(levels):
            raise ConfigurationError("scheme.steps and scheme.levels must not repeat entries")
        if "paths" not in values:
            raise ConfigurationError("scheme.paths is required")
        paths = int(values["paths"])
        if paths < 1:
            raise ConfigurationError(f"scheme.paths must be positive, got {paths}")
        p = float(values.get("p", 2.0))
        if p < 2.0:
            raise ConfigurationError(f"scheme.p must be >= 2, got {p}")
        batches = int(values.get("batches", DEFAULT_BATCHES))
        if batches < 2:
            raise ConfigurationError(f"scheme.batches must be >= 2, got {batches}")
        regression = RegressionSpec.from_dict(values.get("regression"))
        if paths < regression.min_samples:
            raise ConfigurationError(
                f"scheme.paths={paths} is below {regression.min_samples} "
                f"(10 per basis function of dimension {regression.dimension})"
            )
        num_workers = values.get("num_workers")
        chunk_paths = values.get("chunk_paths")
        return cls(
            steps=steps, levels=levels, paths=paths, p=p, batches=batches, regression=regression,
            max_cells=int(values.get("max_cells", DEFAULT_MAX_CELLS)),
            num_workers=None if num_workers is None else int(num_workers),
            chunk_paths=None if chunk_paths is None else int(chunk_paths)
        )


@dataclass(frozen=True)
class ReferenceConfig:
    """Reference solution: closed form, or the same paths at (steps, level)."""
    mode: ReferenceMode = ReferenceMode.CLOSED_FORM
    steps: Optional[int] = None
    level: Optional[float] = None

    @classmethod
    def from_dict(cls, values: dict, default_mode: ReferenceMode) -> "ReferenceConfig":
        _check_keys("reference", values, ("mode", "steps", "level"))
        try:
            mode = ReferenceMode(values.get("mode", default_mode))
        except ValueError as exc:
            names = ", ".join(m.value for m in ReferenceMode)
            raise ConfigurationError(f"reference.mode must be one of: {names}") from exc
        steps = values.get("steps")
        level = values.get("level")
        if steps is not None and int(steps) < 1:
            raise ConfigurationError(f"reference.steps must be positive, got {steps}")
        if level is not None and not float(level) > 0:
            raise ConfigurationError(f"reference.level must be positive, got {level}")
        return cls(mode, None if steps is None else int(steps), None if level is None else float(level))


@dataclass(frozen=True)
class MomentsConfig:
    """Rows of the moments table."""
    representations: Tuple[SeriesRepresentation, ...]
    levels: Tuple[float, ...]


@dataclass(frozen=True)
class ValidationConfig:
    """Sampling box of the Lipschitz spot check."""
    x_range: Tuple[float, float] = (-5.0, 5.0)
    value_range: float = 5.0
    samples: int = 2000

    @classmethod
    def from_dict(cls, values: dict) -> "ValidationConfig":
        _check_keys("validation", values, ("x_range", "value_range", "samples"))
        x_range = tuple(float(v) for v in values.get("x_range", (-5.0, 5.0)))
        if len(x_range) != 2 or x_range[0] > x_range[1]:
            raise ConfigurationError(f"validation.x_range must be [low, high], got {list(x_range)}")
        samples = int(values.get("samples", 2000))
        if samples < 1:
            raise ConfigurationError("validation.samples must be positive")
        return cls(x_range, float(values.get("value_range", 5.0)), samples)


@dataclass(frozen=True, eq=False)
class StudyConfig:
    """
    A fully validated study.

    Attributes:
        study_id: Label written into every ledger row
        kind: Study kind
        seed: Master seed
        output_dir: Directory of the artifacts
        model, problem, scheme, reference, moments, validation: Sections
        raw: The parsed mapping, hashed into the manifest
    """
    study_id: str
    kind: StudyKind
    seed: int
    output_dir: Path
    model: ModelConfig
    problem: ProblemConfig
    scheme: SchemeConfig
    reference: ReferenceConfig
    moments: MomentsConfig
    validation: ValidationConfig
    raw: Dict[str, Any]

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the parsed file."""
        return hashlib.sha256(canonical_json(self.raw).encode("utf-8")).hexdigest()

    def build_problem(self) -> Union[BenchmarkProblem, FbsdeProblem]:
        return self.problem.build()


def _check_kind(kind: StudyKind, scheme: SchemeConfig, reference: ReferenceConfig,
                problem: Union[BenchmarkProblem, FbsdeProblem]):
    """Cross-section rules of each study kind."""
    if kind == StudyKind.BENCHMARK:
        if reference.mode == ReferenceMode.CLOSED_FORM:
            if not isinstance(problem, BenchmarkProblem):
                raise ConfigurationError(
                    f"Problem {problem.name!r} has no closed form; use reference.mode: fine_discretization"
                )
        elif reference.steps is None and reference.level is None:
            raise ConfigurationError("A fine_discretization reference needs reference.steps or reference.level")
        elif reference.steps is not None:
            bad = [s for s in scheme.steps if reference.steps % s != 0]
            if bad:
                raise ConfigurationError(f"reference.steps={reference.steps} is not a multiple of N in {bad}")
        if reference.level is not None and reference.level < max(scheme.levels):
            raise ConfigurationError("reference.level must not be below the largest scheme level")
        return

    if kind in (StudyKind.FORWARD_RATE, StudyKind.BACKWARD_RATE):
        if len(scheme.levels) != 1:
            raise ConfigurationError(f"A {kind.value} study runs at one level n; got {list(scheme.levels)}")
        if reference.steps is None:
            raise ConfigurationError(f"A {kind.value} study needs reference.steps (N_ref)")
        bad = [s for s in scheme.steps if reference.steps % s != 0]
        if bad:
            raise ConfigurationError(f"reference.steps={reference.steps} is not a multiple of N in {bad}")
        return

    if len(scheme.steps) != 1:
        raise ConfigurationError(f"A truncation study runs at one N; got {list(scheme.steps)}")
    if reference.level is None:
        raise ConfigurationError("A truncation study needs reference.level (n_ref)")
    if reference.level < max(scheme.levels):
        raise ConfigurationError(
            f"reference.level={reference.level} is below the largest scheme level {max(scheme.levels)}"
        )


def parse_config(raw: dict, base_dir: Optional[Path] = None) -> StudyConfig:
    """
    Validate a parsed configuration mapping.

    Args:
        raw: Mapping as read from YAML
        base_dir: Directory relative output paths are resolved against

    Raises:
        ConfigurationError: naming the first offending key
    """
    if not isinstance(raw, dict):
        raise ConfigurationError("A study config must be a mapping")
    _check_keys("<root>", raw, _TOP_LEVEL_KEYS)

    study = _section(raw, "study")
    _check_keys("study", study, ("id", "kind"))
    try:
        kind = StudyKind(study.get("kind", StudyKind.BENCHMARK.value))
    except ValueError as exc:
        names = ", ".join(k.value for k in StudyKind)
        raise ConfigurationError(f"study.kind must be one of: {names}") from exc
    study_id = str(study.get("id") or kind.value)

    seed = raw.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigurationError(f"seed is mandatory and must be a nonnegative integer, got {seed!r}")

    output_dir = Path(str(raw.get("output_dir") or Path("results") / study_id))
    if base_dir is not None and not output_dir.is_absolute():
        output_dir = Path(base_dir) / output_dir

    try:
        model = ModelConfig.from_dict(_section(raw, "model"))
        problem_config = ProblemConfig.from_dict(_section(raw, "problem"))
        problem = problem_config.build()
        scheme = SchemeConfig.from_dict(_section(raw, "scheme"))
        if isinstance(problem, BenchmarkProblem):
            default_mode = ReferenceMode.CLOSED_FORM
        else:
            default_mode = ReferenceMode.FINE_DISCRETIZATION
        reference = ReferenceConfig.from_dict(_section(raw, "reference", required=False), default_mode)
        _check_kind(kind, scheme, reference, problem)

        moments_section = _section(raw, "moments", required=False)
        _check_keys("moments", moments_section, ("representations", "levels"))
        methods = moments_section.get("representations")
        representations = (model.representation,) if methods is None else tuple(
            _representation(model.model, method) for method in methods
        )
        moment_levels = scheme.levels
        if "levels" in moments_section:
            moment_levels = _number_list("moments", "levels", moments_section["levels"], float)
        if any(n < 0 for n in moment_levels):
            raise ConfigurationError(f"moments.levels must be >= 0, got {list(moment_levels)}")
        moments = MomentsConfig(representations, moment_levels)
        validation = ValidationConfig.from_dict(_section(raw, "validation", required=False))
    except ConfigurationError:
        raise
    except (LevyFbsdeError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid config: {exc}") from exc

    return StudyConfig(
        study_id=study_id, kind=kind, seed=seed, output_dir=output_dir,
        model=model, problem=problem_config, scheme=scheme, reference=reference,
        moments=moments, validation=validation, raw=raw
    )


def load_config(path: Union[str, Path]) -> StudyConfig:
    """
    Read and validate a YAML study file.

    Relative ``output_dir`` values are resolved against the working directory.

    Raises:
        ConfigurationError: on unreadable files, YAML syntax errors or invalid values
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigurationError(f"Cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"Config {path} is not valid YAML: {exc}") from exc
    return parse_config(raw)
