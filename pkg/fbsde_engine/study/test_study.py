"""
Tests for study configuration, the runner and the command-line interface.
"""

import copy
import json
import math

import pandas as pd
import pytest
import yaml

from levy_engine.errors import ConfigurationError
from fbsde_engine.harness.reference import ReferenceMode
from fbsde_engine.harness.studies import LEDGER_COLUMNS
from fbsde_engine.problems.benchmarks import BenchmarkProblem
from fbsde_engine.problems.problem import FbsdeProblem
from fbsde_engine.study.cli import EXIT_CONFIGURATION, EXIT_NUMERIC, EXIT_OK, main
from fbsde_engine.study.config import StudyKind, load_config, parse_config
from fbsde_engine.study.runner import (
    LEDGER_FILE,
    MANIFEST_FILE,
    MOMENTS_FILE,
    StudyRunner,
    file_sha256,
    run_study,
    write_moments_table
)


BASE = {
    "study": {"id": "b1_small", "kind": "benchmark"},
    "seed": 11,
    "model": {"kind": "gamma", "alpha": 1.0, "beta": 1.0, "representation": "bondesson"},
    "problem": {"name": "b1_linear"},
    "scheme": {"steps": [2, 4], "levels": [2.0], "paths": 200, "regression": {"degree": 1}},
    "reference": {"mode": "closed_form"},
}


def config_with(**sections):
    raw = copy.deepcopy(BASE)
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(raw.get(key), dict):
            raw[key].update(value)
        else:
            raw[key] = value
    return raw


def write_config(tmp_path, raw, name="study.yaml"):
    path = tmp_path / name
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(raw, f)
    return str(path)


# ----- configuration -----

def test_parse_valid_config(tmp_path):
    config = parse_config(config_with(output_dir=str(tmp_path)))
    assert config.kind == StudyKind.BENCHMARK
    assert config.scheme.steps == (2, 4)
    assert config.scheme.levels == (2.0,)
    assert config.scheme.regression.degree == 1
    assert config.reference.mode == ReferenceMode.CLOSED_FORM
    assert config.model.representation.method.value == "bondesson"
    assert isinstance(config.build_problem(), BenchmarkProblem)
    # The moments table defaults to the scheme's levels and representation.
    assert config.moments.levels == (2.0,)
    assert len(config.moments.representations) == 1


def test_config_hash_tracks_content():
    first = parse_config(config_with())
    assert first.config_hash == parse_config(config_with()).config_hash
    assert first.config_hash != parse_config(config_with(seed=12)).config_hash
    assert len(first.config_hash) == 64


@pytest.mark.parametrize("raw", [
    config_with(scheme={"steps": []}),
    config_with(scheme={"levels": []}),
    config_with(scheme={"steps": [0]}),
    config_with(scheme={"paths": 10}),
    config_with(scheme={"p": 1.5}),
    config_with(seed=None),
    config_with(seed="eleven"),
    config_with(extra_section={"a": 1}),
    config_with(study={"kind": "sweep"}),
    config_with(model={"kind": "stable"}),
    config_with(model={"representation": "rosinski_tempered_stable"}),
    config_with(problem={"name": "b9"}),
    config_with(problem={"name": "nonlinear_forward"}),
    config_with(problem={"name": "custom"}),
    config_with(reference={"mode": "exact"}),
    config_with(reference={"mode": "fine_discretization"}),
    config_with(reference={"mode": "fine_discretization", "steps": 6}),
    config_with(study={"kind": "forward_rate"}, reference={"steps": None}),
    config_with(study={"kind": "forward_rate"}, scheme={"levels": [1.0, 2.0]}, reference={"steps": 8}),
    config_with(study={"kind": "truncation"}, scheme={"steps": [4]}, reference={"level": 1.0}),
    config_with(study={"kind": "truncation"}, reference={"level": 4.0}),
])
def test_invalid_configs_are_rejected(raw):
    with pytest.raises(ConfigurationError):
        parse_config(raw)


def test_custom_problem_from_expressions():
    raw = config_with(
        problem={"name": "custom", "expressions": {
            "b": "sin(x)", "a": "0.4", "h": "0.2", "hx": "0", "f": "-0.5*y", "g": "x",
            "x0": 0.0, "horizon": 1.0, "lipschitz_K": 1.0,
        }},
        reference={"mode": "fine_discretization", "steps": 8}
    )
    config = parse_config(raw)
    problem = config.build_problem()
    assert isinstance(problem, FbsdeProblem)
    assert problem.name == "custom"
    assert float(problem.generator(0.0, 0.0, 2.0, 0.0, 0.0)) == pytest.approx(-1.0)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.yaml")
    broken = tmp_path / "broken.yaml"
    broken.write_text("scheme: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_config(broken)


# ----- runner -----

def test_rerun_gives_identical_ledger(tmp_path):
    config = parse_config(config_with())
    first, first_files = run_study(config, output_dir=tmp_path / "first", num_workers=1)
    second, second_files = run_study(config, output_dir=tmp_path / "second", num_workers=2)
    assert first_files["ledger"].read_bytes() == second_files["ledger"].read_bytes()
    assert first_files["plot_table"].read_bytes() == second_files["plot_table"].read_bytes()
    assert list(first.ledger.columns) == LEDGER_COLUMNS
    assert first.failed_cells == 0


def test_manifest_traces_artifacts(tmp_path):
    config = parse_config(config_with())
    _, files = run_study(config, output_dir=tmp_path)
    with open(files["manifest"], encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["seed"] == 11
    assert manifest["config_hash"] == config.config_hash
    assert manifest["cells"] == 2 and manifest["failed_cells"] == 0
    assert manifest["artifacts"]["ledger"]["sha256"] == file_sha256(tmp_path / LEDGER_FILE)
    assert set(manifest["versions"]) >= {"fbsde_engine", "numpy", "scipy", "pandas"}
    assert manifest["checks"]["all_cells_ok"]


def test_moments_table_rows(tmp_path):
    raw = config_with(moments={"representations": ["bondesson", "inverse_levy"], "levels": [0.0, 0.5, 1.0, 2.0]})
    table, files = write_moments_table(parse_config(raw), output_dir=tmp_path)
    bondesson = table[table["representation"] == "bondesson"].set_index("n")
    inverse = table[table["representation"] == "inverse_levy"].set_index("n")
    assert bondesson.loc[2.0, "sigma2"] == pytest.approx(math.exp(-4.0), rel=1e-8)
    # n = 0 discards everything: the full second moment αΓ(2)/β² = 1.
    assert bondesson.loc[0.0, "sigma2"] == pytest.approx(1.0, rel=1e-10)
    for n in (0.5, 1.0, 2.0):
        assert inverse.loc[n, "sigma2"] <= bondesson.loc[n, "sigma2"] * (1.0 + 1e-8)
    written = pd.read_csv(files["moments"])
    assert list(written.columns) == list(table.columns)
    assert len(written) == 8


def test_validation_of_a_benchmark():
    result = StudyRunner(parse_config(config_with())).validate()
    assert result.lipschitz.consistent
    assert result.invertibility.passed
    assert result.passed
    assert result.as_dict()["level"] == 2.0


# ----- command line -----

def test_cli_run(tmp_path, capsys):
    path = write_config(tmp_path, config_with(output_dir=str(tmp_path / "out")))
    assert main(["run", path, "--no-progress"]) == EXIT_OK
    assert (tmp_path / "out" / LEDGER_FILE).exists()
    assert (tmp_path / "out" / MANIFEST_FILE).exists()
    assert "Summary" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path):
    path = write_config(tmp_path, config_with(scheme={"steps": []}, output_dir=str(tmp_path / "out")))
    assert main(["run", path]) == EXIT_CONFIGURATION
    # Nothing is written before validation passes.
    assert not (tmp_path / "out").exists()


def test_cli_numeric_exit_code_when_every_cell_fails(tmp_path):
    raw = config_with(
        problem={"name": "custom", "expressions": {
            "b": "0", "a": "0.3", "h": "0.5", "hx": "0", "f": "-10*y", "g": "x",
            "x0": 1.0, "horizon": 1.0, "lipschitz_K": 10.0,
        }},
        scheme={"steps": [2]},
        reference={"mode": "fine_discretization", "steps": 4},
        output_dir=str(tmp_path / "out")
    )
    path = write_config(tmp_path, raw)
    assert main(["run", path, "--no-progress"]) == EXIT_NUMERIC
    ledger = pd.read_csv(tmp_path / "out" / LEDGER_FILE)
    assert ledger["status"].iloc[0].startswith("failed: FixedPointError")


def test_cli_moments_and_validate(tmp_path, capsys):
    path = write_config(tmp_path, config_with(output_dir=str(tmp_path / "out")))
    assert main(["moments", path]) == EXIT_OK
    assert (tmp_path / "out" / MOMENTS_FILE).exists()
    assert main(["validate", path]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Configuration is valid" in out
    assert "Declared K" in out


# ----- at scale -----

@pytest.mark.slow
def test_benchmark_smoke_study(tmp_path):
    raw = config_with(scheme={"steps": [32], "levels": [10.0], "paths": 10_000, "regression": {"degree": 3}})
    result, _ = run_study(parse_config(raw), output_dir=tmp_path)
    row = result.ledger.iloc[0]
    assert row["status"] == "ok"
    assert row["reference_y0"] == pytest.approx(1.2)
    assert row["y0_ci_low"] <= 1.2 <= row["y0_ci_high"]
