"""
Study configuration, execution and the command-line interface.
"""

from fbsde_engine.study.config import (
    StudyKind,
    ModelConfig,
    ProblemConfig,
    SchemeConfig,
    ReferenceConfig,
    MomentsConfig,
    ValidationConfig,
    StudyConfig,
    parse_config,
    load_config
)
from fbsde_engine.study.runner import (
    ValidationResult,
    StudyRunner,
    run_study,
    write_moments_table
)

__all__ = [
    "StudyKind",
    "ModelConfig",
    "ProblemConfig",
    "SchemeConfig",
    "ReferenceConfig",
    "MomentsConfig",
    "ValidationConfig",
    "StudyConfig",
    "parse_config",
    "load_config",
    "ValidationResult",
    "StudyRunner",
    "run_study",
    "write_moments_table"
]
