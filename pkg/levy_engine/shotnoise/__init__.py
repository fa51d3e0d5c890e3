"""
Shot noise series representations and truncated jump skeletons.
"""

from levy_engine.shotnoise.representations import (
    SeriesMethod,
    MarkKind,
    SeriesRepresentation,
    default_representation
)
from levy_engine.shotnoise.skeleton import (
    JumpSkeleton,
    sample_epochs,
    sample_skeleton,
    skeleton_table
)

__all__ = [
    "SeriesMethod",
    "MarkKind",
    "SeriesRepresentation",
    "default_representation",
    "JumpSkeleton",
    "sample_epochs",
    "sample_skeleton",
    "skeleton_table"
]
