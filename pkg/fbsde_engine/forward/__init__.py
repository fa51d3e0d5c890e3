"""
Jump-adapted Euler scheme for the truncated forward SDE.
"""

from fbsde_engine.forward.grid import (
    MERGE_TOLERANCE,
    NodeTag,
    JumpAdaptedGrid,
    regular_times,
    build_grid
)
from fbsde_engine.forward.euler import euler_step, simulate_path, simulate_states
from fbsde_engine.forward.ensemble import (
    ForwardPath,
    PathEnsemble,
    simulate_ensemble,
    coarsen_ensemble,
    refine_ensemble,
    save_ensemble,
    load_ensemble,
    ensemble_table
)

__all__ = [
    "MERGE_TOLERANCE",
    "NodeTag",
    "JumpAdaptedGrid",
    "regular_times",
    "build_grid",
    "euler_step",
    "simulate_path",
    "simulate_states",
    "ForwardPath",
    "PathEnsemble",
    "simulate_ensemble",
    "coarsen_ensemble",
    "refine_ensemble",
    "save_ensemble",
    "load_ensemble",
    "ensemble_table"
]
