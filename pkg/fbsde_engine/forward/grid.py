"""
Jump-adapted time grids: the regular grid kT/N superposed with the jump
times of one skeleton.
"""

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

from levy_engine.errors import ConfigurationError, DomainError
from levy_engine.shotnoise.skeleton import JumpSkeleton


# Nodes closer than this fraction of T are merged
MERGE_TOLERANCE = 1e-14


class NodeTag(IntEnum):
    PADDING = 0
    REGULAR = 1
    JUMP = 2
    BOTH = 3


def regular_times(steps: int, horizon: float) -> np.ndarray:
    """
    kT/N for k = 0..N, computed as (k/N)·T so that a node shared by two
    refinements has bitwise identical coordinates.
    """
    if steps < 1:
        raise DomainError(f"Number of regular steps must be >= 1, got {steps}")
    return (np.arange(steps + 1) / steps) * horizon


@dataclass(frozen=True, eq=False)
class JumpAdaptedGrid:
    """
    Attributes:
        nodes: Strictly increasing times from 0 to T
        tags: NodeTag per node
        jump_sizes: Jump landing at each node (0 where there is none)
        regular_index: Position of kT/N in ``nodes``, k = 0..N
        steps: N
        horizon: T
    """
    nodes: np.ndarray
    tags: np.ndarray
    jump_sizes: np.ndarray
    regular_index: np.ndarray
    steps: int
    horizon: float
    skeleton: Optional[JumpSkeleton] = None

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.nodes)

    def last_index_at(self, t: float) -> int:
        if t < 0 or t > self.horizon:
            raise DomainError(f"Time {t} is outside [0, {self.horizon}]")
        return int(np.searchsorted(self.nodes, t, side="right") - 1)

    def last_node_at(self, t: float) -> float:
        """τ_t = max{t_k ≤ t}."""
        return float(self.nodes[self.last_index_at(t)])


def build_grid(steps: int, skeleton: Optional[JumpSkeleton] = None,
               horizon: Optional[float] = None) -> JumpAdaptedGrid:
    """
    Merge the regular grid with the skeleton's jump times.

    A jump closer than ``MERGE_TOLERANCE·T`` to another node is merged into
    it: onto the regular node when there is one (tag ``BOTH``), otherwise
    into the earlier jump with the sizes added. A jump merged into t = 0 is
    moved to the next node so that every jump lands at the end of an
    interval.

    Args:
        steps: N >= 1
        skeleton: Jumps to superpose (None for a purely regular grid)
        horizon: T; must agree with the skeleton when both are given

    Returns:
        JumpAdaptedGrid
    """
    if skeleton is not None:
        if horizon is not None and not np.isclose(horizon, skeleton.horizon, rtol=0.0, atol=MERGE_TOLERANCE * horizon):
            raise ConfigurationError(f"Skeleton horizon {skeleton.horizon} does not match grid horizon {horizon}")
        horizon = skeleton.horizon
    if horizon is None:
        raise ConfigurationError("A horizon is required for a grid without skeleton")

    regular = regular_times(steps, horizon)
    if skeleton is None or skeleton.times.size == 0:
        return JumpAdaptedGrid(
            nodes=regular,
            tags=np.full(regular.size, NodeTag.REGULAR, dtype=np.int8),
            jump_sizes=np.zeros(regular.size),
            regular_index=np.arange(regular.size),
            steps=steps, horizon=horizon, skeleton=skeleton
        )

    times = np.concatenate((regular, skeleton.times))
    sizes = np.concatenate((np.zeros(regular.size), skeleton.sizes))
    is_regular = np.concatenate((np.ones(regular.size, dtype=bool), np.zeros(skeleton.times.size, dtype=bool)))
    # regular members sort first among equal times
    order = np.lexsort((~is_regular, times))
    times, sizes, is_regular = times[order], sizes[order], is_regular[order]

    new_group = np.concatenate(([True], np.diff(times) > MERGE_TOLERANCE * horizon))
    group = np.cumsum(new_group) - 1
    count = int(group[-1]) + 1

    has_regular = np.zeros(count, dtype=bool)
    np.logical_or.at(has_regular, group, is_regular)
    has_jump = np.zeros(count, dtype=bool)
    np.logical_or.at(has_jump, group, ~is_regular)
    jump_sizes = np.bincount(group, weights=sizes, minlength=count)

    nodes = times[new_group].copy()
    regular_positions = np.flatnonzero(is_regular)
    nodes[group[regular_positions]] = times[regular_positions]

    if has_jump[0]:
        jump_sizes[1] += jump_sizes[0]
        has_jump[1] = True
        jump_sizes[0] = 0.0
        has_jump[0] = False

    tags = np.where(has_regular & has_jump, NodeTag.BOTH,
                    np.where(has_regular, NodeTag.REGULAR, NodeTag.JUMP)).astype(np.int8)
    return JumpAdaptedGrid(
        nodes=nodes,
        tags=tags,
        jump_sizes=np.where(has_jump, jump_sizes, 0.0),
        regular_index=group[regular_positions],
        steps=steps, horizon=horizon, skeleton=skeleton
    )
