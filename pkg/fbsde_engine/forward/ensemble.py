"""
Path ensembles for the forward scheme.

Every path has its own jump-adapted grid, so an ensemble stores padded
(M, K) arrays where K is the longest grid. Padding columns repeat T with no
Brownian increment and no jump, which leaves the state unchanged under the
Euler recursion. ``regular_index`` locates the regular nodes kT/N in every
row; the backward scheme works on those columns only.

Coupling between ensembles of one study:

- ``coarsen_ensemble`` keeps the Brownian path of a fine ensemble and drops
  the jumps above a lower truncation level.
- ``refine_ensemble`` adds the jumps of a higher level (shared epochs) and
  fills the Brownian path in between the coarse nodes with a bridge.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from levy_engine.errors import CapacityError, ConfigurationError, DomainError, RefinementRequiredError
from levy_engine.measures.models import LevyModel
from levy_engine.measures.moments import centering_drift, retained_signed_first_moment
from levy_engine.shotnoise.representations import SeriesMethod, SeriesRepresentation
from levy_engine.shotnoise.skeleton import JumpSkeleton, sample_skeleton
from levy_engine.utils import StreamTag, chunk_ranges, make_stream, resolve_num_workers
from fbsde_engine.forward.euler import simulate_states
from fbsde_engine.forward.grid import JumpAdaptedGrid, NodeTag, build_grid, regular_times
from fbsde_engine.problems.problem import FbsdeProblem


logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_MAX_CELLS = 25_000_000
DEFAULT_CHUNK_SIZE = 2048


@dataclass(frozen=True)
class ForwardPath:
    """One path of an ensemble, stripped of padding."""
    grid: JumpAdaptedGrid
    states: np.ndarray
    brownian_increments: np.ndarray
    skeleton: JumpSkeleton


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """
    M forward paths on their jump-adapted grids.

    Attributes:
        problem: FBSDE whose forward coefficients produced ``states``
        model, representation: Driving Lévy model and its series representation
        level: Truncation level n
        steps: Regular step count N
        seed: Master seed
        zeta1: Compensator ζ(n) used in the scheme
        path_indices: Stream index of every row
        times, states, jumps, tags: Shape (M, K)
        brownian_increments: Shape (M, K − 1)
        lengths: Real (unpadded) grid size per row
        regular_index: Column of kT/N per row, shape (M, N + 1)
        skeletons: JumpSkeleton per row
    """
    problem: Optional[FbsdeProblem]
    model: LevyModel
    representation: SeriesRepresentation
    level: float
    steps: int
    horizon: float
    seed: int
    zeta1: float
    path_indices: np.ndarray
    times: np.ndarray
    states: np.ndarray
    brownian_increments: np.ndarray
    jumps: np.ndarray
    tags: np.ndarray
    lengths: np.ndarray
    regular_index: np.ndarray
    skeletons: Tuple[JumpSkeleton, ...]

    @property
    def paths(self) -> int:
        return int(self.times.shape[0])

    @property
    def columns(self) -> int:
        return int(self.times.shape[1])

    @property
    def regular_times(self) -> np.ndarray:
        return regular_times(self.steps, self.horizon)

    @property
    def centering(self) -> float:
        return self.skeletons[0].centering if self.skeletons else 0.0

    def grid(self, row: int) -> JumpAdaptedGrid:
        size = int(self.lengths[row])
        tags = self.tags[row, :size]
        return JumpAdaptedGrid(
            nodes=self.times[row, :size].copy(),
            tags=tags.copy(),
            jump_sizes=self.jumps[row, :size].copy(),
            regular_index=self.regular_index[row].copy(),
            steps=self.steps,
            horizon=self.horizon,
            skeleton=self.skeletons[row]
        )

    def path(self, row: int) -> ForwardPath:
        size = int(self.lengths[row])
        return ForwardPath(
            grid=self.grid(row),
            states=self.states[row, :size].copy(),
            brownian_increments=self.brownian_increments[row, :size - 1].copy(),
            skeleton=self.skeletons[row]
        )

    def brownian_path(self) -> np.ndarray:
        """B at every node, shape (M, K); constant over padding."""
        return np.concatenate((np.zeros((self.paths, 1)), np.cumsum(self.brownian_increments, axis=1)), axis=1)

    def regular_states(self) -> np.ndarray:
        """X at kT/N, shape (M, N + 1)."""
        return np.take_along_axis(self.states, self.regular_index, axis=1)

    def terminal_states(self) -> np.ndarray:
        return self.states[np.arange(self.paths), self.lengths - 1]

    def regular_brownian_increments(self) -> np.ndarray:
        """B over each regular interval, aggregating the jump-adapted sub-intervals; shape (M, N)."""
        return np.diff(np.take_along_axis(self.brownian_path(), self.regular_index, axis=1), axis=1)

    def regular_jump_sums(self, weight: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
        """
        Σ weight(J_i)·J_i over the jumps in each regular interval, shape (M, N).
        Without ``weight`` the plain jump sums are returned.
        """
        values = np.zeros_like(self.jumps)
        present = self.jumps != 0.0
        if weight is None:
            values[present] = self.jumps[present]
        else:
            sizes = self.jumps[present]
            values[present] = np.asarray(weight(sizes), dtype=float) * sizes
        cumulative = np.cumsum(values, axis=1)
        return np.diff(np.take_along_axis(cumulative, self.regular_index, axis=1), axis=1)

    def jump_counts(self) -> np.ndarray:
        return np.array([skeleton.accepted for skeleton in self.skeletons])


# ----- sampling -----

def _sample_row(model, representation, level, steps, horizon, seed, path_index, zeta1, centering):
    skeleton = sample_skeleton(model, representation, level, horizon, seed,
                               path_index=path_index, zeta1=zeta1, centering=centering)
    grid = build_grid(steps, skeleton)
    rng = make_stream(seed, path_index, StreamTag.BROWNIAN)
    increments = rng.standard_normal(grid.size - 1) * np.sqrt(grid.increments)
    return skeleton, grid, increments


def _check_capacity(paths: int, columns: int, max_cells: int):
    if paths * columns > max_cells:
        raise CapacityError(
            f"Ensemble of {paths} paths x {columns} nodes exceeds the budget of {max_cells} cells; "
            f"reduce the path count, N or n, or raise max_cells"
        )


def _assemble(grids: Sequence[JumpAdaptedGrid], increments: Sequence[np.ndarray], horizon: float,
              max_cells: int):
    paths = len(grids)
    lengths = np.array([grid.size for grid in grids], dtype=np.int64)
    columns = int(lengths.max())
    _check_capacity(paths, columns, max_cells)

    times = np.full((paths, columns), float(horizon))
    jumps = np.zeros((paths, columns))
    tags = np.full((paths, columns), NodeTag.PADDING, dtype=np.int8)
    brownian = np.zeros((paths, columns - 1))
    for row, (grid, dB) in enumerate(zip(grids, increments)):
        size = grid.size
        times[row, :size] = grid.nodes
        jumps[row, :size] = grid.jump_sizes
        tags[row, :size] = grid.tags
        brownian[row, :size - 1] = dB
    regular_index = np.stack([grid.regular_index for grid in grids]).astype(np.int64)
    return times, jumps, tags, brownian, lengths, regular_index


def _level_constants(model, representation, level):
    return (retained_signed_first_moment(model, representation, level),
            centering_drift(representation, level))


def simulate_ensemble(
    problem: FbsdeProblem,
    model: LevyModel,
    representation: SeriesRepresentation,
    n: float,
    steps: int,
    paths: int,
    seed: int,
    path_indices: Optional[Sequence[int]] = None,
    num_workers: Optional[int] = None,
    max_cells: int = DEFAULT_MAX_CELLS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    show_progress: bool = False
) -> PathEnsemble:
    """
    Simulate M independent forward paths.

    Skeletons and Brownian increments are drawn per path from streams keyed
    by (seed, path index), in worker threads; rows are assembled in path
    order, so the result does not depend on ``num_workers``.

    Args:
        problem: FBSDE providing b, a, h and x0
        model: Lévy model
        representation: Series representation of ``model``
        n: Truncation level
        steps: Regular step count N
        paths: M >= 1
        seed: Master seed
        path_indices: Stream indices (defaults to 0..M-1)
        num_workers: Worker threads (defaults to FBSDE_NUM_WORKERS or 1)
        max_cells: Upper bound on M·K for the padded arrays

    Returns:
        PathEnsemble

    Raises:
        CapacityError: if the padded arrays would exceed ``max_cells``
    """
    if paths < 1:
        raise DomainError(f"Path count must be >= 1, got {paths}")
    if steps < 1:
        raise DomainError(f"Number of regular steps must be >= 1, got {steps}")
    if representation.model != model:
        raise ConfigurationError("Representation was built for a different model")
    # the regular grid alone must already fit
    _check_capacity(paths, steps + 1, max_cells)

    indices = np.arange(paths) if path_indices is None else np.asarray(path_indices, dtype=np.int64)
    if indices.size != paths:
        raise ConfigurationError(f"Got {indices.size} path indices for {paths} paths")
    zeta1, centering = _level_constants(model, representation, n)
    horizon = problem.horizon

    def sample_chunk(bounds):
        start, stop = bounds
        return [
            _sample_row(model, representation, n, steps, horizon, seed, int(index), zeta1, centering)
            for index in indices[start:stop]
        ]

    chunks = chunk_ranges(paths, chunk_size)
    workers = resolve_num_workers(num_workers)
    if workers == 1 or len(chunks) == 1:
        results = [sample_chunk(bounds) for bounds in tqdm(chunks, desc="Sampling paths", disable=not show_progress)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(tqdm(executor.map(sample_chunk, chunks), total=len(chunks),
                                desc="Sampling paths", disable=not show_progress))
    rows = [row for chunk in results for row in chunk]
    skeletons = tuple(row[0] for row in rows)
    grids = [row[1] for row in rows]
    increments = [row[2] for row in rows]

    times, jumps, tags, brownian, lengths, regular_index = _assemble(grids, increments, horizon, max_cells)
    states = simulate_states(problem, times, brownian, jumps, zeta1)

    counts = np.array([skeleton.accepted for skeleton in skeletons])
    logger.debug(
        "Simulated %d paths (n=%g, N=%d): mean jumps %.3f, padded width %d",
        paths, n, steps, counts.mean(), times.shape[1]
    )
    if representation.method == SeriesMethod.REJECTION or representation.method == SeriesMethod.THINNING:
        proposals = sum(skeleton.count for skeleton in skeletons)
        if proposals:
            logger.info("Acceptance rate of %s: %.3f", representation.identifier, counts.sum() / proposals)

    return PathEnsemble(
        problem=problem, model=model, representation=representation,
        level=float(n), steps=int(steps), horizon=float(horizon), seed=int(seed), zeta1=float(zeta1),
        path_indices=indices, times=times, states=states, brownian_increments=brownian,
        jumps=jumps, tags=tags, lengths=lengths, regular_index=regular_index, skeletons=skeletons
    )


# ----- coupled ensembles -----

def _row_nodes(ensemble: PathEnsemble, row: int) -> np.ndarray:
    return ensemble.times[row, :ensemble.lengths[row]]


def coarsen_ensemble(
    fine: PathEnsemble,
    steps: Optional[int] = None,
    level: Optional[float] = None,
    problem: Optional[FbsdeProblem] = None,
    max_cells: int = DEFAULT_MAX_CELLS
) -> PathEnsemble:
    """
    The same paths on a coarser regular grid and/or at a lower truncation
    level.

    The coarse Brownian path is the fine one read off at the coarse nodes
    (linear interpolation between fine nodes, exact at shared nodes), and
    the coarse skeleton is the fine skeleton restricted to epochs ≤ level.

    Raises:
        RefinementRequiredError: if ``fine.steps`` is not a multiple of ``steps``
        DomainError: if ``level`` exceeds the fine level
    """
    steps = fine.steps if steps is None else int(steps)
    level = fine.level if level is None else float(level)
    problem = problem or fine.problem
    if steps < 1 or fine.steps % steps != 0:
        raise RefinementRequiredError(f"N={fine.steps} is not a refinement of N={steps}")
    if level > fine.level:
        raise DomainError(f"Cannot coarsen level {fine.level} up to {level}")

    zeta1, centering = _level_constants(fine.model, fine.representation, level)
    brownian = fine.brownian_path()
    skeletons, grids, increments = [], [], []
    for row in range(fine.paths):
        skeleton = fine.skeletons[row].restrict(level, zeta1, centering)
        grid = build_grid(steps, skeleton)
        path = np.interp(grid.nodes, _row_nodes(fine, row), brownian[row, :fine.lengths[row]])
        skeletons.append(skeleton)
        grids.append(grid)
        increments.append(np.diff(path))

    times, jumps, tags, dB, lengths, regular_index = _assemble(grids, increments, fine.horizon, max_cells)
    states = simulate_states(problem, times, dB, jumps, zeta1)
    return PathEnsemble(
        problem=problem, model=fine.model, representation=fine.representation,
        level=level, steps=steps, horizon=fine.horizon, seed=fine.seed, zeta1=float(zeta1),
        path_indices=fine.path_indices.copy(), times=times, states=states, brownian_increments=dB,
        jumps=jumps, tags=tags, lengths=lengths, regular_index=regular_index, skeletons=tuple(skeletons)
    )


def _bridge(coarse_nodes: np.ndarray, coarse_path: np.ndarray, fine_nodes: np.ndarray,
            rng: np.random.Generator) -> np.ndarray:
    """
    Brownian path at ``fine_nodes`` conditioned on its values at
    ``coarse_nodes``: B_s + θ(B_u − B_s) + W_t − W_s − θ(W_u − W_s) with
    θ = (t − s)/(u − s) and W an independent Brownian motion.
    """
    noise = np.concatenate(([0.0], np.cumsum(rng.standard_normal(fine_nodes.size - 1) * np.sqrt(np.diff(fine_nodes)))))
    interval = np.clip(np.searchsorted(coarse_nodes, fine_nodes, side="right") - 1, 0, coarse_nodes.size - 2)
    s, u = coarse_nodes[interval], coarse_nodes[interval + 1]
    theta = (fine_nodes - s) / (u - s)
    w_s = np.interp(s, fine_nodes, noise)
    w_u = np.interp(u, fine_nodes, noise)
    b_s, b_u = coarse_path[interval], coarse_path[interval + 1]
    return b_s + theta * (b_u - b_s) + (noise - w_s - theta * (w_u - w_s))


def _keep_shared_increments(fine_nodes, fine_dB, coarse_nodes, coarse_dB):
    """Fine intervals that coincide with a coarse interval keep the coarse ΔB exactly."""
    position = np.searchsorted(coarse_nodes, fine_nodes)
    clipped = np.minimum(position, coarse_nodes.size - 1)
    shared = coarse_nodes[clipped] == fine_nodes
    same = shared[:-1] & shared[1:] & (position[1:] == position[:-1] + 1)
    fine_dB = fine_dB.copy()
    fine_dB[same] = coarse_dB[position[:-1][same]]
    return fine_dB


def refine_ensemble(
    coarse: PathEnsemble,
    steps: int,
    level: Optional[float] = None,
    problem: Optional[FbsdeProblem] = None,
    max_cells: int = DEFAULT_MAX_CELLS
) -> PathEnsemble:
    """
    The same paths on a finer regular grid and/or at a higher truncation
    level, sharing all randomness with ``coarse``.

    Jumps with epoch ≤ coarse level are unchanged (the skeleton is resampled
    from the same epoch streams), and the Brownian path is filled in by a
    bridge drawn from the BRIDGE stream of each path. With ``steps`` and
    ``level`` equal to the coarse ones the coarse ensemble is returned.

    Raises:
        RefinementRequiredError: if ``steps`` is not a multiple of ``coarse.steps``
        DomainError: if ``level`` is below the coarse level
    """
    level = coarse.level if level is None else float(level)
    problem = problem or coarse.problem
    if steps < 1 or steps % coarse.steps != 0:
        raise RefinementRequiredError(f"N={steps} is not a refinement of N={coarse.steps}")
    if level < coarse.level:
        raise DomainError(f"Cannot refine level {coarse.level} down to {level}")
    if steps == coarse.steps and level == coarse.level and problem is coarse.problem:
        return coarse

    zeta1, centering = _level_constants(coarse.model, coarse.representation, level)
    coarse_brownian = coarse.brownian_path()
    skeletons, grids, increments = [], [], []
    for row, index in enumerate(coarse.path_indices):
        if level == coarse.level:
            skeleton = coarse.skeletons[row]
        else:
            skeleton = sample_skeleton(coarse.model, coarse.representation, level, coarse.horizon, coarse.seed,
                                       path_index=int(index), zeta1=zeta1, centering=centering)
        grid = build_grid(steps, skeleton)
        coarse_nodes = _row_nodes(coarse, row)
        coarse_path = coarse_brownian[row, :coarse.lengths[row]]
        rng = make_stream(coarse.seed, int(index), StreamTag.BRIDGE)
        path = _bridge(coarse_nodes, coarse_path, grid.nodes, rng)
        dB = _keep_shared_increments(grid.nodes, np.diff(path), coarse_nodes,
                                     coarse.brownian_increments[row, :coarse.lengths[row] - 1])
        skeletons.append(skeleton)
        grids.append(grid)
        increments.append(dB)

    times, jumps, tags, dB, lengths, regular_index = _assemble(grids, increments, coarse.horizon, max_cells)
    states = simulate_states(problem, times, dB, jumps, zeta1)
    return PathEnsemble(
        problem=problem, model=coarse.model, representation=coarse.representation,
        level=level, steps=int(steps), horizon=coarse.horizon, seed=coarse.seed, zeta1=float(zeta1),
        path_indices=coarse.path_indices.copy(), times=times, states=states, brownian_increments=dB,
        jumps=jumps, tags=tags, lengths=lengths, regular_index=regular_index, skeletons=tuple(skeletons)
    )


# ----- persistence -----

def save_ensemble(ensemble: PathEnsemble, path: Union[str, Path]) -> Path:
    """
    Write an ensemble to a compressed ``.npz`` file (format version 1).

    The problem itself is not serialisable; only its name is stored, and
    ``load_ensemble`` takes the problem as an argument.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    skeletons = ensemble.skeletons
    metadata = {
        "format_version": FORMAT_VERSION,
        "level": ensemble.level,
        "steps": ensemble.steps,
        "horizon": ensemble.horizon,
        "seed": ensemble.seed,
        "zeta1": ensemble.zeta1,
        "centering": ensemble.centering,
        "model": ensemble.model.to_dict(),
        "representation": {
            "method": ensemble.representation.method.value,
            "centered": ensemble.representation.centered,
        },
        "problem": ensemble.problem.name if ensemble.problem is not None else None,
    }
    np.savez_compressed(
        path,
        metadata=np.array(json.dumps(metadata, sort_keys=True)),
        path_indices=ensemble.path_indices,
        times=ensemble.times,
        states=ensemble.states,
        brownian_increments=ensemble.brownian_increments,
        jumps=ensemble.jumps,
        tags=ensemble.tags,
        lengths=ensemble.lengths,
        regular_index=ensemble.regular_index,
        skeleton_offsets=np.cumsum([0] + [s.accepted for s in skeletons]),
        skeleton_times=np.concatenate([s.times for s in skeletons]) if skeletons else np.zeros(0),
        skeleton_sizes=np.concatenate([s.sizes for s in skeletons]) if skeletons else np.zeros(0),
        skeleton_epochs=np.concatenate([s.epochs for s in skeletons]) if skeletons else np.zeros(0),
        skeleton_counts=np.array([s.count for s in skeletons], dtype=np.int64),
        proposal_offsets=np.cumsum([0] + [s.proposal_epochs.size for s in skeletons]),
        proposal_epochs=np.concatenate([s.proposal_epochs for s in skeletons]) if skeletons else np.zeros(0),
    )
    logger.info("Saved ensemble of %d paths to %s", ensemble.paths, path)
    return path


def load_ensemble(path: Union[str, Path], problem: Optional[FbsdeProblem] = None) -> PathEnsemble:
    """
    Read an ensemble written by ``save_ensemble``.

    Raises:
        ConfigurationError: on an unknown format version, or when ``problem``
            does not match the stored problem name
    """
    with np.load(Path(path), allow_pickle=False) as data:
        metadata = json.loads(str(data["metadata"]))
        if metadata.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(
                f"Unsupported ensemble format {metadata.get('format_version')!r}; expected {FORMAT_VERSION}"
            )
        if problem is not None and metadata["problem"] is not None and problem.name != metadata["problem"]:
            raise ConfigurationError(
                f"Ensemble was simulated for problem {metadata['problem']!r}, not {problem.name!r}"
            )
        arrays = {key: data[key] for key in data.files if key != "metadata"}

    model = LevyModel.from_dict(metadata["model"])
    representation = SeriesRepresentation(
        model, SeriesMethod(metadata["representation"]["method"]),
        centered=metadata["representation"]["centered"]
    )
    offsets, proposal_offsets = arrays["skeleton_offsets"], arrays["proposal_offsets"]
    skeletons = tuple(
        JumpSkeleton(
            horizon=metadata["horizon"],
            level=metadata["level"],
            times=arrays["skeleton_times"][offsets[i]:offsets[i + 1]],
            sizes=arrays["skeleton_sizes"][offsets[i]:offsets[i + 1]],
            epochs=arrays["skeleton_epochs"][offsets[i]:offsets[i + 1]],
            count=int(arrays["skeleton_counts"][i]),
            zeta1=metadata["zeta1"],
            centering=metadata["centering"],
            proposal_epochs=arrays["proposal_epochs"][proposal_offsets[i]:proposal_offsets[i + 1]],
        )
        for i in range(offsets.size - 1)
    )
    return PathEnsemble(
        problem=problem, model=model, representation=representation,
        level=metadata["level"], steps=metadata["steps"], horizon=metadata["horizon"],
        seed=metadata["seed"], zeta1=metadata["zeta1"],
        path_indices=arrays["path_indices"], times=arrays["times"], states=arrays["states"],
        brownian_increments=arrays["brownian_increments"], jumps=arrays["jumps"], tags=arrays["tags"],
        lengths=arrays["lengths"], regular_index=arrays["regular_index"], skeletons=skeletons
    )


def ensemble_table(ensemble: PathEnsemble, rows: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """
    Long-format path dump: one row per (path, node) with columns
    path_id, node, t, X, dB, jump, tag. ``dB`` is the increment into the node.
    """
    rows = range(ensemble.paths) if rows is None else rows
    frames: List[pd.DataFrame] = []
    for row in rows:
        size = int(ensemble.lengths[row])
        frames.append(pd.DataFrame({
            "path_id": int(ensemble.path_indices[row]),
            "node": np.arange(size),
            "t": ensemble.times[row, :size],
            "X": ensemble.states[row, :size],
            "dB": np.concatenate(([0.0], ensemble.brownian_increments[row, :size - 1])),
            "jump": ensemble.jumps[row, :size],
            "tag": [NodeTag(int(tag)).name.lower() for tag in ensemble.tags[row, :size]],
        }))
    if not frames:
        return pd.DataFrame(columns=["path_id", "node", "t", "X", "dB", "jump", "tag"])
    return pd.concat(frames, ignore_index=True)
