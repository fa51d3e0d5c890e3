"""
Truncated shot noise skeletons: the jumps of L^n on [0, T] for one path.

With random truncation the retained series is a compound Poisson process:
all Poisson epochs G_i ≤ nT are kept, each producing a jump H(G_i/T, V_i) at
an independent uniform time T_i on [0, T].
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from levy_engine.errors import ConfigurationError, DomainError
from levy_engine.measures.models import LevyModel
from levy_engine.measures.moments import centering_drift, retained_signed_first_moment
from levy_engine.shotnoise.representations import SeriesRepresentation
from levy_engine.utils import StreamTag, make_stream


logger = logging.getLogger(__name__)

EPOCH_BLOCK = 64


@dataclass(frozen=True, eq=False)
class JumpSkeleton:
    """
    Jumps of the truncated process on one path.

    Attributes:
        horizon: T
        level: Truncation level n
        times: Jump times T_i, strictly increasing
        sizes: Jump sizes J_i (structural zeros already removed)
        epochs: Unit-time epochs G_i/T of the retained jumps
        count: J^n, number of Poisson epochs G_i ≤ nT (includes rejected proposals)
        zeta1: ζ(n), drift compensating the retained jumps
        centering: Accumulated centering constant (zero when uncentered)
        proposal_epochs: Unit-time epochs of every proposal, zeros included
    """
    horizon: float
    level: float
    times: np.ndarray
    sizes: np.ndarray
    epochs: np.ndarray
    count: int
    zeta1: float
    centering: float = 0.0
    proposal_epochs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def accepted(self) -> int:
        return int(self.sizes.size)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.count if self.count else 1.0

    def increment(self, s: float, t: float) -> float:
        """
        Compensated increment of L^n over (s, t]: Σ J_i 1(s < T_i ≤ t) − (t − s)ζ(n).
        """
        if s > t:
            raise DomainError(f"Increment needs s <= t, got s={s}, t={t}")
        if s < 0 or t > self.horizon:
            raise DomainError(f"Interval ({s}, {t}] is outside [0, {self.horizon}]")
        inside = (self.times > s) & (self.times <= t)
        return float(np.sum(self.sizes[inside]) - (t - s) * self.zeta1)

    def value(self, t: float) -> float:
        """Uncompensated L^n_t = Σ J_i 1(T_i ≤ t) − t·centering."""
        return float(np.sum(self.sizes[self.times <= t]) - t * self.centering)

    def restrict(self, level: float, zeta1: float, centering: float = 0.0) -> "JumpSkeleton":
        """
        The skeleton of the same path at a lower truncation level (coupled by
        shared epochs, so the result is a subset of this skeleton).
        """
        if level > self.level:
            raise DomainError(f"Cannot restrict level {self.level} up to {level}")
        keep = self.epochs <= level
        return JumpSkeleton(
            horizon=self.horizon,
            level=float(level),
            times=self.times[keep],
            sizes=self.sizes[keep],
            epochs=self.epochs[keep],
            count=int(np.count_nonzero(self.proposal_epochs <= level)),
            zeta1=zeta1,
            centering=centering,
            proposal_epochs=self.proposal_epochs[self.proposal_epochs <= level],
        )


def sample_epochs(horizon: float, rng: np.random.Generator, rate: float = 1.0) -> np.ndarray:
    """
    Arrival times of a rate-``rate`` Poisson process up to ``horizon``.

    Exponential gaps are drawn in fixed-size blocks so that the epochs below a
    smaller horizon are a prefix of those below a larger one for the same
    stream.

    Returns:
        Strictly increasing positive epochs (possibly empty)
    """
    if horizon < 0:
        raise DomainError(f"Epoch horizon must be >= 0, got {horizon}")
    chunks = []
    last = 0.0
    while True:
        gaps = -np.log1p(-rng.random(EPOCH_BLOCK)) / rate
        block = last + np.cumsum(gaps)
        inside = block[block <= horizon]
        chunks.append(inside)
        if inside.size < EPOCH_BLOCK:
            break
        last = block[-1]
    epochs = np.concatenate(chunks)
    # zero-length gaps have probability zero but are possible in floating point
    for i in range(1, epochs.size):
        if epochs[i] <= epochs[i - 1]:
            epochs[i] = np.nextafter(epochs[i - 1], np.inf)
    return epochs


def _separate_ties(times: np.ndarray, horizon: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Make sorted jump times strictly increasing.

    Returns:
        (times, inside): ``inside`` marks the times still within the horizon
    """
    times = np.array(times, dtype=float)
    if times.size and times[0] <= 0.0:
        times[0] = np.nextafter(0.0, 1.0)
    for i in range(1, times.size):
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], np.inf)
    return times, times <= horizon


def sample_skeleton(
    model: LevyModel,
    representation: SeriesRepresentation,
    n: float,
    horizon: float,
    seed: int,
    path_index: int = 0,
    zeta1: Optional[float] = None,
    centering: Optional[float] = None
) -> JumpSkeleton:
    """
    Sample the truncated jump skeleton of one path.

    Epochs, marks and jump times come from three independent per-path streams,
    so the skeleton at level n' < n is exactly the subset of jumps with epoch
    ≤ n'.

    Args:
        model: Lévy model
        representation: Series representation of ``model``
        n: Truncation level (> 0)
        horizon: T (> 0)
        seed: Master seed
        path_index: Path index inside the ensemble
        zeta1: Precomputed ζ(n) (computed when omitted)
        centering: Precomputed centering drift (computed when omitted)

    Returns:
        JumpSkeleton sorted by time
    """
    if representation.model != model:
        raise ConfigurationError(
            f"Representation {representation.identifier} does not belong to model {model.identifier}"
        )
    if n <= 0 or horizon <= 0:
        raise DomainError(f"Need n > 0 and T > 0, got n={n}, T={horizon}")
    if zeta1 is None:
        zeta1 = retained_signed_first_moment(model, representation, n)
    if centering is None:
        centering = centering_drift(representation, n)

    epochs = sample_epochs(n * horizon, make_stream(seed, path_index, StreamTag.EPOCHS))
    count = int(epochs.size)
    unit_epochs = epochs / horizon
    marks = representation.sample_marks(make_stream(seed, path_index, StreamTag.MARKS), count)
    times = make_stream(seed, path_index, StreamTag.TIMES).random(count) * horizon
    sizes = representation.jump_size(unit_epochs, marks) if count else np.zeros(0)

    nonzero = sizes != 0.0
    times, sizes, kept_epochs = times[nonzero], sizes[nonzero], unit_epochs[nonzero]
    order = np.argsort(times, kind="stable")
    times, sizes, kept_epochs = times[order], sizes[order], kept_epochs[order]
    times, inside = _separate_ties(times, horizon)
    if not inside.all():
        logger.debug("Dropped %d jumps pushed past the horizon", int((~inside).sum()))
        times, sizes, kept_epochs = times[inside], sizes[inside], kept_epochs[inside]

    return JumpSkeleton(
        horizon=float(horizon),
        level=float(n),
        times=times,
        sizes=sizes,
        epochs=kept_epochs,
        count=count,
        zeta1=float(zeta1),
        centering=float(centering),
        proposal_epochs=unit_epochs,
    )


def skeleton_table(skeletons: Iterable[JumpSkeleton], seed: Optional[int] = None) -> pd.DataFrame:
    """
    Debug dump of skeletons with columns (path_id, T_i, J_i[, seed]).
    """
    rows = []
    for path_id, skeleton in enumerate(skeletons):
        for time, size in zip(skeleton.times, skeleton.sizes):
            rows.append({"path_id": path_id, "T_i": float(time), "J_i": float(size)})
    table = pd.DataFrame(rows, columns=["path_id", "T_i", "J_i"])
    if seed is not None:
        table["seed"] = seed
    return table
