"""Time grids, discretely sampled paths, and reproducible Gaussian streams.

The time grid is geometric near t = 0: coarse knots t_k = T * r**|k| for
k = -K..0 accumulate at the origin, each coarse interval carries a uniform
Euler refinement, and the leftover stub [0, t_{-K}] is filled with steps of
roughly the size the next (truncated) geometric level would have used.

Refinement contract: changing the grid re-samples Brownian paths (fixed
streams, per-grid draws).  Values at shared knots are *not* preserved under
refinement; distributional properties are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeGrid",
    "SamplePath",
    "BrownianPath",
    "RngStream",
    "make_tsirelson_grid",
    "sample_brownian",
    "increment_quotient",
    "ValidationError",
]


class ValidationError(ValueError):
    """Raised when an argument violates a documented precondition."""


def _frozen(arr) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Geometric coarse grid accumulating at 0 plus a uniform Euler refinement.

    coarse_knots[i] is t_{i-K} in the usual indexing (coarse_knots[-1] == T);
    every coarse knot appears bit-exactly among fine_knots, which additionally
    start at 0.  euler_step is the smallest fine step.
    """

    horizon: float
    levels: int                      # K, number of geometric levels
    ratio: float                     # r in (0, 1)
    substeps: int                    # Euler substeps per coarse interval
    coarse_knots: np.ndarray
    fine_knots: np.ndarray
    coarse_fine_idx: np.ndarray = field(repr=False)  # fine index of each coarse knot

    @property
    def euler_step(self) -> float:
        return float(np.min(np.diff(self.fine_knots)))

    @property
    def n_steps(self) -> int:
        return len(self.fine_knots) - 1

    def step_sizes(self) -> np.ndarray:
        return np.diff(self.fine_knots)

    def knot_index(self, t: float) -> int:
        """Index of t in fine_knots; rejects non-knot arguments."""
        i = int(np.searchsorted(self.fine_knots, t))
        if i >= len(self.fine_knots) or self.fine_knots[i] != t:
            raise ValidationError(f"t={t!r} is not a fine knot")
        return i

    def coarse_interval(self, t: float) -> int:
        """Index i such that coarse_knots[i] <= t < coarse_knots[i+1].

        Returns -1 for t in the stub [0, t_{-K}).  In paper-style indexing
        the returned i corresponds to level k = i - levels.
        """
        if not 0.0 <= t < self.horizon:
            raise ValidationError(f"t={t!r} outside [0, T)")
        return int(np.searchsorted(self.coarse_knots, t, side="right")) - 1


def make_tsirelson_grid(T: float, K: int, r: float = 0.5, m: int = 1) -> TimeGrid:
    """Build the truncated geometric grid with K levels and m substeps.

    Coarse knots are t_k = T * r**(-k) for k = -K..0 (so t_{-K} = T * r**K).
    Each coarse interval [t_k, t_{k+1}] is split into m equal Euler steps; the
    stub [0, t_{-K}] is split into ceil(t_{-K} / dt_ref) equal steps with
    dt_ref = r * (smallest coarse substep), continuing the geometric decay one
    level below the truncation.
    """
    if not T > 0:
        raise ValidationError(f"horizon T must be positive, got {T!r}")
    if K < 2:
        raise ValidationError(f"need K >= 2 geometric levels, got {K!r}")
    if not 0.0 < r < 1.0:
        raise ValidationError(f"ratio r must lie in (0, 1), got {r!r}")
    if m < 1:
        raise ValidationError(f"substeps m must be >= 1, got {m!r}")

    coarse = T * r ** np.arange(K, -1, -1, dtype=float)
    dt_ref = r * (coarse[1] - coarse[0]) / m
    n_stub = max(1, math.ceil(coarse[0] / dt_ref))

    pieces = [np.linspace(0.0, coarse[0], n_stub + 1)]
    for i in range(K):
        pieces.append(np.linspace(coarse[i], coarse[i + 1], m + 1)[1:])
    fine = np.concatenate(pieces)

    idx = np.searchsorted(fine, coarse).astype(int)
    if not np.array_equal(fine[idx], coarse):
        raise AssertionError("coarse knots drifted off the fine grid")
    idx.flags.writeable = False

    return TimeGrid(
        horizon=float(T),
        levels=int(K),
        ratio=float(r),
        substeps=int(m),
        coarse_knots=_frozen(coarse),
        fine_knots=_frozen(fine),
        coarse_fine_idx=idx,
    )


class SamplePath:
    """A real- or vector-valued path sampled on the fine knots of a grid.

    Reads between knots hold the latest knot value at or before t, so a law
    evaluating value_at(t) can never look ahead of t.  values is 1-D for
    scalar paths, (len(knots), d) for d-vector paths.
    """

    __slots__ = ("knots", "values", "grid")

    def __init__(self, knots, values, grid: TimeGrid | None = None):
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape[0] != knots.shape[0]:
            raise ValidationError(
                f"values length {values.shape[0]} != knots length {knots.shape[0]}"
            )
        self.knots = knots
        self.values = values
        self.grid = grid

    @property
    def dim(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    @property
    def t_end(self) -> float:
        return float(self.knots[-1])

    @property
    def final(self):
        """Value at the last available knot."""
        v = self.values[-1]
        return float(v) if self.values.ndim == 1 else v

    def value_at(self, t: float):
        i = int(np.searchsorted(self.knots, t, side="right")) - 1
        if i < 0:
            raise ValidationError(f"t={t!r} precedes the first knot")
        v = self.values[i]
        return float(v) if self.values.ndim == 1 else v

    def knot_index(self, t: float) -> int:
        i = int(np.searchsorted(self.knots, t))
        if i >= len(self.knots) or self.knots[i] != t:
            raise ValidationError(f"t={t!r} is not a knot of this path")
        return i

    def truncated(self, j: int) -> "SamplePath":
        """View of the path up to knot index j (inclusive).  O(1), no copy."""
        return SamplePath(self.knots[: j + 1], self.values[: j + 1], self.grid)

    def __len__(self) -> int:
        return len(self.knots)


class BrownianPath(SamplePath):
    """A driving path that remembers its exact increments.

    values[j+1] is the sequential cumulative sum of increments[:j+1]; keeping
    the increments themselves lets the Euler recursion and the recovery
    round-trip telescope bit-exactly instead of re-deriving them by a lossy
    np.diff of the cumulative values.
    """

    __slots__ = ("increments",)

    def __init__(self, knots, increments, grid: TimeGrid | None = None, start=0.0):
        increments = np.asarray(increments, dtype=float)
        if increments.ndim == 1:
            values = np.concatenate(([start], start + np.cumsum(increments)))
        else:
            d = increments.shape[1]
            values = np.vstack([np.full(d, start), start + np.cumsum(increments, axis=0)])
        super().__init__(knots, values, grid)
        self.increments = increments


@dataclass(frozen=True)
class RngStream:
    """One member of a family of independent, order-independent streams.

    Distinct stream_index values under one master_seed give statistically
    independent Philox streams; the same pair reproduces the same draws
    bit-for-bit regardless of construction order.
    """

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.Philox(seq))


def sample_brownian(grid: TimeGrid, stream: RngStream, d: int = 1) -> BrownianPath:
    """Standard d-dimensional Brownian path on the fine knots, B_0 = 0."""
    if d < 1:
        raise ValidationError(f"dimension d must be >= 1, got {d!r}")
    dts = grid.step_sizes()
    rng = stream.generator()
    if d == 1:
        dB = rng.standard_normal(len(dts)) * np.sqrt(dts)
    else:
        dB = rng.standard_normal((len(dts), d)) * np.sqrt(dts)[:, None]
    return BrownianPath(grid.fine_knots, dB, grid)


def increment_quotient(path: SamplePath, s: float, t: float):
    """(path(t) - path(s)) / (t - s) for fine knots s < t."""
    if not s < t:
        raise ValidationError(f"need s < t, got s={s!r}, t={t!r}")
    i = path.knot_index(s)
    j = path.knot_index(t)
    diff = path.values[j] - path.values[i]
    q = diff / (t - s)
    return float(q) if path.values.ndim == 1 else q
