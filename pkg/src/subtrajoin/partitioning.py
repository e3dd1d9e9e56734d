"""Temporal partitioning for the three pipelines.

DTJb cuts the time range into equal-duration partitions. DTJr and DTJi use an
equi-depth histogram to cut it into equally populated files, then rebuild
each file into a split padded by ``eps_t`` on both sides.

Every partition or split also carries ``context``: for each trajectory
present in its window, the one point of that trajectory just before the
window. The join kernel never sweeps these points. They only make
previous-point lookups work when a sampling gap crosses the window edge.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import Interval, JoinParams, PointTable, TrajectoryPoint

log = logging.getLogger(__name__)

DEFAULT_MIN_SAMPLE = 10_000


def _slack(a: float, b: float) -> float:
    # widen windows a hair so float rounding never drops a boundary partner
    finite = [abs(v) for v in (a, b) if math.isfinite(v)]
    return 1e-9 * (1.0 + max(finite, default=0.0))


def window_rows(table: PointTable, lo_t: float, hi_t: float) -> tuple[int, int]:
    """Row range of points with ``lo_t <= t <= hi_t`` (slightly widened)."""
    s = _slack(lo_t, hi_t)
    lo = int(np.searchsorted(table.t, lo_t - s, side="left")) if math.isfinite(lo_t) else 0
    hi = int(np.searchsorted(table.t, hi_t + s, side="right")) if math.isfinite(hi_t) else len(table)
    return lo, max(lo, hi)


def _slice(table: PointTable, rows: np.ndarray) -> PointTable:
    return PointTable(table.ids, table.traj[rows], table.t[rows], table.x[rows], table.y[rows],
                      presorted=True)


def context_rows(table: PointTable, lo: int, hi: int) -> np.ndarray:
    """Rows of each window trajectory's point immediately preceding row ``lo``."""
    prev = table.prev[lo:hi]
    return np.sort(prev[(prev >= 0) & (prev < lo)])


@dataclass
class TemporalPartition:
    index: int
    base: Interval
    expanded: Interval
    table: PointTable
    orig: np.ndarray
    context: PointTable

    def emit_mask(self) -> np.ndarray:
        return self.orig

    @property
    def points(self) -> list[TrajectoryPoint]:
        return [self.table.point(i, bool(self.orig[i])) for i in range(len(self.table))]

    def __len__(self) -> int:
        return len(self.table)


@dataclass
class Split:
    index: int
    base: Interval
    group_id: int
    table: PointTable
    context: PointTable

    def emit_mask(self) -> np.ndarray:
        t = self.table.t
        return (t >= self.base.t_start) & (t < self.base.t_end)

    @property
    def points(self) -> list[TrajectoryPoint]:
        m = self.emit_mask()
        return [self.table.point(i, bool(m[i])) for i in range(len(self.table))]

    def __len__(self) -> int:
        return len(self.table)


def uniform_temporal_partition(table: PointTable, n_parts: int, params: JoinParams) -> list[TemporalPartition]:
    if n_parts < 1:
        raise ValueError(f"n_parts must be >= 1, got {n_parts}")
    if not len(table):
        return []
    t_min, t_max = table.time_range()
    width = (t_max - t_min) / n_parts
    bounds = t_min + np.arange(n_parts + 1) * width
    bounds[-1] = t_max
    if width > 0:
        home = np.searchsorted(bounds[1:-1], table.t, side="right")
        prev = table.prev
        has = prev >= 0
        if has.any():
            gap = float(np.max(table.t[has] - table.t[prev[has]]))
            if gap >= width:
                log.warning("partition duration %g does not exceed the max sampling gap %g", width, gap)
    else:
        home = np.zeros(len(table), dtype=np.int64)

    parts = []
    for i in range(n_parts):
        b0, b1 = float(bounds[i]), float(bounds[i + 1])
        expanded = Interval(b0 - params.eps_t, b1 + params.eps_t)
        if width > 0:
            lo, hi = window_rows(table, expanded.t_start, expanded.t_end)
        else:
            lo, hi = (0, len(table)) if i == 0 else (0, 0)
        rows = np.arange(lo, hi)
        parts.append(TemporalPartition(
            index=i,
            base=Interval(b0, b1),
            expanded=expanded,
            table=_slice(table, rows),
            orig=home[lo:hi] == i,
            context=_slice(table, context_rows(table, lo, hi)),
        ))
    return parts


@dataclass
class EquiDepthHistogram:
    boundaries: np.ndarray
    sample_size: int
    seed: int | None = None

    @property
    def M(self) -> int:
        return len(self.boundaries) - 1

    def bin_of(self, t) -> np.ndarray:
        return np.searchsorted(self.boundaries[1:-1], t, side="right")

    def base(self, i: int) -> Interval:
        return Interval(float(self.boundaries[i]), float(self.boundaries[i + 1]))


def sample_size_for(n: int, sample_rate: float | None, min_sample: int = DEFAULT_MIN_SAMPLE) -> int:
    rate = 0.01 if sample_rate is None else sample_rate
    return min(n, max(math.ceil(rate * n), min_sample))


def build_equidepth_histogram(t, sample_rate: float | None, M: int, *, seed: int = 0,
                              min_sample: int = DEFAULT_MIN_SAMPLE) -> EquiDepthHistogram:
    """Bin boundaries at the sample's i/M quantiles.

    ``t`` is an array of timestamps or a ``PointTable``. Each inner boundary
    sits halfway between the two sample values around rank ``floor(i*k/M)``,
    so with a full sample of distinct values bin counts differ by at most one.
    The outer boundaries are -inf and +inf.
    """
    if isinstance(t, PointTable):
        t = t.t
    t = np.asarray(t, dtype=np.float64)
    if not len(t):
        raise ValueError("cannot build a histogram from an empty input")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if sample_rate is not None and not 0 < sample_rate <= 1:
        raise ValueError(f"sample_rate must be in (0, 1], got {sample_rate}")
    k = sample_size_for(len(t), sample_rate, min_sample)
    if k == len(t):
        s = np.sort(t)
    else:
        rng = np.random.default_rng(seed)
        s = np.sort(rng.choice(t, size=k, replace=False))
    bounds = np.empty(M + 1)
    bounds[0], bounds[-1] = -np.inf, np.inf
    for i in range(1, M):
        j = (i * k) // M
        bounds[i] = s[0] if j == 0 else (s[j - 1] + s[j]) / 2
    return EquiDepthHistogram(bounds, k, seed)


def compute_m(total_size_bytes: int, block_size_bytes: int) -> int:
    if total_size_bytes <= 0 or block_size_bytes <= 0:
        raise ValueError("sizes must be positive")
    return -(-total_size_bytes // block_size_bytes)


def group_factor(M: int, workers: int) -> int:
    """Consecutive files per worker, ceil(M / N)."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return -(-M // workers)


@dataclass
class PartitionFile:
    index: int
    base: Interval
    group_id: int
    table: PointTable


def repartition(table: PointTable, hist: EquiDepthHistogram, k: int = 1) -> list[PartitionFile]:
    """Route every point to its histogram bin; one time-sorted file per bin."""
    bins = hist.bin_of(table.t)
    files = []
    for i in range(hist.M):
        lo = int(np.searchsorted(bins, i, side="left"))
        hi = int(np.searchsorted(bins, i, side="right"))
        files.append(PartitionFile(i, hist.base(i), i // k, _slice(table, np.arange(lo, hi))))
    return files


def concat_files(files: list[PartitionFile]) -> PointTable:
    if not files:
        return PointTable.empty()
    ids = files[0].table.ids
    cols = [np.concatenate([getattr(f.table, c) for f in files]) for c in ("traj", "t", "x", "y")]
    for a, b in zip(files, files[1:]):
        if len(a.table) and len(b.table) and a.table.t[-1] > b.table.t[0]:
            raise ValueError(f"partition files {a.index} and {b.index} overlap in time")
    return PointTable(ids, *cols, presorted=True)


def build_splits(files: list[PartitionFile], params: JoinParams, table: PointTable | None = None) -> list[Split]:
    """One split per file: the file plus everything within ``eps_t`` of its base range.

    ``table`` may pass the already concatenated dataset to skip re-concatenation.
    """
    table = concat_files(files) if table is None else table
    splits = []
    for f in files:
        lo, hi = window_rows(table, f.base.t_start - params.eps_t, f.base.t_end + params.eps_t)
        splits.append(Split(
            index=f.index,
            base=f.base,
            group_id=f.group_id,
            table=_slice(table, np.arange(lo, hi)),
            context=_slice(table, context_rows(table, lo, hi)),
        ))
    return splits
