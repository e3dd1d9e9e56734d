"""Domain types shared by every pipeline.

Object types (``TrajectoryPoint``, ``Trajectory``...) are the public, immutable
vocabulary used by the oracle and the op-level APIs. ``PointTable`` is the
columnar form the kernels and the engine work on: one row per point, rows
sorted by ``(t, traj)``, trajectory ids encoded as int codes whose order equals
the lexicographic order of the ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class TrajectoryPoint:
    traj_id: str
    t: float
    x: float
    y: float
    # provenance, not identity
    orig_flag: bool = field(default=True, compare=False)
    cell_id: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.t) and math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point {self!r}")


@dataclass(frozen=True)
class Trajectory:
    id: str
    points: tuple[TrajectoryPoint, ...]

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise ValueError(f"trajectory {self.id!r} is empty")
        for p in pts:
            if p.traj_id != self.id:
                raise ValueError(f"point {p!r} does not belong to trajectory {self.id!r}")
        for a, b in zip(pts, pts[1:]):
            if not a.t < b.t:
                raise ValueError(
                    f"trajectory {self.id!r}: timestamps must strictly increase ({a.t} then {b.t})"
                )

    @classmethod
    def from_arrays(cls, traj_id: str, t, x, y) -> "Trajectory":
        return cls(
            traj_id,
            tuple(TrajectoryPoint(traj_id, float(a), float(b), float(c)) for a, b, c in zip(t, x, y)),
        )

    @property
    def N(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def sub(self, start_idx: int, end_idx: int) -> "Subtrajectory":
        if not 0 <= start_idx <= end_idx < self.N:
            raise IndexError(f"bad subtrajectory range [{start_idx}, {end_idx}] for N={self.N}")
        return Subtrajectory(
            self.id, self.points[start_idx].t, self.points[end_idx].t, start_idx, end_idx
        )


@dataclass(frozen=True, order=True)
class Subtrajectory:
    """A contiguous run of one trajectory.

    Identity is ``(traj_id, start_t, end_t)``; the 0-based inclusive indices
    ride along when the producer knows them.
    """

    traj_id: str
    start_t: float
    end_t: float
    start_idx: int | None = field(default=None, compare=False)
    end_idx: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.end_t < self.start_t:
            raise ValueError(f"subtrajectory ends before it starts: {self!r}")


@dataclass(frozen=True)
class JoinParams:
    eps_sp: float
    eps_t: float
    delta_t: float

    def __post_init__(self):
        for name in ("eps_sp", "eps_t", "delta_t"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v!r}")

    @property
    def min_lifespan(self) -> float:
        """Lower bound on the common lifespan of a matching pair (may be negative)."""
        return self.delta_t - 2 * self.eps_t

    @property
    def window(self) -> float:
        """Sliding-window duration used during refinement, clamped at zero."""
        return max(self.min_lifespan, 0.0)


@dataclass(frozen=True)
class Interval:
    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def is_empty(self) -> bool:
        return self.duration < 0

    def contains(self, t: float) -> bool:
        """Half-open membership ``[t_start, t_end)``."""
        return self.t_start <= t < self.t_end


@dataclass(frozen=True)
class PairRecord:
    ref_point: TrajectoryPoint
    other_point: TrajectoryPoint | None
    flag: bool

    def __post_init__(self):
        if self.other_point is None:
            if not self.flag:
                raise ValueError("a false-flag record needs an other point")
        elif self.other_point.traj_id == self.ref_point.traj_id:
            raise ValueError("records never pair a trajectory with itself")

    @property
    def kind(self) -> str:
        if not self.flag:
            return "sNJP"
        return "BP" if self.other_point is None else "JP"


@dataclass(frozen=True, order=True)
class MatchPair:
    sub_r: Subtrajectory
    sub_s: Subtrajectory
    lifespan: Interval = field(compare=False)

    def __post_init__(self):
        if self.sub_r.traj_id == self.sub_s.traj_id:
            raise ValueError("a match pairs two distinct trajectories")

    @classmethod
    def of(cls, a: Subtrajectory, b: Subtrajectory) -> "MatchPair":
        """Canonical pair: the lexicographically smaller trajectory id goes first."""
        if a.traj_id > b.traj_id:
            a, b = b, a
        return cls(a, b, Interval(max(a.start_t, b.start_t), min(a.end_t, b.end_t)))

    def as_row(self) -> tuple:
        r, s = self.sub_r, self.sub_s
        return (r.traj_id, r.start_t, r.end_t, s.traj_id, s.start_t, s.end_t)


def canonical(pairs: Iterable[MatchPair]) -> set[MatchPair]:
    return {MatchPair.of(p.sub_r, p.sub_s) for p in pairs}


class PointTable:
    """Columnar point store, rows sorted by ``(t, traj)``.

    ``ids[c]`` is the trajectory id of code ``c``; codes follow the sorted id
    order so comparing codes compares ids.
    """

    def __init__(self, ids: Sequence[str], traj, t, x, y, *, presorted: bool = False):
        self.ids = tuple(ids)
        traj = np.asarray(traj, dtype=np.int32)
        t = np.asarray(t, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if not (len(traj) == len(t) == len(x) == len(y)):
            raise ValueError("column lengths differ")
        if not presorted:
            order = np.lexsort((traj, t))
            traj, t, x, y = traj[order], t[order], x[order], y[order]
        self.traj, self.t, self.x, self.y = traj, t, x, y
        self._seq = None
        self._prev = None

    @classmethod
    def empty(cls) -> "PointTable":
        return cls((), [], [], [], [])

    @classmethod
    def from_columns(cls, traj_ids: Sequence[str], t, x, y) -> "PointTable":
        """Build from raw columns with string ids, validating the point invariants."""
        traj_ids = np.asarray(traj_ids, dtype=object)
        ids = sorted(set(traj_ids.tolist()), key=lambda s: s.encode())
        code = {s: i for i, s in enumerate(ids)}
        traj = np.fromiter((code[s] for s in traj_ids), dtype=np.int32, count=len(traj_ids))
        table = cls(ids, traj, t, x, y)
        table.validate()
        return table

    @classmethod
    def from_trajectories(cls, trajectories: Iterable[Trajectory]) -> "PointTable":
        trajectories = list(trajectories)
        seen = set()
        for tr in trajectories:
            if tr.id in seen:
                raise ValueError(f"duplicate trajectory id {tr.id!r}")
            seen.add(tr.id)
        ids, t, x, y = [], [], [], []
        for tr in trajectories:
            for p in tr.points:
                ids.append(p.traj_id)
                t.append(p.t)
                x.append(p.x)
                y.append(p.y)
        if not ids:
            return cls.empty()
        return cls.from_columns(ids, t, x, y)

    def validate(self) -> None:
        for name in ("t", "x", "y"):
            col = getattr(self, name)
            bad = ~np.isfinite(col)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise ValueError(f"non-finite {name} for trajectory {self.ids[self.traj[i]]!r}")
        order = np.lexsort((self.t, self.traj))
        tr, tt = self.traj[order], self.t[order]
        dup = (tr[1:] == tr[:-1]) & (tt[1:] <= tt[:-1])
        if dup.any():
            i = int(np.flatnonzero(dup)[0])
            raise ValueError(
                f"trajectory {self.ids[tr[i]]!r} has duplicate timestamp {tt[i]!r}"
            )

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_traj(self) -> int:
        return len(self.ids)

    @property
    def seq(self) -> np.ndarray:
        """Index of each row within its own trajectory."""
        if self._seq is None:
            self._build_links()
        return self._seq

    @property
    def prev(self) -> np.ndarray:
        """Row of the previous point of the same trajectory, or -1."""
        if self._prev is None:
            self._build_links()
        return self._prev

    def _build_links(self) -> None:
        n = len(self)
        order = np.lexsort((self.t, self.traj))
        seq = np.zeros(n, dtype=np.int64)
        prev = np.full(n, -1, dtype=np.int64)
        if n:
            tr = self.traj[order]
            starts = np.ones(n, dtype=bool)
            starts[1:] = tr[1:] != tr[:-1]
            run_start = np.maximum.accumulate(np.where(starts, np.arange(n), 0))
            seq[order] = np.arange(n) - run_start
            same = ~starts
            prev[order[1:][same[1:]]] = order[:-1][same[1:]]
        self._seq, self._prev = seq, prev

    def point(self, row: int, orig_flag: bool = True, cell_id: int | None = None) -> TrajectoryPoint:
        return TrajectoryPoint(
            self.ids[self.traj[row]],
            float(self.t[row]),
            float(self.x[row]),
            float(self.y[row]),
            orig_flag,
            cell_id,
        )

    def take(self, rows) -> "PointTable":
        rows = np.asarray(rows, dtype=np.int64)
        return PointTable(self.ids, self.traj[rows], self.t[rows], self.x[rows], self.y[rows])

    def trajectories(self) -> list[Trajectory]:
        order = np.lexsort((self.t, self.traj))
        out = []
        bounds = np.flatnonzero(np.diff(self.traj[order])) + 1
        for chunk in np.split(order, bounds) if len(order) else []:
            tid = self.ids[self.traj[chunk[0]]]
            out.append(Trajectory.from_arrays(tid, self.t[chunk], self.x[chunk], self.y[chunk]))
        return out

    def time_range(self) -> tuple[float, float]:
        if not len(self):
            raise ValueError("empty table has no time range")
        return float(self.t[0]), float(self.t[-1])


def _line(tid: str, ts, ys, xs=None) -> Trajectory:
    xs = ts if xs is None else xs
    return Trajectory.from_arrays(tid, ts, xs, ys)


def fixture_t1() -> tuple[list[Trajectory], JoinParams]:
    """r and s run side by side 0.5 apart for t=0..4; u is a lone far-away point."""
    ts = [0.0, 1.0, 2.0, 3.0, 4.0]
    r = _line("r", ts, [0.0] * 5)
    s = _line("s", ts, [0.5] * 5)
    u = Trajectory.from_arrays("u", [2.0], [100.0], [100.0])
    return [r, s, u], JoinParams(eps_sp=1.0, eps_t=0.5, delta_t=3.0)


def fixture_t2() -> tuple[list[Trajectory], JoinParams]:
    """Like T1 over t=0..6, but s jumps away at t=3, splitting the match in two."""
    ts = [float(i) for i in range(7)]
    r = _line("r", ts, [0.0] * 7)
    s = _line("s", ts, [0.5, 0.5, 0.5, 50.0, 0.5, 0.5, 0.5])
    return [r, s], JoinParams(eps_sp=1.0, eps_t=0.5, delta_t=3.0)
