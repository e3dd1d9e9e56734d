"""Synthetic trajectory data.

Trajectories are random walks. Optional co-moving groups follow a shared
leader walk for part of the time range, and optional temporal skew packs a
fraction of every trajectory's samples into the start of the range.

Group members stay within ``spread / 2`` of the leader at their own sample
times. They only join each other when ``spread <= eps_sp`` and the leader
moves much less than ``eps_sp`` within ``eps_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import JoinParams, PointTable, Trajectory


@dataclass
class GenSpec:
    n_traj: int = 100
    points_per_traj: int = 100
    duration: float = 3600.0
    extent: float = 1000.0
    speed: float = 1.0
    # fraction of each trajectory's points placed in the first (1 - skew) of the range
    skew: float = 0.0
    group_size: int = 0
    n_groups: int = 0
    group_fraction: float = 0.5
    spread: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_traj < 1 or self.points_per_traj < 1:
            raise ValueError("n_traj and points_per_traj must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not 0 <= self.skew < 1:
            raise ValueError("skew must be in [0, 1)")
        if self.group_size * self.n_groups > self.n_traj:
            raise ValueError(
                f"{self.n_groups} groups of {self.group_size} need more than {self.n_traj} trajectories"
            )
        if not 0 < self.group_fraction <= 1:
            raise ValueError("group_fraction must be in (0, 1]")


def _timestamps(rng, n: int, duration: float, skew: float) -> np.ndarray:
    """Strictly increasing times in [0, duration]; first at 0."""
    if skew <= 0 or n < 2:
        u = (np.arange(n) + rng.uniform(0, 0.9, n)) / n
        u[0] = 0.0
        return u * duration
    early = min(n - 1, math.ceil(skew * n))
    late = n - early
    span = (1 - skew) * duration
    te = span * (np.arange(early) + rng.uniform(0, 0.9, early)) / early
    te[0] = 0.0
    tl = span + (duration - span) * (np.arange(1, late + 1) - rng.uniform(0, 0.9, late)) / late
    tl[-1] = duration
    return np.concatenate([te, tl])


def _walk(rng, t: np.ndarray, start, speed: float) -> tuple[np.ndarray, np.ndarray]:
    dt = np.diff(t, prepend=t[0])
    step = rng.normal(0, 1, (len(t), 2)) * (speed * np.sqrt(dt))[:, None]
    pos = np.asarray(start) + np.cumsum(step, axis=0)
    return pos[:, 0], pos[:, 1]


def generate_dataset(spec: GenSpec) -> PointTable:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    width = len(str(spec.n_traj - 1))
    names = [f"traj_{i:0{width}d}" for i in range(spec.n_traj)]
    ts, xs, ys = [], [], []
    for _ in range(spec.n_traj):
        t = _timestamps(rng, spec.points_per_traj, spec.duration, spec.skew)
        x, y = _walk(rng, t, rng.uniform(0, spec.extent, 2), spec.speed)
        ts.append(t)
        xs.append(x)
        ys.append(y)

    members = rng.permutation(spec.n_traj)[: spec.group_size * spec.n_groups]
    for g in range(spec.n_groups):
        group = members[g * spec.group_size:(g + 1) * spec.group_size]
        length = spec.group_fraction * spec.duration
        t0 = rng.uniform(0, spec.duration - length)
        grid = np.linspace(t0, t0 + length, 1024)
        lx, ly = _walk(rng, grid, rng.uniform(0, spec.extent, 2), spec.speed)
        for m in group:
            inside = (ts[m] >= t0) & (ts[m] <= t0 + length)
            # offsets stay within spread/2 of the leader
            r = spec.spread / 2 * np.sqrt(rng.uniform(0, 1, inside.sum()))
            a = rng.uniform(0, 2 * np.pi, inside.sum())
            xs[m][inside] = np.interp(ts[m][inside], grid, lx) + r * np.cos(a)
            ys[m][inside] = np.interp(ts[m][inside], grid, ly) + r * np.sin(a)

    ids = np.repeat(np.array(names, dtype=object), [len(t) for t in ts])
    return PointTable.from_columns(ids, np.concatenate(ts), np.concatenate(xs), np.concatenate(ys))


def random_instance(rng: np.random.Generator) -> tuple[list[Trajectory], JoinParams]:
    """Small random dataset with parameters drawn across regimes.

    Some instances use integer times and coordinates so that distances land
    exactly on the thresholds.
    """
    n_traj = int(rng.integers(3, 21))
    integral = rng.random() < 0.3
    n_leaders = max(1, n_traj // 3)
    leaders = []
    for _ in range(n_leaders):
        steps = rng.normal(0, 1.0, (200, 2))
        leaders.append(np.cumsum(steps, axis=0) + rng.uniform(0, 6, 2))
    trajs = []
    for k in range(n_traj):
        n = int(rng.integers(5, 51))
        if integral:
            gaps = rng.integers(1, 3, n)
        else:
            gaps = rng.uniform(0.3, 2.0, n)
        t = np.cumsum(gaps).astype(np.float64) + float(rng.integers(0, 10))
        lead = leaders[int(rng.integers(0, n_leaders))]
        idx = np.clip(t.astype(int), 0, len(lead) - 1)
        noise = rng.normal(0, float(rng.choice([0.3, 0.8, 1.5])), (n, 2))
        jump = rng.random(n) < 0.08
        noise[jump] += rng.normal(0, 8, (int(jump.sum()), 2))
        pos = lead[idx] + noise
        if integral:
            pos = np.round(pos)
        trajs.append(Trajectory.from_arrays(f"t{k:02d}", t, pos[:, 0], pos[:, 1]))

    eps_sp = float(rng.integers(1, 4)) if integral else float(rng.uniform(0.5, 3.0))
    eps_t = float(rng.integers(0, 3)) if integral else float(rng.uniform(0.0, 2.5))
    regime = rng.random()
    if regime < 0.35:
        # 2*eps_t >= delta_t, degenerate windows qualify
        delta_t = float(rng.uniform(0, 2 * eps_t)) if eps_t > 0 else 0.0
    else:
        delta_t = 2 * eps_t + float(rng.uniform(0, 8))
    if integral:
        delta_t = float(round(delta_t))
    return trajs, JoinParams(eps_sp, eps_t, delta_t)
