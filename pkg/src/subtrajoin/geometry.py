"""Distances and the point-level matching predicate.

Every comparison is inclusive and evaluated exactly as written here; the
kernels and the oracle use the same float expressions so boundary cases agree.
"""

from __future__ import annotations

import math

from .model import Interval, JoinParams, Trajectory, TrajectoryPoint


def dist_s(p: TrajectoryPoint, q: TrajectoryPoint) -> float:
    dx = p.x - q.x
    dy = p.y - q.y
    return math.sqrt(dx * dx + dy * dy)


def dist_t(p: TrajectoryPoint, q: TrajectoryPoint) -> float:
    return abs(p.t - q.t)


def common_lifespan(r: Trajectory, s: Trajectory) -> Interval:
    """Overlap of the two lifespans; a negative duration means they are disjoint."""
    return Interval(max(r.points[0].t, s.points[0].t), min(r.points[-1].t, s.points[-1].t))


def is_joining_pair(p: TrajectoryPoint, q: TrajectoryPoint, params: JoinParams) -> bool:
    if p.traj_id == q.traj_id:
        raise ValueError(f"joining pairs span two trajectories, got two points of {p.traj_id!r}")
    return dist_s(p, q) <= params.eps_sp and dist_t(p, q) <= params.eps_t
