"""Maximal matching subtrajectory joins over timestamped 2D trajectories."""

from .engine import PipelineConfig, RunMetrics, prepare_workdir, run_pipeline
from .model import (
    Interval,
    JoinParams,
    MatchPair,
    PairRecord,
    PointTable,
    Subtrajectory,
    Trajectory,
    TrajectoryPoint,
)
from .oracle import classify_point_pairs, oracle_join

__all__ = [
    "Interval",
    "JoinParams",
    "MatchPair",
    "PairRecord",
    "PipelineConfig",
    "PointTable",
    "RunMetrics",
    "Subtrajectory",
    "Trajectory",
    "TrajectoryPoint",
    "classify_point_pairs",
    "oracle_join",
    "prepare_workdir",
    "run_pipeline",
]
