"""In-process map/shuffle/reduce harness running the three pipelines.

Map and reduce tasks run on a bounded thread pool (the kernels release the
GIL). Tasks are dealt to workers round-robin, so a given configuration
always produces the same task-to-worker layout.
"""

from __future__ import annotations

import logging
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .index import QuadTree, build_index, build_quadtree, data_nbytes, run_indexed, threshold_from_percent
from .join import RECORD_DTYPE, join_records, make_buffer
from .model import JoinParams, MatchPair, PointTable, canonical
from .partitioning import (
    build_equidepth_histogram,
    build_splits,
    concat_files,
    group_factor,
    repartition,
    uniform_temporal_partition,
)
from .refine import refine_group

log = logging.getLogger(__name__)

VARIANTS = ("dtjb", "dtjr", "dtji")
POINT_BYTES = io.PART_DTYPE.itemsize


@dataclass
class PipelineConfig:
    variant: str
    params: JoinParams
    workers: int = 1
    n_parts: int | None = None  # DTJb partitions; defaults to the worker count
    seed: int = 0
    workdir: str | Path | None = None
    # refine ablations, e.g. {"use_breaking_points": False}
    ablation: dict = field(default_factory=dict)

    def __post_init__(self):
        self.variant = self.variant.lower()
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.n_parts is not None and self.n_parts < 1:
            raise ValueError("n_parts must be >= 1")


@dataclass
class RunMetrics:
    variant: str = ""
    task_inputs: list = field(default_factory=list)
    records_join: int = 0
    records_false: int = 0
    records_bp: int = 0
    duplicate_records: int = 0
    matches_raw: int = 0
    matches: int = 0
    duplicate_matches_in_tasks: int = 0
    bytes_input: int = 0
    bytes_shuffled: int = 0
    index_entries: int = 0
    index_bytes: int = 0
    data_bytes: int = 0
    time_partition: float = 0.0
    time_join: float = 0.0
    time_index_build: float = 0.0
    time_shuffle: float = 0.0
    time_refine: float = 0.0
    time_total: float = 0.0

    @property
    def input_std(self) -> float:
        """Population standard deviation of per-task input sizes."""
        return float(np.std(self.task_inputs)) if self.task_inputs else 0.0

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "task_inputs"}
        d["tasks"] = len(self.task_inputs)
        d["input_std"] = self.input_std
        return d

    def write(self, path) -> None:
        with open(path, "w") as f:
            for k, v in self.as_dict().items():
                f.write(f"{k}={v}\n")

    def write_task_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("task,input_points\n")
            for i, n in enumerate(self.task_inputs):
                f.write(f"{i},{n}\n")


def collect_metrics(task_inputs) -> RunMetrics:
    return RunMetrics(task_inputs=list(task_inputs))


def run_tasks(fn, items: list, workers: int) -> list:
    """Run ``fn`` over ``items`` on ``workers`` threads, results in item order."""
    if not items:
        return []
    lanes = [list(range(w, len(items), workers)) for w in range(min(workers, len(items)))]
    results = [None] * len(items)

    def lane(idx):
        for i in idx:
            try:
                results[i] = fn(items[i])
            except Exception as e:
                raise RuntimeError(f"task {i} failed: {e}") from e

    if len(lanes) == 1:
        lane(lanes[0])
        return results
    with ThreadPoolExecutor(max_workers=len(lanes)) as pool:
        for fut in [pool.submit(lane, idx) for idx in lanes]:
            fut.result()
    return results


def shuffle_group(batches: list[np.ndarray]) -> tuple[list[np.ndarray], int]:
    """Group records by reference trajectory, each group sorted by
    (reference t, partner trajectory, partner t). Returns groups and bytes moved."""
    rec = np.concatenate(batches) if batches else np.empty(0, dtype=RECORD_DTYPE)
    if not len(rec):
        return [], 0
    order = np.lexsort((rec["oth_t"], rec["oth_traj"], rec["ref_t"], rec["ref_traj"]))
    rec = rec[order]
    cut = np.flatnonzero(np.diff(rec["ref_traj"])) + 1
    return np.split(rec, cut), rec.nbytes


def count_duplicates(batches: list[np.ndarray]) -> int:
    rec = np.concatenate(batches) if batches else np.empty(0, dtype=RECORD_DTYPE)
    if not len(rec):
        return 0
    return len(rec) - len(np.unique(rec))


def prepare_workdir(table: PointTable, workdir, *, M: int, sample_rate: float | None = None,
                    quadtree_pct: float | None = 3.0, seed: int = 0, workers: int = 1) -> io.Workdir:
    """Equi-depth repartitioning plus (optionally) the shared QuadTree, persisted to ``workdir``."""
    if not len(table):
        raise ValueError("cannot repartition an empty dataset")
    hist = build_equidepth_histogram(table, sample_rate, M, seed=seed)
    k = group_factor(M, workers)
    files = repartition(table, hist, k)
    tree = None
    if quadtree_pct is not None:
        rng = np.random.default_rng(seed)
        n = hist.sample_size
        rows = np.arange(len(table)) if n == len(table) else rng.choice(len(table), n, replace=False)
        tree = build_quadtree(table.x[rows], table.y[rows], threshold_from_percent(quadtree_pct, n))
    io.write_workdir(workdir, files, table.ids, boundaries=hist.boundaries, sample_size=hist.sample_size,
                     k=k, seed=seed, tree=tree)
    return io.load_workdir(workdir, verify=False)


def _join_task(part, params: JoinParams, dup_mode: str, tree: QuadTree | None):
    """Join one partition or split. Returns (records, index build seconds, index stats)."""
    if tree is None:
        return join_records(part, params, dup_mode), 0.0, (0, 0, 0)
    buf = make_buffer(part, dup_mode)
    if not len(buf):
        return np.empty(0, dtype=RECORD_DTYPE), 0.0, (0, 0, 0)
    t0 = time.perf_counter()
    idx = build_index(buf, tree, params.eps_sp)
    built = time.perf_counter() - t0
    return run_indexed(buf, idx, params), built, (idx.entries, idx.nbytes, data_nbytes(buf))


def run_join_phase(parts: list, cfg: PipelineConfig, tree: QuadTree | None = None,
                   metrics: RunMetrics | None = None) -> list[np.ndarray]:
    """Map step only: join every partition/split, filling the join metrics."""
    metrics = metrics or RunMetrics(variant=cfg.variant)
    dup_mode = "flag" if cfg.variant == "dtjb" else "base_range"
    if cfg.variant == "dtji" and tree is None:
        raise ValueError("the indexed join needs a QuadTree; repartition with a quadtree threshold")
    t0 = time.perf_counter()
    out = run_tasks(lambda p: _join_task(p, cfg.params, dup_mode, tree if cfg.variant == "dtji" else None),
                    parts, cfg.workers)
    metrics.time_join += time.perf_counter() - t0
    batches = [o[0] for o in out]
    metrics.task_inputs = [len(p) for p in parts]
    metrics.time_index_build += sum(o[1] for o in out)
    metrics.index_entries += sum(o[2][0] for o in out)
    metrics.index_bytes += sum(o[2][1] for o in out)
    metrics.data_bytes += sum(o[2][2] for o in out)
    metrics.records_join += sum(len(b) for b in batches)
    metrics.records_false += sum(int((b["flag"] == 0).sum()) for b in batches)
    metrics.records_bp += sum(int(((b["flag"] == 1) & (b["oth_traj"] < 0)).sum()) for b in batches)
    return batches


def _reduce(batches: list[np.ndarray], ids, cfg: PipelineConfig, metrics: RunMetrics) -> set[MatchPair]:
    t0 = time.perf_counter()
    groups, nbytes = shuffle_group(batches)
    metrics.time_shuffle += time.perf_counter() - t0
    metrics.bytes_shuffled += nbytes
    t0 = time.perf_counter()
    outs = run_tasks(lambda g: refine_group(g, ids, cfg.params, **cfg.ablation), groups, cfg.workers)
    metrics.time_refine += time.perf_counter() - t0
    raw = [m for o in outs for m in o]
    metrics.duplicate_matches_in_tasks = sum(len(o) - len(set(o)) for o in outs)
    metrics.matches_raw = len(raw)
    result = canonical(raw)
    metrics.matches = len(result)
    return result


def _run_dtjb(table: PointTable, cfg: PipelineConfig, metrics: RunMetrics) -> set[MatchPair]:
    t0 = time.perf_counter()
    parts = uniform_temporal_partition(table, cfg.n_parts or cfg.workers, cfg.params)
    metrics.time_partition += time.perf_counter() - t0
    with tempfile.TemporaryDirectory(prefix="dtjb-") as tmp:
        spill = Path(cfg.workdir) / "dtjb" if cfg.workdir is not None else Path(tmp)
        spill.mkdir(parents=True, exist_ok=True)
        # job 1: join, spilled to intermediate files
        batches = run_join_phase(parts, cfg, metrics=metrics)
        paths = []
        for i, b in enumerate(batches):
            p = spill / f"job1-part-{i}.npy"
            np.save(p, b)
            paths.append(p)
        metrics.duplicate_records = count_duplicates(batches)
        # job 2: read back, shuffle, refine
        batches = [np.load(p) for p in paths]
        return _reduce(batches, table.ids, cfg, metrics)


def _run_split_pipeline(cfg: PipelineConfig, metrics: RunMetrics) -> set[MatchPair]:
    if cfg.workdir is None:
        raise ValueError(f"{cfg.variant} needs a repartitioned workdir")
    t0 = time.perf_counter()
    wd = io.load_workdir(cfg.workdir)
    if cfg.variant == "dtji" and wd.tree is None:
        raise ValueError(f"{cfg.workdir} has no QuadTree; rerun repartition with --quadtree-threshold")
    table = concat_files(wd.files)
    splits = build_splits(wd.files, cfg.params, table)
    metrics.time_partition += time.perf_counter() - t0
    metrics.bytes_input = len(table) * POINT_BYTES
    batches = run_join_phase(splits, cfg, wd.tree, metrics)
    metrics.duplicate_records = count_duplicates(batches)
    return _reduce(batches, wd.ids, cfg, metrics)


def run_pipeline(data: PointTable | None, cfg: PipelineConfig) -> tuple[set[MatchPair], RunMetrics]:
    metrics = RunMetrics(variant=cfg.variant)
    t0 = time.perf_counter()
    if cfg.variant == "dtjb":
        if data is None:
            raise ValueError("dtjb reads the raw dataset; pass a point table")
        metrics.bytes_input = len(data) * POINT_BYTES
        result = _run_dtjb(data, cfg, metrics) if len(data) else set()
    else:
        result = _run_split_pipeline(cfg, metrics)
    metrics.time_total = time.perf_counter() - t0
    return result, metrics
