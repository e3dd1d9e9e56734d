"""Command line entry point: ``subtrajoin <command> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import io
from .engine import PipelineConfig, prepare_workdir, run_pipeline
from .generate import GenSpec, generate_dataset
from .model import JoinParams, PointTable, fixture_t1, fixture_t2
from .oracle import oracle_join
from .partitioning import compute_m

FIXTURES = {"t1": fixture_t1, "t2": fixture_t2}


def _params(args) -> JoinParams:
    return JoinParams(args.eps_sp, args.eps_t, args.delta_t)


def _add_params(p, required=True):
    p.add_argument("--eps-sp", type=float, required=required, help="spatial threshold")
    p.add_argument("--eps-t", type=float, required=required, help="temporal threshold (seconds)")
    p.add_argument("--delta-t", type=float, required=required, help="minimum duration (seconds)")


def _load(path) -> PointTable:
    table = io.parse_dataset(path)
    logging.info("loaded %d points of %d trajectories from %s", len(table), table.n_traj, path)
    return table


def cmd_gen(args) -> int:
    if args.fixture:
        trajs, params = FIXTURES[args.fixture]()
        io.write_csv(PointTable.from_trajectories(trajs), args.out)
        print(f"eps_sp={params.eps_sp} eps_t={params.eps_t} delta_t={params.delta_t}")
        return 0
    spec = GenSpec(
        n_traj=args.n_traj, points_per_traj=args.points, duration=args.duration, extent=args.extent,
        speed=args.speed, skew=args.skew, group_size=args.group_size, n_groups=args.groups,
        group_fraction=args.group_fraction, spread=args.spread, seed=args.seed,
    )
    io.write_csv(generate_dataset(spec), args.out)
    return 0


def _blocks(args, table: PointTable) -> int:
    if args.blocks is not None:
        return args.blocks
    return compute_m(max(1, len(table) * io.PART_DTYPE.itemsize), args.block_size)


def cmd_repartition(args) -> int:
    table = _load(args.input)
    M = _blocks(args, table)
    wd = prepare_workdir(table, io.default_workdir(args.workdir), M=M, sample_rate=args.sample_rate,
                         quadtree_pct=args.quadtree_threshold, seed=args.seed, workers=args.workers)
    m = wd.manifest
    print(f"M={m['M']} k={m['k']} sample={m['sample_size']} points={m['points']}"
          + ("" if wd.tree is None else f" leaves={wd.tree.n_leaves} height={wd.tree.height}"))
    return 0


def _run(args, algo: str, table: PointTable | None, workdir):
    cfg = PipelineConfig(algo, _params(args), workers=args.workers, n_parts=args.parts, workdir=workdir)
    return run_pipeline(table, cfg)


def cmd_join(args) -> int:
    if args.algo == "dtjb" and not args.input:
        raise SystemExit("error: --algo dtjb reads the raw dataset; pass --input")
    table = _load(args.input) if args.input else None
    # dtjb only uses the workdir to spill intermediates
    workdir = args.workdir if args.algo == "dtjb" else io.default_workdir(args.workdir)
    result, metrics = _run(args, args.algo, table, workdir)
    io.write_results(result, args.out)
    if args.metrics:
        metrics.write(args.metrics)
    if args.task_csv:
        metrics.write_task_csv(args.task_csv)
    print(f"{len(result)} matches, join {metrics.time_join:.3f}s, total {metrics.time_total:.3f}s")
    return 0


def cmd_oracle(args) -> int:
    table = _load(args.input)
    io.write_results(oracle_join(table.trajectories(), _params(args)), args.out)
    return 0


def cmd_verify(args) -> int:
    table = _load(args.input)
    want = io.result_rows(oracle_join(table.trajectories(), _params(args)))
    algos = ["dtjb", "dtjr", "dtji"] if args.algo == "all" else [args.algo]
    status = 0
    with tempfile.TemporaryDirectory(prefix="verify-") as tmp:
        workdir = Path(args.workdir) if args.workdir else Path(tmp)
        if not (workdir / "manifest.json").exists():
            prepare_workdir(table, workdir, M=args.blocks, sample_rate=1.0,
                            quadtree_pct=args.quadtree_threshold, seed=args.seed)
        for algo in algos:
            result, _ = _run(args, algo, table, workdir)
            got = io.result_rows(result)
            if got == want:
                print(f"{algo}: OK ({len(got)} matches)")
                continue
            status = 1
            print(f"{algo}: MISMATCH ({len(got)} vs oracle {len(want)})")
            for row in sorted(set(want) - set(got)):
                print("  missing", row)
            for row in sorted(set(got) - set(want)):
                print("  extra  ", row)
    return status


SWEEPS = {
    # Table-1 style grids: minutes for the temporal ones, percent otherwise
    "eps_t": [10, 15, 20, 25, 30],
    "eps_sp": [10, 20, 30, 40, 50],
    "delta_t": [10, 15, 20, 25, 30],
    "threshold": [1, 2, 3, 4, 5],
}
DEFAULTS = {"eps_t": 20, "eps_sp": 30, "delta_t": 20, "threshold": 3}


def smallest_cell_diameter(tree) -> float:
    boxes = tree.leaf_boxes()
    d = np.hypot(boxes[:, 2] - boxes[:, 0], boxes[:, 3] - boxes[:, 1])
    d = d[d > 0]
    return float(d.min()) if len(d) else 0.0


def cmd_bench(args) -> int:
    if args.input:
        table = _load(args.input)
    else:
        table = generate_dataset(GenSpec(n_traj=args.n_traj, points_per_traj=args.points,
                                         duration=args.duration, seed=args.seed))
    algos = [a.strip() for a in args.algos.split(",")]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["algo", "param", "value", "eps_sp", "eps_t", "delta_t", "threshold_pct",
                "matches", "join_s", "index_build_s", "total_s", "input_std"])
    with tempfile.TemporaryDirectory(prefix="bench-") as tmp:
        prepared = None
        for value in SWEEPS[args.param]:
            setting = dict(DEFAULTS, **{args.param: value})
            if prepared != setting["threshold"]:
                wd = prepare_workdir(table, tmp, M=args.blocks, quadtree_pct=setting["threshold"], seed=args.seed,
                                     workers=args.workers)
                prepared = setting["threshold"]
            eps_sp = setting["eps_sp"] / 100 * smallest_cell_diameter(wd.tree)
            params = JoinParams(eps_sp, setting["eps_t"] * 60.0, setting["delta_t"] * 60.0)
            for algo in algos:
                cfg = PipelineConfig(algo, params, workers=args.workers, n_parts=args.blocks, workdir=tmp)
                result, m = run_pipeline(table, cfg)
                w.writerow([algo, args.param, value, eps_sp, params.eps_t, params.delta_t, setting["threshold"],
                            len(result), f"{m.time_join:.4f}", f"{m.time_index_build:.4f}",
                            f"{m.time_total:.4f}", f"{m.input_std:.2f}"])
                out.flush()
    if out is not sys.stdout:
        out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subtrajoin", description="Subtrajectory join over trajectory CSVs.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--fixture", choices=sorted(FIXTURES), help="write a small named fixture instead")
    p.add_argument("--n-traj", type=int, default=100)
    p.add_argument("--points", type=int, default=100, help="points per trajectory")
    p.add_argument("--duration", type=float, default=3600.0, help="seconds")
    p.add_argument("--extent", type=float, default=1000.0)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--skew", type=float, default=0.0)
    p.add_argument("--group-size", type=int, default=0)
    p.add_argument("--groups", type=int, default=0)
    p.add_argument("--group-fraction", type=float, default=0.5)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("repartition", help="equi-depth repartitioning plus QuadTree")
    p.add_argument("--input", required=True)
    p.add_argument("--workdir")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--blocks", type=int, help="number of partition files M")
    g.add_argument("--block-size", type=int, help="bytes per partition file")
    p.add_argument("--sample-rate", type=float, default=None)
    p.add_argument("--quadtree-threshold", type=float, default=3.0, help="max points per cell, percent")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_repartition)

    p = sub.add_parser("join", help="run one pipeline")
    p.add_argument("--algo", choices=["dtjb", "dtjr", "dtji"], required=True)
    p.add_argument("--input", help="point CSV (needed for dtjb)")
    p.add_argument("--workdir")
    _add_params(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--parts", type=int, default=None, help="dtjb partitions (default: workers)")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--task-csv")
    p.set_defaults(func=cmd_join)

    p = sub.add_parser("oracle", help="brute-force reference result")
    p.add_argument("--input", required=True)
    _add_params(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("verify", help="compare pipelines with the oracle")
    p.add_argument("--input", required=True)
    p.add_argument("--algo", choices=["dtjb", "dtjr", "dtji", "all"], default="all")
    _add_params(p)
    p.add_argument("--workdir")
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--parts", type=int, default=None)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--quadtree-threshold", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="parameter sweep, CSV out")
    p.add_argument("--param", choices=sorted(SWEEPS), default="eps_t")
    p.add_argument("--algos", default="dtjb,dtjr,dtji")
    p.add_argument("--input")
    p.add_argument("--n-traj", type=int, default=200)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--duration", type=float, default=6 * 3600.0)
    p.add_argument("--blocks", type=int, default=8)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
