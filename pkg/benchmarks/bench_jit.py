"""Compiled kernels vs the pure-Python fallback.

Runs the plain sweep and the indexed sweep over one partition of a generated
dataset, once per mode. The fallback mode is a child process started with
SUBTRAJOIN_DISABLE_JIT=1, since the flag is read at import time.

    python3 benchmarks/bench_jit.py --n-traj 200 --points 40
"""
import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

import numpy as np


def run_once(args):
    from subtrajoin import _jit
    from subtrajoin.generate import GenSpec, generate_dataset
    from subtrajoin.index import build_quadtree, join_records_indexed
    from subtrajoin.join import join_records
    from subtrajoin.model import JoinParams
    from subtrajoin.partitioning import build_equidepth_histogram, build_splits, repartition, uniform_temporal_partition

    tab = generate_dataset(GenSpec(n_traj=args.n_traj, points_per_traj=args.points, duration=3600.0,
                                   extent=2000.0, speed=2.0, group_size=3, n_groups=args.n_traj // 10,
                                   spread=1.0, seed=args.seed))
    params = JoinParams(args.eps_sp, args.eps_t, args.delta_t)
    (part,) = uniform_temporal_partition(tab, 1, params)
    hist = build_equidepth_histogram(tab.t, 1.0, 1, seed=args.seed)
    (split,) = build_splits(repartition(tab, hist), params)
    tree = build_quadtree(tab.x, tab.y, max(1, len(tab) * 3 // 100))

    out = {"jit": _jit.JIT_ENABLED, "points": len(tab)}
    for name, fn in (("sweep", lambda: join_records(part, params, "flag")),
                     ("indexed", lambda: join_records_indexed(split, tree, params))):
        fn()  # compile or warm caches
        best = float("inf")
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            rec = fn()
            best = min(best, time.perf_counter() - t0)
        out[name] = best
        out[name + "_digest"] = hashlib.sha1(np.sort(rec).tobytes()).hexdigest()[:12]
        out[name + "_records"] = len(rec)
    return out


def child(args, disable):
    env = dict(os.environ)
    env.pop("SUBTRAJOIN_DISABLE_JIT", None)
    if disable:
        env["SUBTRAJOIN_DISABLE_JIT"] = "1"
    cmd = [sys.executable, __file__, "--child", *sys.argv[1:]]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-traj", type=int, default=200)
    ap.add_argument("--points", type=int, default=40)
    ap.add_argument("--eps-sp", type=float, default=5.0)
    ap.add_argument("--eps-t", type=float, default=60.0)
    ap.add_argument("--delta-t", type=float, default=300.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--child", action="store_true")
    args = ap.parse_args(argv)

    if args.child:
        print(json.dumps(run_once(args)))
        return 0

    fast, slow = child(args, False), child(args, True)
    print(f"points: {fast['points']}  (numba active: {fast['jit']})")
    print(f"{'kernel':<10}{'njit s':>10}{'python s':>12}{'speedup':>10}  records")
    ok = True
    for name in ("sweep", "indexed"):
        same = fast[name + "_digest"] == slow[name + "_digest"]
        ok &= same
        print(f"{name:<10}{fast[name]:>10.4f}{slow[name]:>12.4f}{slow[name] / fast[name]:>9.1f}x  "
              f"{fast[name + '_records']}{'' if same else '  OUTPUT DIFFERS'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
