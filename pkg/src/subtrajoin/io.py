"""File formats: point CSV, result CSV, binary partition files and the manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .index import QuadTree
from .model import Interval, MatchPair, PointTable
from .partitioning import PartitionFile

SCHEMA_VERSION = 1
POINT_HEADER = ["traj_id", "t", "x", "y"]
RESULT_HEADER = ["traj_a", "start_t_a", "end_t_a", "traj_b", "start_t_b", "end_t_b"]
PART_DTYPE = np.dtype([("traj", "<i4"), ("t", "<f8"), ("x", "<f8"), ("y", "<f8")])
WORKDIR_ENV = "SUBTRAJOIN_WORKDIR"


def default_workdir(explicit: str | os.PathLike | None = None) -> Path:
    if explicit is not None:
        return Path(explicit)
    return Path(os.environ.get(WORKDIR_ENV, "subtrajoin-work"))


def read_csv(path) -> PointTable:
    ids, ts, xs, ys = [], [], [], []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != POINT_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(POINT_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                t, x, y = float(row[1]), float(row[2]), float(row[3])
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            ids.append(row[0])
            ts.append(t)
            xs.append(x)
            ys.append(y)
    if not ids:
        return PointTable.empty()
    return PointTable.from_columns(ids, ts, xs, ys)


def write_csv(table: PointTable, path) -> None:
    order = np.lexsort((table.t, table.traj))
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(POINT_HEADER)
        for i in order:
            w.writerow([table.ids[table.traj[i]], repr(float(table.t[i])),
                        repr(float(table.x[i])), repr(float(table.y[i]))])


def result_rows(pairs: Iterable[MatchPair]) -> list[tuple]:
    return sorted({MatchPair.of(p.sub_r, p.sub_s).as_row() for p in pairs})


def write_results(pairs: Iterable[MatchPair], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for a, sa, ea, b, sb, eb in result_rows(pairs):
            w.writerow([a, repr(sa), repr(ea), b, repr(sb), repr(eb)])


def read_results(path) -> list[tuple]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        if next(reader, None) != RESULT_HEADER:
            raise ValueError(f"{path}: not a result file")
        return [(a, float(sa), float(ea), b, float(sb), float(eb)) for a, sa, ea, b, sb, eb in reader]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _num(v: float):
    return v if math.isfinite(v) else None


def _unnum(v, inf: float) -> float:
    return inf if v is None else float(v)


def write_part(table: PointTable, path: Path) -> None:
    rec = np.empty(len(table), dtype=PART_DTYPE)
    rec["traj"], rec["t"], rec["x"], rec["y"] = table.traj, table.t, table.x, table.y
    rec.tofile(path)


def read_part(path: Path, ids) -> PointTable:
    rec = np.fromfile(path, dtype=PART_DTYPE)
    return PointTable(ids, rec["traj"], rec["t"], rec["x"], rec["y"], presorted=True)


def write_workdir(workdir, files: list[PartitionFile], ids, *, boundaries, sample_size: int,
                  k: int, seed: int, tree: QuadTree | None = None) -> dict:
    workdir = Path(workdir)
    parts = workdir / "parts"
    parts.mkdir(parents=True, exist_ok=True)
    entries = []
    n = 0
    t_lo, t_hi = math.inf, -math.inf
    for f in files:
        path = parts / f"part-{f.index}"
        write_part(f.table, path)
        n += len(f.table)
        if len(f.table):
            t_lo, t_hi = min(t_lo, float(f.table.t[0])), max(t_hi, float(f.table.t[-1]))
        entries.append({
            "path": f"parts/part-{f.index}",
            "points": len(f.table),
            "base": [_num(f.base.t_start), _num(f.base.t_end)],
            "group_id": f.group_id,
            "sha256": _sha256(path),
        })
    manifest = {
        "schema": SCHEMA_VERSION,
        "points": n,
        "time_range": [_num(t_lo), _num(t_hi)],
        "boundaries": [_num(float(b)) for b in boundaries],
        "M": len(files),
        "k": k,
        "seed": seed,
        "sample_size": sample_size,
        "ids": list(ids),
        "files": entries,
        "quadtree": None if tree is None else tree.to_json(),
    }
    (workdir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


@dataclass
class Workdir:
    manifest: dict
    files: list[PartitionFile]
    tree: QuadTree | None

    @property
    def ids(self) -> tuple:
        return tuple(self.manifest["ids"])


def load_workdir(workdir, verify: bool = True) -> Workdir:
    workdir = Path(workdir)
    mpath = workdir / "manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(
            f"no repartitioned data under {workdir}; run the `repartition` command first"
        )
    manifest = json.loads(mpath.read_text())
    if manifest.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema {manifest.get('schema')!r}")
    ids = tuple(manifest["ids"])
    files = []
    for i, e in enumerate(manifest["files"]):
        path = workdir / e["path"]
        if verify and _sha256(path) != e["sha256"]:
            raise ValueError(f"checksum mismatch for {path}")
        base = Interval(_unnum(e["base"][0], -math.inf), _unnum(e["base"][1], math.inf))
        files.append(PartitionFile(i, base, e["group_id"], read_part(path, ids)))
    tree = None if manifest.get("quadtree") is None else QuadTree.from_json(manifest["quadtree"])
    return Workdir(manifest, files, tree)


def parse_dataset(path) -> PointTable:
    """A point CSV, or a repartitioned workdir (directory with a manifest)."""
    path = Path(path)
    if path.is_dir():
        from .partitioning import concat_files

        wd = load_workdir(path)
        table = concat_files(wd.files)
        table.validate()
        return table
    return read_csv(path)
