"""Turn one reference trajectory's join records into maximal matches.

The reference trajectory ``p`` is fully present in its own stream: every
point has either joining records or a breaking-point record. A partner
trajectory ``x`` is only seen through the points that join ``p`` plus the
false-flag points, which mark where ``x`` leaves ``p``'s neighbourhood.
Those markers cut ``x``'s joining points into segments of consecutive
points. Inside a segment, the maximal matches are found by repeatedly
shrinking a (p-range, x-range) pair to the points that still have a partner
on the other side until nothing changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .join import RECORD_DTYPE
from .model import JoinParams, MatchPair, PairRecord, Subtrajectory, TrajectoryPoint


@dataclass
class MatchList:
    """One entry per reference point in time order; partners sorted by (trajectory, t)."""

    entries: list = field(default_factory=list)

    def partners(self, traj_id: str) -> list:
        return [(ref, [q for q in ps if q.traj_id == traj_id]) for ref, ps in self.entries]


@dataclass
class FalseList:
    pairs: dict = field(default_factory=dict)

    def add(self, ref: TrajectoryPoint, other: TrajectoryPoint) -> None:
        self.pairs.setdefault((ref, other.traj_id), []).append(other)

    def points(self, traj_id: str) -> set:
        return {q for (_, tid), qs in self.pairs.items() if tid == traj_id for q in qs}


def build_lists(records: Iterable[PairRecord]) -> tuple[MatchList, FalseList]:
    ml, fl = MatchList(), FalseList()
    by_ref: dict = {}
    last_t = -np.inf
    for rec in records:
        if rec.ref_point.t < last_t:
            raise ValueError("records are not sorted by reference time")
        last_t = rec.ref_point.t
        ps = by_ref.setdefault(rec.ref_point, [])
        if rec.kind == "JP":
            ps.append(rec.other_point)
        elif rec.kind == "sNJP":
            fl.add(rec.ref_point, rec.other_point)
    for ref in sorted(by_ref, key=lambda q: q.t):
        ml.entries.append((ref, sorted(set(by_ref[ref]), key=lambda q: (q.traj_id.encode(), q.t))))
    return ml, fl


def _runs(sorted_vals: np.ndarray) -> list[tuple[int, int]]:
    if not len(sorted_vals):
        return []
    cut = np.flatnonzero(np.diff(sorted_vals) != 1) + 1
    starts = np.concatenate([[0], cut])
    ends = np.concatenate([cut, [len(sorted_vals)]]) - 1
    return [(int(sorted_vals[s]), int(sorted_vals[e])) for s, e in zip(starts, ends)]


def closure_fixpoints(rows: np.ndarray, cols: np.ndarray, a0: int, a1: int, b0: int, b1: int) -> list:
    """Fixpoints of the mutual-partner restriction, starting from rows a0..a1 x cols b0..b1.

    ``rows``/``cols`` are the edge list. Every matching sub-range pair lies
    inside some returned fixpoint, and each fixpoint is itself a match.
    """
    out, seen = [], set()
    stack = [(a0, a1, b0, b1)]
    while stack:
        key = stack.pop()
        if key in seen:
            continue
        seen.add(key)
        a, b, c, d = key
        sel = (rows >= a) & (rows <= b) & (cols >= c) & (cols <= d)
        r, s = rows[sel], cols[sel]
        if not len(r):
            continue
        ur, us = np.unique(r), np.unique(s)
        if len(ur) == b - a + 1 and len(us) == d - c + 1:
            out.append(key)
            continue
        rr, cr = _runs(ur), _runs(us)
        r_lo = np.array([x for x, _ in rr])
        c_lo = np.array([x for x, _ in cr])
        ri = np.searchsorted(r_lo, r, side="right") - 1
        ci = np.searchsorted(c_lo, s, side="right") - 1
        for i, j in set(zip(ri.tolist(), ci.tolist())):
            stack.append((rr[i][0], rr[i][1], cr[j][0], cr[j][1]))
    return out


def _maximal(cands: list) -> list:
    if not cands:
        return []
    c = np.array(sorted(set(cands)))
    keep = []
    for k in range(len(c)):
        a, b, lo, hi = c[k]
        sup = (c[:, 0] <= a) & (c[:, 1] >= b) & (c[:, 2] <= lo) & (c[:, 3] >= hi)
        sup[k] = False
        if not sup.any():
            keep.append(tuple(int(v) for v in c[k]))
    return keep


def window_sweep(ref_t: np.ndarray, oth_t: np.ndarray, ranges: list, params: JoinParams) -> list:
    """Keep the ranges whose common lifespan reaches ``delta_t - 2*eps_t``."""
    out = []
    for a, b, c, d in ranges:
        dw = min(ref_t[b], oth_t[d]) - max(ref_t[a], oth_t[c])
        if dw >= params.min_lifespan:
            out.append((a, b, c, d))
    return out


def refine_arrays(ref_t: np.ndarray, ref_is_bp: np.ndarray, jp_row: np.ndarray, jp_traj: np.ndarray,
                  jp_t: np.ndarray, f_traj: np.ndarray, f_t: np.ndarray, params: JoinParams, *,
                  use_breaking_points: bool = True, use_false_list: bool = True) -> list:
    """Core of the reduce step on plain arrays.

    ``ref_t``: the reference points in time order. ``jp_*``: joining records as
    (row into ref_t, partner trajectory code, partner t). ``f_*``: false-flag
    partners. Returns ``(code, a, b, x_start_t, x_end_t)`` with ``a..b`` rows of
    the reference trajectory.
    """
    if not use_breaking_points:
        keep = ~ref_is_bp
        remap = np.cumsum(keep) - 1
        ref_t = ref_t[keep]
        jp_row = remap[jp_row]
    out = []
    for code in np.unique(jp_traj):
        m = jp_traj == code
        rows = jp_row[m]
        xt_all = jp_t[m]
        xt = np.unique(xt_all)
        cols = np.searchsorted(xt, xt_all)
        if use_false_list:
            marks = np.unique(f_t[f_traj == code])
            marks = marks[~np.isin(marks, xt)]
        else:
            marks = np.empty(0)
        seg = np.searchsorted(marks, xt, side="left")
        cands = []
        for g in np.unique(seg):
            in_seg = np.flatnonzero(seg == g)
            c0, c1 = int(in_seg[0]), int(in_seg[-1])
            em = (cols >= c0) & (cols <= c1)
            cands.extend(closure_fixpoints(rows[em], cols[em], 0, len(ref_t) - 1, c0, c1))
        for a, b, c, d in window_sweep(ref_t, xt, _maximal(cands), params):
            out.append((int(code), a, b, float(xt[c]), float(xt[d])))
    return out


def _check_sorted(ref_t: np.ndarray) -> None:
    if len(ref_t) > 1 and np.any(np.diff(ref_t) < 0):
        raise ValueError("records are not sorted by reference time")


def refine_group(rec: np.ndarray, ids, params: JoinParams, **ablation) -> list[MatchPair]:
    """Refine the records of one reference trajectory (a ``RECORD_DTYPE`` array)."""
    if rec.dtype != RECORD_DTYPE:
        raise TypeError("expected join records")
    if not len(rec):
        return []
    _check_sorted(rec["ref_t"])
    if np.any(rec["ref_traj"] != rec["ref_traj"][0]):
        raise ValueError("records of several reference trajectories in one group")
    ref_t = np.unique(rec["ref_t"])
    is_jp = (rec["flag"] == 1) & (rec["oth_traj"] >= 0)
    is_f = rec["flag"] == 0
    has_jp = np.zeros(len(ref_t), dtype=bool)
    jp_row = np.searchsorted(ref_t, rec["ref_t"][is_jp])
    has_jp[jp_row] = True
    rows = refine_arrays(ref_t, ~has_jp, jp_row, rec["oth_traj"][is_jp], rec["oth_t"][is_jp],
                         rec["oth_traj"][is_f], rec["oth_t"][is_f], params, **ablation)
    pid = ids[int(rec["ref_traj"][0])]
    out = []
    for code, a, b, xs, xe in rows:
        if ablation.get("use_breaking_points", True):
            ts, te = float(ref_t[a]), float(ref_t[b])
            sub = Subtrajectory(pid, ts, te, a, b)
        else:
            kept = ref_t[has_jp]
            sub = Subtrajectory(pid, float(kept[a]), float(kept[b]))
        out.append(MatchPair.of(sub, Subtrajectory(ids[code], xs, xe)))
    return out


def refine_trajectory(records: Iterable[PairRecord], params: JoinParams, **ablation) -> set[MatchPair]:
    """Object-level form: records of a single reference trajectory, shuffle-sorted."""
    records = list(records)
    if not records:
        return set()
    pid = records[0].ref_point.traj_id
    names = sorted({pid} | {r.other_point.traj_id for r in records if r.other_point is not None},
                   key=lambda s: s.encode())
    code = {s: i for i, s in enumerate(names)}
    rec = np.empty(len(records), dtype=RECORD_DTYPE)
    for i, r in enumerate(records):
        if r.ref_point.traj_id != pid:
            raise ValueError("records of several reference trajectories in one group")
        o = r.other_point
        rec[i] = (code[pid], r.ref_point.t, r.ref_point.x, r.ref_point.y,
                  -1 if o is None else code[o.traj_id], 0.0 if o is None else o.t,
                  0.0 if o is None else o.x, 0.0 if o is None else o.y, int(r.flag))
    return set(refine_group(rec, names, params, **ablation))
