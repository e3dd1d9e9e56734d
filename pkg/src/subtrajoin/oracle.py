"""Brute-force reference for point classification and maximal matches.

Deliberately naive: every cross-trajectory point pair is evaluated and every
subtrajectory range of ``r`` is enumerated. Intended for small inputs
(roughly 25 trajectories x 50 points); it is the ground truth the pipelines
are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable

import numpy as np

from .model import JoinParams, MatchPair, Subtrajectory, Trajectory, TrajectoryPoint

Pair = tuple[TrajectoryPoint, TrajectoryPoint]


@dataclass
class PairClassification:
    jp: set[Pair] = field(default_factory=set)
    bp: set[TrajectoryPoint] = field(default_factory=set)
    # (r_i, s_j) where s_j is the non-joining point w.r.t. r_i
    snjp: set[Pair] = field(default_factory=set)
    # (r, s, mask) blocks; njp holds nearly all pairs, so it is built on demand
    njp_blocks: list = field(default_factory=list, repr=False)
    _njp: set | None = field(default=None, repr=False, compare=False)

    @property
    def njp(self) -> set[Pair]:
        if self._njp is None:
            self._njp = {(r.points[i], s.points[j]) for r, s, mask in self.njp_blocks
                         for i, j in zip(*np.nonzero(mask))}
        return self._njp


def _arrays(tr: Trajectory):
    t = np.array([p.t for p in tr.points])
    x = np.array([p.x for p in tr.points])
    y = np.array([p.y for p in tr.points])
    return t, x, y


def adjacency(r: Trajectory, s: Trajectory, params: JoinParams) -> np.ndarray:
    """``adj[i, j]`` is true iff ``(r[i], s[j])`` is a joining pair."""
    rt, rx, ry = _arrays(r)
    st, sx, sy = _arrays(s)
    dx = rx[:, None] - sx[None, :]
    dy = ry[:, None] - sy[None, :]
    close_t = np.abs(rt[:, None] - st[None, :]) <= params.eps_t
    close_s = np.sqrt(dx * dx + dy * dy) <= params.eps_sp
    return close_t & close_s


def _check_ids(trajectories: list[Trajectory]) -> None:
    ids = [tr.id for tr in trajectories]
    if len(set(ids)) != len(ids):
        raise ValueError("trajectory ids must be unique")


def classify_point_pairs(trajectories: Iterable[Trajectory], params: JoinParams) -> PairClassification:
    trajectories = list(trajectories)
    _check_ids(trajectories)
    out = PairClassification()
    adj = {}
    has_partner = {tr.id: np.zeros(tr.N, dtype=bool) for tr in trajectories}
    for r, s in combinations(trajectories, 2):
        a = adjacency(r, s, params)
        adj[r.id, s.id] = a
        adj[s.id, r.id] = a.T
        has_partner[r.id] |= a.any(axis=1)
        has_partner[s.id] |= a.any(axis=0)

    for tr in trajectories:
        for i, p in enumerate(tr.points):
            if not has_partner[tr.id][i]:
                out.bp.add(p)

    for r in trajectories:
        for s in trajectories:
            if r.id == s.id:
                continue
            a = adj[r.id, s.id]
            for i, j in zip(*np.nonzero(a)):
                out.jp.add((r.points[i], s.points[j]))
            njp = ~a & has_partner[r.id][:, None] & has_partner[s.id][None, :]
            out.njp_blocks.append((r, s, njp))
            out.snjp |= _snjp(r, s, a, njp)
    return out


def _snjp(r: Trajectory, s: Trajectory, a: np.ndarray, njp: np.ndarray) -> set[Pair]:
    """Pairs ``(r_i, s_j)`` with ``s_j`` in sNJP w.r.t. ``r_i``.

    ``r_i`` must be strictly nearer in time to ``s_j`` than every other point
    of ``r``, so each ``s_j`` has at most one candidate ``r_i``.
    """
    n, m = a.shape
    rt = np.array([p.t for p in r.points])
    st = np.array([p.t for p in s.points])
    dt = np.abs(rt[:, None] - st[None, :])
    near = dt.argmin(axis=0)
    if n > 1:
        unique = dt[near, np.arange(m)] < np.partition(dt, 1, axis=0)[1]
    else:
        unique = np.ones(m, dtype=bool)
    joined = a.sum(axis=0)
    first = a.argmax(axis=0)
    found = set()
    for j in np.flatnonzero(unique):
        i = near[j]
        if not njp[i, j]:
            continue
        # some r_p, p != i, joins s_{j-1} or s_{j+1}
        for jj in (j - 1, j + 1):
            if 0 <= jj < m and (joined[jj] >= 2 or (joined[jj] == 1 and first[jj] != i)):
                found.add((r.points[i], s.points[j]))
                break
    return found


def _row_masks(adj: np.ndarray) -> list[int]:
    return [
        int.from_bytes(np.packbits(row, bitorder="little").tobytes(), "little") for row in adj
    ]


def maximal_ranges(adj: np.ndarray) -> list[tuple[int, int, int, int]]:
    """All maximal ``(a, b, c, d)`` with ``r[a..b]`` and ``s[c..d]`` covering each other.

    For a fixed ``r`` range every matching ``s`` range sits inside one maximal
    run of ``s`` points that have a partner in the ``r`` range, and the whole run
    then matches as well. So it is enough to enumerate r ranges, pair each with
    those runs, and drop candidates strictly contained in another candidate.
    """
    n, m = adj.shape
    rows = _row_masks(adj)
    cands = set()
    for a in range(n):
        if not rows[a]:
            continue
        cover = 0
        for b in range(a, n):
            if not rows[b]:
                break
            cover |= rows[b]
            rest = cover
            while rest:
                low = rest & -rest
                run = rest & ~(rest + low)
                rest ^= run
                if all(rows[i] & run for i in range(a, b + 1)):
                    cands.add((a, b, low.bit_length() - 1, run.bit_length() - 1))
    if not cands:
        return []
    c = np.array(sorted(cands))
    keep = []
    for k in range(len(c)):
        a, b, lo, hi = c[k]
        sup = (c[:, 0] <= a) & (c[:, 1] >= b) & (c[:, 2] <= lo) & (c[:, 3] >= hi)
        sup[k] = False
        if not sup.any():
            keep.append((int(a), int(b), int(lo), int(hi)))
    return keep


def _pair_matches(r: Trajectory, s: Trajectory, adj: np.ndarray, params: JoinParams,
                  r_index=None, s_index=None) -> set[MatchPair]:
    out = set()
    r_index = np.arange(r.N) if r_index is None else r_index
    s_index = np.arange(s.N) if s_index is None else s_index
    for a, b, c, d in maximal_ranges(adj):
        ra, rb, sc, sd = r.points[a], r.points[b], s.points[c], s.points[d]
        dw = min(rb.t, sd.t) - max(ra.t, sc.t)
        if dw >= params.min_lifespan:
            out.add(MatchPair.of(
                Subtrajectory(r.id, ra.t, rb.t, int(r_index[a]), int(r_index[b])),
                Subtrajectory(s.id, sc.t, sd.t, int(s_index[c]), int(s_index[d])),
            ))
    return out


def oracle_join(trajectories: Iterable[Trajectory], params: JoinParams) -> set[MatchPair]:
    trajectories = sorted(trajectories, key=lambda tr: tr.id.encode())
    _check_ids(trajectories)
    result = set()
    for r, s in combinations(trajectories, 2):
        adj = adjacency(r, s, params)
        if adj.any():
            result |= _pair_matches(r, s, adj, params)
    return result


def ablated_oracle_join(trajectories: Iterable[Trajectory], params: JoinParams,
                        ignore: str) -> set[MatchPair]:
    """Matches found by an algorithm blind to part of the non-joining information.

    ``ignore="bp"``: breaking points are invisible, as if deleted from their
    trajectories. ``ignore="snjp"``: per trajectory pair, points of one side
    with no partner on the other side (but some partner elsewhere) are
    invisible. Both produce wrong, overly long matches on the instances that
    make the corresponding information necessary.
    """
    if ignore not in ("bp", "snjp"):
        raise ValueError(f"unknown ablation {ignore!r}")
    trajectories = sorted(trajectories, key=lambda tr: tr.id.encode())
    _check_ids(trajectories)
    partner_any = {tr.id: np.zeros(tr.N, dtype=bool) for tr in trajectories}
    adjs = {}
    for r, s in combinations(trajectories, 2):
        a = adjacency(r, s, params)
        adjs[r.id, s.id] = a
        partner_any[r.id] |= a.any(axis=1)
        partner_any[s.id] |= a.any(axis=0)

    result = set()
    for r, s in combinations(trajectories, 2):
        a = adjs[r.id, s.id]
        if not a.any():
            continue
        if ignore == "bp":
            keep_r, keep_s = partner_any[r.id], partner_any[s.id]
        else:
            keep_r = a.any(axis=1) | ~partner_any[r.id]
            keep_s = a.any(axis=0) | ~partner_any[s.id]
        ri, si = np.flatnonzero(keep_r), np.flatnonzero(keep_s)
        rr = Trajectory(r.id, tuple(r.points[i] for i in ri))
        ss = Trajectory(s.id, tuple(s.points[j] for j in si))
        result |= _pair_matches(rr, ss, a[np.ix_(ri, si)], params, ri, si)
    return result
