"""Plane-sweep join over one time-sorted partition or split.

The kernel works on a flat buffer: context points first (never swept, never
emitting), then the window points, all sorted by time. It emits raw
``(ref_pos, other_pos, flag)`` triples, where ``other_pos == -1`` marks a
breaking point. ``emit[p]`` is the duplicate check: a record is produced only
when its reference point passes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit
from .model import JoinParams, PairRecord, PointTable, TrajectoryPoint

# 57 bytes per record when packed; also the shuffle's byte accounting unit
RECORD_DTYPE = np.dtype([
    ("ref_traj", "<i4"), ("ref_t", "<f8"), ("ref_x", "<f8"), ("ref_y", "<f8"),
    ("oth_traj", "<i4"), ("oth_t", "<f8"), ("oth_x", "<f8"), ("oth_y", "<f8"),
    ("flag", "u1"),
])


@njit
def _close(t, x, y, a, b, eps_sp, eps_t):
    if abs(t[a] - t[b]) > eps_t:
        return False
    dx = x[a] - x[b]
    dy = y[a] - y[b]
    return math.sqrt(dx * dx + dy * dy) <= eps_sp


@njit
def _push(out, m, ref, other, flag):
    if m == out.shape[0]:
        grown = np.empty((out.shape[0] * 2, 3), dtype=np.int64)
        grown[:m] = out[:m]
        out = grown
    out[m, 0] = ref
    out[m, 1] = other
    out[m, 2] = flag
    return out, m + 1


@njit
def prev_linear(traj, pos):
    tr = traj[pos]
    k = pos - 1
    while k >= 0:
        if traj[k] == tr:
            return k
        k -= 1
    return -1


@njit
def next_linear(traj, pos, end):
    tr = traj[pos]
    k = pos + 1
    while k < end:
        if traj[k] == tr:
            return k
        k += 1
    return -1


@njit
def find_match_linear(t, x, y, traj, k, anchor, upto, eps_sp, eps_t):
    """Does some point of ``anchor`` at a position <= ``upto`` join ``k``?"""
    j = k - 1
    while j >= 0 and t[k] - t[j] <= eps_t:
        if traj[j] == anchor and _close(t, x, y, k, j, eps_sp, eps_t):
            return True
        j -= 1
    j = k + 1
    while j <= upto and t[j] - t[k] <= eps_t:
        if traj[j] == anchor and _close(t, x, y, k, j, eps_sp, eps_t):
            return True
        j += 1
    return False


@njit
def sweep_point(t, x, y, traj, emit, matched, i, n_ctx, eps_sp, eps_t, out, m):
    j = i - 1
    while j >= n_ctx and t[i] - t[j] <= eps_t:
        if traj[j] != traj[i] and _close(t, x, y, i, j, eps_sp, eps_t):
            matched[i] = True
            matched[j] = True
            if emit[i]:
                out, m = _push(out, m, i, j, 1)
            if emit[j]:
                out, m = _push(out, m, j, i, 1)
            k = prev_linear(traj, j)
            if k >= 0 and emit[i] and not find_match_linear(t, x, y, traj, k, traj[i], i, eps_sp, eps_t):
                out, m = _push(out, m, i, k, 0)
            k = prev_linear(traj, i)
            if k >= 0 and emit[j] and not find_match_linear(t, x, y, traj, k, traj[j], i, eps_sp, eps_t):
                out, m = _push(out, m, j, k, 0)
        j -= 1
    return out, m


@njit
def treat_last_points(t, x, y, traj, emit, matched, n_ctx, n_traj, eps_sp, eps_t, out, m):
    """Forward probe from each trajectory's last matched emitting point."""
    n = len(t)
    last = np.full(n_traj, -1, dtype=np.int64)
    for p in range(n_ctx, n):
        if emit[p] and matched[p]:
            last[traj[p]] = p
    seen = np.empty(n_traj, dtype=np.int64)
    for tr in range(n_traj):
        a = last[tr]
        if a < 0:
            continue
        n_seen = 0
        q = n - 1
        while q >= n_ctx:
            if t[q] - t[a] > eps_t:
                q -= 1
                continue
            if t[a] - t[q] > eps_t:
                break
            if traj[q] != tr and _close(t, x, y, a, q, eps_sp, eps_t):
                dup = False
                for s in range(n_seen):
                    if seen[s] == traj[q]:
                        dup = True
                        break
                if not dup:
                    seen[n_seen] = traj[q]
                    n_seen += 1
                    nxt = next_linear(traj, q, n)
                    if nxt >= 0 and not find_match_linear(t, x, y, traj, nxt, tr, n - 1, eps_sp, eps_t):
                        out, m = _push(out, m, a, nxt, 0)
            q -= 1
    return out, m


@njit
def emit_breaking_points(emit, matched, n_ctx, out, m):
    for p in range(n_ctx, len(emit)):
        if emit[p] and not matched[p]:
            out, m = _push(out, m, p, -1, 1)
    return out, m


@njit
def join_kernel(t, x, y, traj, emit, n_ctx, n_traj, eps_sp, eps_t):
    n = len(t)
    matched = np.zeros(n, dtype=np.bool_)
    out = np.empty((max(16, 2 * n), 3), dtype=np.int64)
    m = 0
    for i in range(n_ctx, n):
        out, m = sweep_point(t, x, y, traj, emit, matched, i, n_ctx, eps_sp, eps_t, out, m)
    out, m = treat_last_points(t, x, y, traj, emit, matched, n_ctx, n_traj, eps_sp, eps_t, out, m)
    out, m = emit_breaking_points(emit, matched, n_ctx, out, m)
    return out[:m]


@dataclass
class SweepBuffer:
    """Flat arrays handed to a kernel."""

    ids: tuple
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    traj: np.ndarray
    emit: np.ndarray
    n_ctx: int

    def __len__(self) -> int:
        return len(self.t)


def dup_mask(part, dup_mode: str) -> np.ndarray:
    if dup_mode == "flag":
        orig = getattr(part, "orig", None)
        if orig is None:
            raise ValueError("flag dup mode needs orig flags on the partition")
        return np.asarray(orig, dtype=bool)
    if dup_mode == "base_range":
        base = getattr(part, "base", None)
        if base is None:
            raise ValueError("base_range dup mode needs a base range")
        t = part.table.t
        return (t >= base.t_start) & (t < base.t_end)
    raise ValueError(f"unknown dup mode {dup_mode!r}")


def make_buffer(part, dup_mode: str) -> SweepBuffer:
    ctx, tab = part.context, part.table
    if len(tab) > 1 and np.any(np.diff(tab.t) < 0):
        raise ValueError(f"corrupt partition {getattr(part, 'index', '?')}: points not sorted by time")
    if len(ctx) and len(tab) and ctx.t[-1] > tab.t[0]:
        raise ValueError("context points must precede the window")
    return SweepBuffer(
        ids=tab.ids or ctx.ids,
        t=np.concatenate([ctx.t, tab.t]),
        x=np.concatenate([ctx.x, tab.x]),
        y=np.concatenate([ctx.y, tab.y]),
        traj=np.concatenate([ctx.traj, tab.traj]).astype(np.int64),
        emit=np.concatenate([np.zeros(len(ctx), dtype=bool), dup_mask(part, dup_mode)]),
        n_ctx=len(ctx),
    )


def to_records(raw: np.ndarray, buf: SweepBuffer) -> np.ndarray:
    rec = np.empty(len(raw), dtype=RECORD_DTYPE)
    ref, oth = raw[:, 0], raw[:, 1]
    rec["ref_traj"] = buf.traj[ref]
    rec["ref_t"] = buf.t[ref]
    rec["ref_x"] = buf.x[ref]
    rec["ref_y"] = buf.y[ref]
    has = oth >= 0
    o = np.where(has, oth, 0)
    rec["oth_traj"] = np.where(has, buf.traj[o], -1)
    rec["oth_t"] = np.where(has, buf.t[o], 0.0)
    rec["oth_x"] = np.where(has, buf.x[o], 0.0)
    rec["oth_y"] = np.where(has, buf.y[o], 0.0)
    rec["flag"] = raw[:, 2]
    return rec


def join_records(part, params: JoinParams, dup_mode: str) -> np.ndarray:
    """Records of one partition as a ``RECORD_DTYPE`` array."""
    buf = make_buffer(part, dup_mode)
    if not len(buf):
        return np.empty(0, dtype=RECORD_DTYPE)
    raw = join_kernel(buf.t, buf.x, buf.y, buf.traj, buf.emit, buf.n_ctx, len(buf.ids),
                      float(params.eps_sp), float(params.eps_t))
    return to_records(raw, buf)


def records_to_pairs(rec: np.ndarray, ids) -> list[PairRecord]:
    out = []
    for r in rec:
        ref = TrajectoryPoint(ids[r["ref_traj"]], float(r["ref_t"]), float(r["ref_x"]), float(r["ref_y"]))
        oth = None
        if r["oth_traj"] >= 0:
            oth = TrajectoryPoint(ids[r["oth_traj"]], float(r["oth_t"]), float(r["oth_x"]), float(r["oth_y"]))
        out.append(PairRecord(ref, oth, bool(r["flag"])))
    return out


def join_partition(part, params: JoinParams, dup_mode: str = "flag") -> list[PairRecord]:
    """Object-level wrapper around :func:`join_records`."""
    return records_to_pairs(join_records(part, params, dup_mode), part.table.ids)


@dataclass
class JoinBuffer:
    """Incremental form of the sweep, one point at a time.

    Mostly useful for stepping through small examples; the kernels above do
    the same work on whole arrays.
    """

    params: JoinParams
    D: list = field(default_factory=list)
    emit: list = field(default_factory=list)
    bp_set: set = field(default_factory=set)
    _codes: dict = field(default_factory=dict)
    _matched: list = field(default_factory=list)

    def _code(self, tid: str) -> int:
        return self._codes.setdefault(tid, len(self._codes))

    def _arrays(self):
        t = np.array([p.t for p in self.D], dtype=np.float64)
        x = np.array([p.x for p in self.D], dtype=np.float64)
        y = np.array([p.y for p in self.D], dtype=np.float64)
        traj = np.array([self._code(p.traj_id) for p in self.D], dtype=np.int64)
        return t, x, y, traj

    def _records(self, raw) -> list[PairRecord]:
        return [
            PairRecord(self.D[a], None if b < 0 else self.D[b], bool(f)) for a, b, f in raw
        ]

    def insert(self, p: TrajectoryPoint, dup: bool | None = None) -> list[PairRecord]:
        """Append ``p`` and run one sweep step; ``dup`` defaults to ``p.orig_flag``."""
        if self.D and p.t < self.D[-1].t:
            raise ValueError("points must arrive in time order")
        self.D.append(p)
        self.emit.append(p.orig_flag if dup is None else dup)
        self._matched.append(False)
        return plane_sweep_step(self, len(self.D) - 1, self.params)

    @property
    def last_jp_per_traj(self) -> dict:
        last = {}
        for i, p in enumerate(self.D):
            if self._matched[i] and self.emit[i]:
                last[p.traj_id] = i
        return last

    def finish(self) -> list[PairRecord]:
        """End-of-stream fix-up plus breaking point emission."""
        if not self.D:
            return []
        t, x, y, traj = self._arrays()
        emit = np.array(self.emit, dtype=bool)
        matched = np.array(self._matched, dtype=bool)
        out = np.empty((16, 3), dtype=np.int64)
        out, m = treat_last_points(t, x, y, traj, emit, matched, 0, len(self._codes),
                                   float(self.params.eps_sp), float(self.params.eps_t), out, 0)
        out, m = emit_breaking_points(emit, matched, 0, out, m)
        return self._records(out[:m])


def plane_sweep_step(buf: JoinBuffer, i: int, params: JoinParams) -> list[PairRecord]:
    t, x, y, traj = buf._arrays()
    emit = np.array(buf.emit, dtype=bool)
    matched = np.array(buf._matched, dtype=bool)
    out = np.empty((16, 3), dtype=np.int64)
    out, m = sweep_point(t, x, y, traj, emit, matched, i, 0, float(params.eps_sp),
                         float(params.eps_t), out, 0)
    buf._matched = matched.tolist()
    for k in range(len(buf.D)):
        if matched[k]:
            buf.bp_set.discard(k)
    if not matched[i]:
        buf.bp_set.add(i)
    return buf._records(out[:m])


def find_match(buf: JoinBuffer, anchor_traj: str, k: int, params: JoinParams) -> bool:
    if anchor_traj not in buf._codes:
        return False
    t, x, y, traj = buf._arrays()
    return bool(find_match_linear(t, x, y, traj, k, buf._codes[anchor_traj], len(buf.D) - 1,
                                  float(params.eps_sp), float(params.eps_t)))
