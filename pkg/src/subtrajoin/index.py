"""QuadTree space partitioning plus the per-split SpI/TrI indexes and the
indexed sweep.

The tree holds no points, only the leaf layout learned from a sample. Every
buffered point is tagged with its own leaf (``cell``) and listed in SpI under
each leaf whose region, grown by ``eps_sp``, contains it. Two points within
``eps_sp`` of each other therefore always meet in the querying point's leaf
list. TrI lists each trajectory's buffer positions in time order.

Leaf regions touching the root border are treated as unbounded on that side,
so points outside the sampled bounding box still land in the nearest leaf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .join import RECORD_DTYPE, SweepBuffer, _close, _push, emit_breaking_points, to_records
from .model import JoinParams, PairRecord

MAX_DEPTH = 20


@dataclass
class QuadTree:
    """Flat node arrays. ``first_child[n]`` is -1 for leaves; the four children of
    a node sit in consecutive slots (SW, SE, NW, NE). Leaf ids follow
    depth-first order."""

    box: np.ndarray  # (n_nodes, 4) x0, y0, x1, y1
    first_child: np.ndarray
    leaf_id: np.ndarray
    depth: np.ndarray
    max_points_per_cell: int

    @property
    def n_leaves(self) -> int:
        return int((self.leaf_id >= 0).sum())

    @property
    def height(self) -> int:
        return int(self.depth.max())

    @property
    def root(self) -> tuple:
        return tuple(float(v) for v in self.box[0])

    def effective_boxes(self) -> np.ndarray:
        """Node boxes with sides on the root border pushed out to infinity."""
        eff = self.box.copy()
        x0, y0, x1, y1 = self.box[0]
        eff[self.box[:, 0] <= x0, 0] = -np.inf
        eff[self.box[:, 1] <= y0, 1] = -np.inf
        eff[self.box[:, 2] >= x1, 2] = np.inf
        eff[self.box[:, 3] >= y1, 3] = np.inf
        return eff

    def leaf_boxes(self) -> np.ndarray:
        leaves = np.flatnonzero(self.leaf_id >= 0)
        out = np.empty((len(leaves), 4))
        out[self.leaf_id[leaves]] = self.box[leaves]
        return out

    def locate(self, x, y) -> np.ndarray:
        """Leaf id of each point (descending by midpoints)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return _locate(self.box, self.first_child, self.leaf_id, x, y)

    def to_json(self) -> dict:
        return {
            "max_points_per_cell": self.max_points_per_cell,
            "nodes": [
                [*map(float, self.box[i]), int(self.leaf_id[i]), int(self.first_child[i]), int(self.depth[i])]
                for i in range(len(self.box))
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QuadTree":
        nodes = np.array(obj["nodes"], dtype=np.float64).reshape(-1, 7)
        return cls(
            box=nodes[:, :4].copy(),
            leaf_id=nodes[:, 4].astype(np.int64),
            first_child=nodes[:, 5].astype(np.int64),
            depth=nodes[:, 6].astype(np.int64),
            max_points_per_cell=int(obj["max_points_per_cell"]),
        )


def build_quadtree(x, y, max_points_per_cell: int, max_depth: int = MAX_DEPTH) -> QuadTree:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not len(x):
        raise ValueError("cannot build a QuadTree from an empty sample")
    if max_points_per_cell < 1:
        raise ValueError("max_points_per_cell must be >= 1")
    boxes, first, leaf, depth = [], [], [], []
    n_leaves = 0

    def add(box, d):
        boxes.append(box)
        first.append(-1)
        leaf.append(-1)
        depth.append(d)
        return len(boxes) - 1

    # the four children of a node sit in consecutive slots (SW, SE, NW, NE)
    def fill(slot, idx):
        nonlocal n_leaves
        x0, y0, x1, y1 = boxes[slot]
        d = depth[slot]
        flat = x1 <= x0 and y1 <= y0
        if len(idx) <= max_points_per_cell or d >= max_depth or flat:
            leaf[slot] = n_leaves
            n_leaves += 1
            return
        mx, my = (x0 + x1) / 2, (y0 + y1) / 2
        east = x[idx] >= mx
        north = y[idx] >= my
        quads = [
            ((x0, y0, mx, my), idx[~east & ~north]),
            ((mx, y0, x1, my), idx[east & ~north]),
            ((x0, my, mx, y1), idx[~east & north]),
            ((mx, my, x1, y1), idx[east & north]),
        ]
        slots = [add(qbox, d + 1) for qbox, _ in quads]
        first[slot] = slots[0]
        for c, (_, qidx) in zip(slots, quads):
            fill(c, qidx)

    fill(add((float(x.min()), float(y.min()), float(x.max()), float(y.max())), 0), np.arange(len(x)))
    return QuadTree(
        box=np.array(boxes, dtype=np.float64),
        first_child=np.array(first, dtype=np.int64),
        leaf_id=np.array(leaf, dtype=np.int64),
        depth=np.array(depth, dtype=np.int64),
        max_points_per_cell=max_points_per_cell,
    )


def threshold_from_percent(pct: float, sample_size: int) -> int:
    """Max points per cell given as a percentage of the sample population."""
    return max(1, math.floor(pct / 100.0 * sample_size))


@njit
def _locate(box, first_child, leaf_id, x, y):
    out = np.empty(len(x), dtype=np.int32)
    for i in range(len(x)):
        nd = 0
        while first_child[nd] >= 0:
            mx = (box[nd, 0] + box[nd, 2]) / 2
            my = (box[nd, 1] + box[nd, 3]) / 2
            c = 0
            if x[i] >= mx:
                c += 1
            if y[i] >= my:
                c += 2
            nd = first_child[nd] + c
        out[i] = leaf_id[nd]
    return out


@njit
def _spi_entries(eff, first_child, leaf_id, x, y, n_ctx, e):
    """(leaf, position) for every leaf whose grown region holds the point."""
    n = len(x)
    cap = max(16, 2 * n)
    leaves = np.empty(cap, dtype=np.int32)
    pos = np.empty(cap, dtype=np.int32)
    m = 0
    stack = np.empty(4 * MAX_DEPTH + 8, dtype=np.int64)
    for i in range(n_ctx, n):
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            nd = stack[top]
            if (x[i] < eff[nd, 0] - e or x[i] > eff[nd, 2] + e
                    or y[i] < eff[nd, 1] - e or y[i] > eff[nd, 3] + e):
                continue
            if first_child[nd] < 0:
                if m == cap:
                    cap *= 2
                    nl = np.empty(cap, dtype=np.int32)
                    npos = np.empty(cap, dtype=np.int32)
                    nl[:m] = leaves[:m]
                    npos[:m] = pos[:m]
                    leaves, pos = nl, npos
                leaves[m] = leaf_id[nd]
                pos[m] = i
                m += 1
            else:
                for c in range(4):
                    stack[top] = first_child[nd] + c
                    top += 1
    return leaves[:m], pos[:m]


def _csr(keys: np.ndarray, vals: np.ndarray, n_keys: int) -> tuple[np.ndarray, np.ndarray]:
    # stable, so values keep their (time) order within each key
    order = np.argsort(keys, kind="stable")
    ptr = np.zeros(n_keys + 1, dtype=np.int32)
    np.cumsum(np.bincount(keys, minlength=n_keys), out=ptr[1:])
    return ptr, vals[order].astype(np.int32)


@dataclass
class IndexBundle:
    cell: np.ndarray
    spi_ptr: np.ndarray
    spi_pos: np.ndarray
    tri_ptr: np.ndarray
    tri_pos: np.ndarray

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.spi_ptr, self.spi_pos, self.tri_ptr, self.tri_pos))

    @property
    def entries(self) -> int:
        return len(self.spi_pos) + len(self.tri_pos)

    def spi(self, leaf: int) -> np.ndarray:
        return self.spi_pos[self.spi_ptr[leaf]:self.spi_ptr[leaf + 1]]

    def tri(self, code: int) -> np.ndarray:
        return self.tri_pos[self.tri_ptr[code]:self.tri_ptr[code + 1]]


def data_nbytes(buf: SweepBuffer) -> int:
    """Bytes of the buffer itself: t, x, y as f8 plus trajectory and cell as i4."""
    return len(buf) * (3 * 8 + 2 * 4)


def build_index(buf: SweepBuffer, tree: QuadTree, eps_sp: float) -> IndexBundle:
    cell = tree.locate(buf.x, buf.y)
    # a hair of slack so the grown-region test never loses a boundary partner
    e = eps_sp * (1 + 1e-9) + 1e-12
    leaves, pos = _spi_entries(tree.effective_boxes(), tree.first_child, tree.leaf_id,
                               buf.x, buf.y, buf.n_ctx, e)
    spi_ptr, spi_pos = _csr(leaves, pos, tree.n_leaves)
    n_traj = max(len(buf.ids), int(buf.traj.max()) + 1 if len(buf) else 0)
    tri_ptr, tri_pos = _csr(buf.traj, np.arange(len(buf), dtype=np.int64), n_traj)
    return IndexBundle(cell, spi_ptr, spi_pos, tri_ptr, tri_pos)


@njit
def tri_prev(tri_ptr, tri_pos, code, pos):
    a = tri_ptr[code]
    b = tri_ptr[code + 1]
    r = a + np.searchsorted(tri_pos[a:b], pos)
    if r > a:
        return tri_pos[r - 1]
    return -1


@njit
def tri_next(tri_ptr, tri_pos, code, pos, end):
    a = tri_ptr[code]
    b = tri_ptr[code + 1]
    r = a + np.searchsorted(tri_pos[a:b], pos, side="right")
    if r < b and tri_pos[r] < end:
        return tri_pos[r]
    return -1


@njit
def find_match_tri(t, x, y, tri_ptr, tri_pos, k, anchor, upto, eps_sp, eps_t):
    a = tri_ptr[anchor]
    b = tri_ptr[anchor + 1]
    lo, hi = a, b
    target = t[k] - eps_t
    while lo < hi:
        mid = (lo + hi) // 2
        if t[tri_pos[mid]] < target:
            lo = mid + 1
        else:
            hi = mid
    # step back over entries the subtraction may have rounded away
    while lo > a and t[k] - t[tri_pos[lo - 1]] <= eps_t:
        lo -= 1
    r = lo
    while r < b:
        j = tri_pos[r]
        if j > upto or t[j] - t[k] > eps_t:
            break
        if j != k and _close(t, x, y, k, j, eps_sp, eps_t):
            return True
        r += 1
    return False


@njit
def indexed_join_kernel(t, x, y, traj, emit, cell, n_ctx, n_traj, spi_ptr, spi_pos,
                        tri_ptr, tri_pos, eps_sp, eps_t):
    n = len(t)
    matched = np.zeros(n, dtype=np.bool_)
    out = np.empty((max(16, 2 * n), 3), dtype=np.int64)
    m = 0
    for i in range(n_ctx, n):
        a = spi_ptr[cell[i]]
        b = spi_ptr[cell[i] + 1]
        r = a + np.searchsorted(spi_pos[a:b], i) - 1
        while r >= a:
            j = spi_pos[r]
            if t[i] - t[j] > eps_t:
                break
            if traj[j] != traj[i] and _close(t, x, y, i, j, eps_sp, eps_t):
                matched[i] = True
                matched[j] = True
                if emit[i]:
                    out, m = _push(out, m, i, j, 1)
                if emit[j]:
                    out, m = _push(out, m, j, i, 1)
                k = tri_prev(tri_ptr, tri_pos, traj[j], j)
                if k >= 0 and emit[i] and not find_match_tri(t, x, y, tri_ptr, tri_pos, k, traj[i], i, eps_sp, eps_t):
                    out, m = _push(out, m, i, k, 0)
                k = tri_prev(tri_ptr, tri_pos, traj[i], i)
                if k >= 0 and emit[j] and not find_match_tri(t, x, y, tri_ptr, tri_pos, k, traj[j], i, eps_sp, eps_t):
                    out, m = _push(out, m, j, k, 0)
            r -= 1

    # end-of-buffer forward probes, scanning the last point's own leaf list
    last = np.full(n_traj, -1, dtype=np.int64)
    for p in range(n_ctx, n):
        if emit[p] and matched[p]:
            last[traj[p]] = p
    seen = np.empty(n_traj, dtype=np.int64)
    for tr in range(n_traj):
        p = last[tr]
        if p < 0:
            continue
        n_seen = 0
        a = spi_ptr[cell[p]]
        b = spi_ptr[cell[p] + 1]
        r = b - 1
        while r >= a:
            q = spi_pos[r]
            if t[q] - t[p] > eps_t:
                r -= 1
                continue
            if t[p] - t[q] > eps_t:
                break
            if traj[q] != tr and _close(t, x, y, p, q, eps_sp, eps_t):
                dup = False
                for s in range(n_seen):
                    if seen[s] == traj[q]:
                        dup = True
                        break
                if not dup:
                    seen[n_seen] = traj[q]
                    n_seen += 1
                    nxt = tri_next(tri_ptr, tri_pos, traj[q], q, n)
                    if nxt >= 0 and not find_match_tri(t, x, y, tri_ptr, tri_pos, nxt, tr, n - 1, eps_sp, eps_t):
                        out, m = _push(out, m, p, nxt, 0)
            r -= 1
    out, m = emit_breaking_points(emit, matched, n_ctx, out, m)
    return out[:m]


def run_indexed(buf: SweepBuffer, idx: IndexBundle, params: JoinParams) -> np.ndarray:
    if not len(buf):
        return np.empty(0, dtype=RECORD_DTYPE)
    raw = indexed_join_kernel(
        buf.t, buf.x, buf.y, buf.traj, buf.emit, idx.cell, buf.n_ctx, len(idx.tri_ptr) - 1,
        idx.spi_ptr, idx.spi_pos, idx.tri_ptr, idx.tri_pos, float(params.eps_sp), float(params.eps_t),
    )
    return to_records(raw, buf)


def join_records_indexed(split, tree: QuadTree, params: JoinParams, dup_mode: str = "base_range") -> np.ndarray:
    from .join import make_buffer

    buf = make_buffer(split, dup_mode)
    if not len(buf):
        return np.empty(0, dtype=RECORD_DTYPE)
    return run_indexed(buf, build_index(buf, tree, params.eps_sp), params)


def join_partition_indexed(split, tree: QuadTree, params: JoinParams, dup_mode: str = "base_range") -> list[PairRecord]:
    from .join import records_to_pairs

    return records_to_pairs(join_records_indexed(split, tree, params, dup_mode), split.table.ids)


def spi_candidates(idx: IndexBundle, buf: SweepBuffer, i: int, eps_t: float):
    """Positions before ``i`` in ``i``'s leaf list, newest first, within ``eps_t``."""
    lst = idx.spi(int(idx.cell[i]))
    r = int(np.searchsorted(lst, i)) - 1
    while r >= 0:
        j = int(lst[r])
        if buf.t[i] - buf.t[j] > eps_t:
            return
        yield j
        r -= 1


def tri_prev_point(idx: IndexBundle, code: int, pos: int) -> int | None:
    if not 0 <= code < len(idx.tri_ptr) - 1:
        raise KeyError(f"unknown trajectory code {code}")
    k = int(tri_prev(idx.tri_ptr, idx.tri_pos, code, pos))
    return None if k < 0 else k


def find_match_indexed(idx: IndexBundle, buf: SweepBuffer, anchor: int, k: int, params: JoinParams,
                       upto: int | None = None) -> bool:
    upto = len(buf) - 1 if upto is None else upto
    if not 0 <= anchor < len(idx.tri_ptr) - 1:
        return False
    return bool(find_match_tri(buf.t, buf.x, buf.y, idx.tri_ptr, idx.tri_pos, k, anchor, upto,
                               float(params.eps_sp), float(params.eps_t)))
