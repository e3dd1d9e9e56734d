from collections import Counter

import numpy as np
import pytest

from subtrajoin.generate import random_instance
from subtrajoin.join import JoinBuffer, find_match, join_partition, join_records
from subtrajoin.model import JoinParams, PointTable, TrajectoryPoint, fixture_t1, fixture_t2
from subtrajoin.oracle import classify_point_pairs
from subtrajoin.partitioning import uniform_temporal_partition

P = TrajectoryPoint


def key(p):
    return None if p is None else (p.traj_id, p.t)


def as_set(records):
    return {(key(r.ref_point), key(r.other_point), r.flag) for r in records}


def one_partition(trs, params):
    (part,) = uniform_temporal_partition(PointTable.from_trajectories(trs), 1, params)
    return part


def test_t1_records():
    trs, params = fixture_t1()
    got = as_set(join_partition(one_partition(trs, params), params))
    want = {(("r", i), ("s", i), True) for i in range(5)} | {(("s", i), ("r", i), True) for i in range(5)}
    want.add((("u", 2), None, True))
    assert got == want


def test_t2_records():
    trs, params = fixture_t2()
    recs = join_partition(one_partition(trs, params), params)
    got = as_set(recs)
    assert {r for r in got if r[1] is None} == {(("r", 3), None, True), (("s", 3), None, True)}
    jp = {r for r in got if r[1] is not None and r[2]}
    assert jp == {(("r", i), ("s", i), True) for i in (0, 1, 2, 4, 5, 6)} | \
                 {(("s", i), ("r", i), True) for i in (0, 1, 2, 4, 5, 6)}


def test_empty_partition():
    params = JoinParams(1, 1, 1)
    tab = PointTable.from_columns(["a", "a"], [0.0, 10.0], [0.0, 0.0], [0.0, 0.0])
    parts = uniform_temporal_partition(tab, 3, params)
    assert len(parts[1]) == 0
    assert len(join_records(parts[1], params, "flag")) == 0
    assert len(join_records(parts[0], params, "flag")) == 1


def walkthrough_buffer():
    buf = JoinBuffer(JoinParams(1.0, 0.5, 0))
    for p in [P("q", 1, 0, 0), P("r", 1, 0, 0.5), P("p", 1, 5, 5), P("p", 2, 0, 0.2), P("r", 2.1, 0, 0.4)]:
        buf.insert(p)
    return buf


def test_sweep_walkthrough_on_q2():
    buf = walkthrough_buffer()
    recs = buf.insert(P("q", 2.2, 0, 0))
    from_q2 = [(key(r.other_point), r.flag) for r in recs if r.ref_point.traj_id == "q"]
    assert from_q2 == [(("r", 2.1), True), (("p", 2), True), (("p", 1), False)]
    # mirrors pass their own duplicate check
    assert (("r", 2.1), ("q", 2.2), True) in as_set(recs)


def test_find_match_previous_point_hits():
    buf = walkthrough_buffer()
    buf.insert(P("q", 2.2, 0, 0))
    # r1 has q1 nearby, so its probe reports nothing
    assert find_match(buf, "q", 1, buf.params)
    assert not find_match(buf, "q", 2, buf.params)
    assert not find_match(buf, "zz", 1, buf.params)


def test_lonely_point_enters_bp_set():
    buf = JoinBuffer(JoinParams(1.0, 0.5, 0))
    assert buf.insert(P("a", 0, 0, 0)) == []
    assert buf.bp_set == {0}
    buf.insert(P("a", 0.1, 0, 0))
    assert buf.bp_set == {0, 1}
    assert all(r.other_point is None for r in buf.finish())


def test_insert_out_of_order():
    buf = JoinBuffer(JoinParams(1.0, 0.5, 0))
    buf.insert(P("a", 1, 0, 0))
    with pytest.raises(ValueError):
        buf.insert(P("b", 0, 0, 0))


def test_unsorted_partition_is_rejected():
    trs, params = fixture_t1()
    part = one_partition(trs, params)
    part.table.t[[0, -1]] = part.table.t[[-1, 0]]
    with pytest.raises(ValueError, match="not sorted"):
        join_records(part, params, "flag")


@pytest.mark.parametrize("n_parts", [1, 2, 3, 5])
def test_jp_and_bp_exact_over_partitions(n_parts):
    rng = np.random.default_rng(100 + n_parts)
    for _ in range(25):
        trs, params = random_instance(rng)
        tab = PointTable.from_trajectories(trs)
        recs = []
        for part in uniform_temporal_partition(tab, n_parts, params):
            recs += join_partition(part, params)
        c = classify_point_pairs(trs, params)
        counts = Counter((key(r.ref_point), key(r.other_point), r.flag) for r in recs)
        assert max(counts.values(), default=1) == 1
        jp = {(a, b) for a, b, f in counts if f and b is not None}
        assert jp == {(key(p), key(q)) for p, q in c.jp}
        assert {a for a, b, f in counts if b is None} == {key(p) for p in c.bp}


def test_false_records_only_name_matched_partners():
    rng = np.random.default_rng(3)
    for _ in range(20):
        trs, params = random_instance(rng)
        recs = join_partition(one_partition(trs, params), params)
        partners = {(key(r.ref_point), r.other_point.traj_id) for r in recs if r.flag and r.other_point}
        for r in recs:
            if not r.flag:
                assert r.ref_point.traj_id != r.other_point.traj_id
                assert (key(r.ref_point), r.other_point.traj_id) in partners
