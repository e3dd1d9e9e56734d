import numpy as np
import pytest

from subtrajoin.generate import random_instance
from subtrajoin.join import join_partition
from subtrajoin.model import JoinParams, MatchPair, PairRecord, PointTable, Subtrajectory, Trajectory, TrajectoryPoint, \
    fixture_t1
from subtrajoin.oracle import oracle_join
from subtrajoin.partitioning import uniform_temporal_partition
from subtrajoin.refine import build_lists, closure_fixpoints, refine_trajectory, window_sweep

P = TrajectoryPoint


def records_by_ref(trs, params):
    (part,) = uniform_temporal_partition(PointTable.from_trajectories(trs), 1, params)
    out = {}
    for r in join_partition(part, params):
        out.setdefault(r.ref_point.traj_id, []).append(r)
    for recs in out.values():
        recs.sort(key=lambda r: (r.ref_point.t, "" if r.other_point is None else r.other_point.traj_id))
    return out


def refine_all(trs, params, **ablation):
    out = set()
    for recs in records_by_ref(trs, params).values():
        out |= refine_trajectory(recs, params, **ablation)
    return out


def test_t1_reference_r():
    trs, params = fixture_t1()
    got = refine_trajectory(records_by_ref(trs, params)["r"], params)
    assert got == {MatchPair.of(Subtrajectory("r", 0, 4), Subtrajectory("s", 0, 4))}


def displaced_partner():
    # q follows r except q6, which jumps away
    t = np.arange(1.0, 8.0)
    r = Trajectory.from_arrays("r", t, np.zeros(7), np.zeros(7))
    qx = np.zeros(7)
    qx[5] = 50.0
    q = Trajectory.from_arrays("q", t, qx, np.full(7, 0.5))
    return [q, r], JoinParams(1.0, 1.0, 4.0)


def test_false_list_cuts_the_partner():
    trs, params = displaced_partner()
    recs = records_by_ref(trs, params)["r"]
    assert any(not x.flag and x.other_point.t == 6.0 for x in recs)
    want = {MatchPair.of(Subtrajectory("r", 1, 6), Subtrajectory("q", 1, 5))}
    assert refine_trajectory(recs, params) == want
    assert refine_all(trs, params) == oracle_join(trs, params) == want
    # without the false list q's run bridges the jump
    wrong = refine_trajectory(recs, params, use_false_list=False)
    assert wrong == {MatchPair.of(Subtrajectory("r", 1, 7), Subtrajectory("q", 1, 7))}


def test_only_breaking_points():
    recs = [PairRecord(P("a", t, 0, 0), None, True) for t in (0.0, 1.0, 2.0)]
    assert refine_trajectory(recs, JoinParams(1, 1, 0)) == set()
    assert refine_trajectory([], JoinParams(1, 1, 0)) == set()


def test_unsorted_stream_rejected():
    recs = [PairRecord(P("a", 2.0, 0, 0), None, True), PairRecord(P("a", 1.0, 0, 0), None, True)]
    with pytest.raises(ValueError, match="sorted"):
        refine_trajectory(recs, JoinParams(1, 1, 0))
    with pytest.raises(ValueError, match="sorted"):
        build_lists(recs)


def test_build_lists_orders_partners():
    a0 = P("a", 0, 0, 0)
    recs = [PairRecord(a0, P("c", 0, 0, 0), True), PairRecord(a0, P("b", 0.5, 0, 0), True),
            PairRecord(a0, P("b", 0.2, 0, 0), False)]
    ml, fl = build_lists(recs)
    assert [q.traj_id for q in ml.entries[0][1]] == ["b", "c"]
    assert fl.points("b") == {P("b", 0.2, 0, 0)}


def test_window_sweep_lifespan_filter():
    t = np.arange(5.0)
    ranges = [(0, 4, 0, 4), (0, 1, 0, 1)]
    assert window_sweep(t, t, ranges, JoinParams(1, 0.5, 3)) == [(0, 4, 0, 4)]
    # 2*eps_t >= delta_t: a single instant qualifies
    assert window_sweep(t, t, [(2, 2, 2, 2)], JoinParams(1, 2, 3)) == [(2, 2, 2, 2)]


def test_closure_fixpoints_diagonal():
    rows = np.array([0, 1])
    cols = np.array([0, 1])
    assert closure_fixpoints(rows, cols, 0, 1, 0, 1) == [(0, 1, 0, 1)]
    # a hole in the middle splits the range
    rows, cols = np.array([0, 2]), np.array([0, 2])
    assert sorted(closure_fixpoints(rows, cols, 0, 2, 0, 2)) == [(0, 0, 0, 0), (2, 2, 2, 2)]


def test_symmetric_consistency_and_oracle():
    rng = np.random.default_rng(21)
    for _ in range(40):
        trs, params = random_instance(rng)
        by_ref = records_by_ref(trs, params)
        got = {tid: refine_trajectory(recs, params) for tid, recs in by_ref.items()}
        for tid, pairs in got.items():
            for m in pairs:
                other = m.sub_s.traj_id if m.sub_r.traj_id == tid else m.sub_r.traj_id
                assert m in got[other]
        assert set().union(*got.values()) == oracle_join(trs, params)
