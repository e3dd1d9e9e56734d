import numpy as np
import pytest

from subtrajoin.engine import (
    PipelineConfig,
    RunMetrics,
    collect_metrics,
    count_duplicates,
    prepare_workdir,
    run_pipeline,
    run_tasks,
    shuffle_group,
)
from subtrajoin.generate import GenSpec, generate_dataset
from subtrajoin.join import RECORD_DTYPE, join_records
from subtrajoin.model import JoinParams, MatchPair, PointTable, Subtrajectory, fixture_t1
from subtrajoin.partitioning import uniform_temporal_partition


@pytest.fixture
def t1(tmp_path):
    trs, params = fixture_t1()
    tab = PointTable.from_trajectories(trs)
    prepare_workdir(tab, tmp_path / "wd", M=2, sample_rate=1.0)
    return tab, params, tmp_path / "wd"


@pytest.mark.parametrize("variant", ["dtjb", "dtjr", "dtji"])
@pytest.mark.parametrize("workers", [1, 4])
def test_t1_all_variants(t1, variant, workers):
    tab, params, wd = t1
    result, m = run_pipeline(tab, PipelineConfig(variant, params, workers=workers, workdir=wd))
    assert result == {MatchPair.of(Subtrajectory("r", 0, 4), Subtrajectory("s", 0, 4))}
    assert m.matches == 1 and m.duplicate_records == 0


def test_shuffle_groups_t1():
    trs, params = fixture_t1()
    (part,) = uniform_temporal_partition(PointTable.from_trajectories(trs), 1, params)
    rec = join_records(part, params, "flag")
    groups, nbytes = shuffle_group([rec[::-1], rec[:0]])
    assert len(groups) == 3 and nbytes == rec.nbytes
    r = groups[0]
    assert (r["ref_traj"] == 0).all() and np.all(np.diff(r["ref_t"]) >= 0)


def test_shuffle_tiebreak_and_singleton():
    rec = np.zeros(2, dtype=RECORD_DTYPE)
    rec["oth_traj"] = [2, 1]
    groups, _ = shuffle_group([rec])
    assert groups[0]["oth_traj"].tolist() == [1, 2]
    groups, _ = shuffle_group([rec[:1]])
    assert len(groups) == 1 and len(groups[0]) == 1
    assert shuffle_group([]) == ([], 0)


def test_count_duplicates():
    rec = np.zeros(3, dtype=RECORD_DTYPE)
    rec["ref_t"] = [0, 0, 1]
    assert count_duplicates([rec[:2], rec[2:]]) == 1


def test_input_std():
    assert collect_metrics([10, 10, 10, 10]).input_std == 0
    assert collect_metrics([0, 20]).input_std == 10
    assert RunMetrics().input_std == 0


def test_empty_dataset():
    result, m = run_pipeline(PointTable.empty(), PipelineConfig("dtjb", JoinParams(1, 1, 1)))
    assert result == set()
    assert m.records_join == 0 and m.matches == 0 and m.task_inputs == []


def test_missing_artifacts(tmp_path):
    params = JoinParams(1, 1, 1)
    with pytest.raises(FileNotFoundError, match="repartition"):
        run_pipeline(None, PipelineConfig("dtjr", params, workdir=tmp_path))
    with pytest.raises(ValueError):
        run_pipeline(None, PipelineConfig("dtjb", params))
    tab = PointTable.from_trajectories(fixture_t1()[0])
    prepare_workdir(tab, tmp_path, M=2, quadtree_pct=None)
    with pytest.raises(ValueError, match="QuadTree"):
        run_pipeline(None, PipelineConfig("dtji", params, workdir=tmp_path))


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig("spark", JoinParams(1, 1, 1))
    with pytest.raises(ValueError):
        PipelineConfig("dtjr", JoinParams(1, 1, 1), workers=0)


def test_task_failure_names_task():
    def boom(i):
        if i == 3:
            raise KeyError("bad")
        return i

    with pytest.raises(RuntimeError, match="task 3"):
        run_tasks(boom, list(range(5)), 2)
    assert run_tasks(lambda i: i * i, list(range(5)), 3) == [0, 1, 4, 9, 16]


def test_uniform_split_sizes_balanced(tmp_path):
    rng = np.random.default_rng(0)
    n = 10_000
    tab = PointTable.from_columns([f"q{i % 100:02d}" for i in range(n)], rng.permutation(n) + rng.uniform(0, 0.5, n),
                                  rng.uniform(0, 1, n), rng.uniform(0, 1, n))
    prepare_workdir(tab, tmp_path, M=8, sample_rate=1.0, quadtree_pct=None)
    _, m = run_pipeline(None, PipelineConfig("dtjr", JoinParams(0.01, 1.0, 5.0), workdir=tmp_path))
    assert len(m.task_inputs) == 8
    assert all(abs(c - 1250) <= 125 for c in m.task_inputs)


@pytest.fixture(scope="module")
def grouped(tmp_path_factory):
    spec = GenSpec(n_traj=30, points_per_traj=60, duration=600, extent=200, speed=0.5,
                   group_size=3, n_groups=4, spread=1.0, seed=4)
    tab = generate_dataset(spec)
    wd = tmp_path_factory.mktemp("grouped")
    prepare_workdir(tab, wd, M=6, workers=2, seed=1)
    return tab, wd


def test_worker_and_partition_independence(grouped):
    tab, wd = grouped
    params = JoinParams(2.0, 15.0, 60.0)
    results = set()
    for w in (1, 2, 8):
        for v in ("dtjb", "dtjr", "dtji"):
            result, _ = run_pipeline(tab, PipelineConfig(v, params, workers=w, n_parts=w + 1, workdir=wd))
            results.add(frozenset(result))
    assert len(results) == 1
    assert len(next(iter(results))) >= 4


def test_dtjb_shuffle_exceeds_input_on_dense_data(grouped):
    tab, _ = grouped
    _, m = run_pipeline(tab, PipelineConfig("dtjb", JoinParams(60.0, 30.0, 60.0), workers=2))
    assert m.bytes_shuffled >= m.bytes_input


def test_ablation_reaches_refine(t1):
    tab, params, wd = t1
    cfg = PipelineConfig("dtjr", params, workdir=wd, ablation={"use_false_list": False})
    result, _ = run_pipeline(tab, cfg)
    assert len(result) == 1


def test_metrics_files(t1, tmp_path):
    tab, params, wd = t1
    _, m = run_pipeline(tab, PipelineConfig("dtji", params, workdir=wd))
    m.write(tmp_path / "m.txt")
    m.write_task_csv(tmp_path / "tasks.csv")
    kv = dict(line.split("=", 1) for line in (tmp_path / "m.txt").read_text().splitlines())
    assert kv["variant"] == "dtji" and int(kv["tasks"]) == 2
    assert int(kv["index_entries"]) > 0
    assert (tmp_path / "tasks.csv").read_text().startswith("task,input_points\n")
