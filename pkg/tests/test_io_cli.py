import json

import numpy as np
import pytest

from subtrajoin import io
from subtrajoin.cli import main
from subtrajoin.engine import prepare_workdir
from subtrajoin.generate import GenSpec, generate_dataset
from subtrajoin.model import JoinParams, MatchPair, PointTable, Subtrajectory, fixture_t1
from subtrajoin.oracle import oracle_join


def write(path, text):
    path.write_text(text)
    return path


def test_parse_small_csv(tmp_path):
    p = write(tmp_path / "a.csv", "traj_id,t,x,y\na,0,0,0\nb,0,1,1\na,1,0,1\nb,2,1,2\n")
    tab = io.parse_dataset(p)
    assert len(tab) == 4 and tab.n_traj == 2


@pytest.mark.parametrize("body,msg", [
    ("a,zero,0,0\n", ":2:"),
    ("a,0,0,0\na,1,0\n", ":3:"),
    ("a,0,nan,0\n", ":2: non-finite"),
    ("a,0,0,0\na,0,1,1\n", "'a'"),
])
def test_parse_errors(tmp_path, body, msg):
    p = write(tmp_path / "bad.csv", "traj_id,t,x,y\n" + body)
    with pytest.raises(ValueError, match=msg):
        io.parse_dataset(p)


def test_bad_header(tmp_path):
    with pytest.raises(ValueError, match=":1:"):
        io.read_csv(write(tmp_path / "h.csv", "id,t,x,y\n"))


def test_generate_round_trip_and_determinism(tmp_path):
    spec = GenSpec(n_traj=12, points_per_traj=30, seed=5, group_size=3, n_groups=2)
    a, b = generate_dataset(spec), generate_dataset(spec)
    io.write_csv(a, tmp_path / "a.csv")
    io.write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = io.read_csv(tmp_path / "a.csv")
    assert back.ids == a.ids
    for col in ("traj", "t", "x", "y"):
        assert np.array_equal(getattr(back, col), getattr(a, col))


def test_generator_skew():
    tab = generate_dataset(GenSpec(n_traj=20, points_per_traj=200, duration=1000, skew=0.9, seed=1))
    assert np.mean(tab.t < 100) >= 0.9
    assert tab.t.min() == 0 and tab.t.max() == 1000


def test_generator_groups_produce_matches():
    # slow leader: it drifts far less than eps_sp within eps_t
    spec = GenSpec(n_traj=8, points_per_traj=40, duration=400, extent=500, speed=0.05, group_size=3,
                   n_groups=1, group_fraction=0.5, spread=1.0, seed=2)
    tab = generate_dataset(spec)
    got = oracle_join(tab.trajectories(), JoinParams(1.0, 10.0, 40.0))
    pairs = {(m.sub_r.traj_id, m.sub_s.traj_id) for m in got}
    assert len(pairs) >= 3


def test_generator_rejects_contradiction():
    with pytest.raises(ValueError, match="groups"):
        generate_dataset(GenSpec(n_traj=4, group_size=3, n_groups=2))


def test_results_sorted_and_readable(tmp_path):
    pairs = [MatchPair.of(Subtrajectory("b", 0, 1), Subtrajectory("c", 0, 1)),
             MatchPair.of(Subtrajectory("a", 2, 3), Subtrajectory("b", 2, 3))]
    io.write_results(pairs, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(io.RESULT_HEADER)
    assert lines[1].startswith("a,")
    assert io.read_results(tmp_path / "r.csv") == io.result_rows(pairs)


def test_workdir_manifest(tmp_path):
    tab = PointTable.from_trajectories(fixture_t1()[0])
    wd = prepare_workdir(tab, tmp_path, M=3, sample_rate=1.0, seed=7)
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["M"] == 3 and m["seed"] == 7 and m["points"] == 11
    assert m["boundaries"][0] is None and m["boundaries"][-1] is None
    assert (tmp_path / "parts" / "part-0").exists()
    assert wd.tree is not None and sum(len(f.table) for f in wd.files) == 11
    # corrupt a part file
    (tmp_path / "parts" / "part-0").write_bytes(b"\0" * 28)
    with pytest.raises(ValueError, match="checksum"):
        io.load_workdir(tmp_path)


def test_parse_dataset_from_workdir(tmp_path):
    tab = PointTable.from_trajectories(fixture_t1()[0])
    prepare_workdir(tab, tmp_path, M=2)
    back = io.parse_dataset(tmp_path)
    assert np.array_equal(back.t, tab.t)


def test_workdir_env(monkeypatch, tmp_path):
    monkeypatch.setenv(io.WORKDIR_ENV, str(tmp_path / "x"))
    assert io.default_workdir() == tmp_path / "x"
    assert io.default_workdir("y").name == "y"


@pytest.fixture
def t1_csv(tmp_path):
    p = tmp_path / "t1.csv"
    assert main(["gen", "--fixture", "t1", "--out", str(p)]) == 0
    return p


T1_PARAMS = ["--eps-sp", "1", "--eps-t", "0.5", "--delta-t", "3"]


@pytest.mark.parametrize("algo", ["dtjb", "dtjr", "dtji", "all"])
def test_cli_verify_t1(t1_csv, algo, capsys):
    assert main(["verify", "--input", str(t1_csv), "--algo", algo, *T1_PARAMS]) == 0
    assert "MISMATCH" not in capsys.readouterr().out


def test_cli_verify_detects_mismatch(t1_csv, tmp_path, monkeypatch, capsys):
    import subtrajoin.cli as cli

    monkeypatch.setattr(cli, "run_pipeline", lambda table, cfg: (set(), None))
    assert main(["verify", "--input", str(t1_csv), "--algo", "dtjr", *T1_PARAMS]) == 1
    assert "missing" in capsys.readouterr().out


def test_cli_join_needs_repartition(t1_csv, tmp_path, capsys):
    code = main(["join", "--algo", "dtji", "--workdir", str(tmp_path / "none"), *T1_PARAMS,
                 "--out", str(tmp_path / "r.csv")])
    assert code == 2
    assert "repartition" in capsys.readouterr().err


def test_cli_pipeline(t1_csv, tmp_path):
    wd = tmp_path / "wd"
    assert main(["repartition", "--input", str(t1_csv), "--workdir", str(wd), "--blocks", "2",
                 "--sample-rate", "1"]) == 0
    for algo in ("dtjr", "dtji"):
        out = tmp_path / f"{algo}.csv"
        assert main(["join", "--algo", algo, "--workdir", str(wd), *T1_PARAMS, "--out", str(out),
                     "--metrics", str(tmp_path / "m.txt"), "--task-csv", str(tmp_path / "t.csv")]) == 0
        assert io.read_results(out) == [("r", 0.0, 4.0, "s", 0.0, 4.0)]
    out = tmp_path / "b.csv"
    assert main(["join", "--algo", "dtjb", "--input", str(t1_csv), *T1_PARAMS, "--out", str(out)]) == 0
    assert main(["oracle", "--input", str(t1_csv), *T1_PARAMS, "--out", str(tmp_path / "o.csv")]) == 0
    assert out.read_bytes() == (tmp_path / "o.csv").read_bytes()


def test_cli_conflicting_flags(t1_csv, tmp_path):
    with pytest.raises(SystemExit):
        main(["repartition", "--input", str(t1_csv), "--blocks", "2", "--block-size", "10"])
    with pytest.raises(SystemExit):
        main(["join", "--algo", "dtjb", *T1_PARAMS, "--out", str(tmp_path / "r.csv")])


def test_cli_bench_rows(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--param", "eps_t", "--algos", "dtjr,dtji", "--n-traj", "20", "--points", "30",
                 "--blocks", "2", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()[1:]
    assert len(rows) == 10
    assert [r.split(",")[2] for r in rows if r.startswith("dtji")] == ["10", "15", "20", "25", "30"]
