import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from recurrent_fqi.harness import (
    ExperimentConfig,
    MetricSummary,
    emit_results,
    full_grid,
    learning_performance,
    learning_time,
    read_summary_csv,
    run_experiment,
    summarize,
    welch_t_test,
    write_summary_csv,
)
from recurrent_fqi.harness import cli
from recurrent_fqi.harness.report import check_orderings, format_table
from recurrent_fqi.valuelearn import AlgoConfig, RunRecord


def oracle_learning_time(rewards, threshold=-15.0, max_std=20.0, window=1000, min_window=100):
    """Pure-python sliding window, straight from the definition."""
    n = len(rewards)
    for e in range(n - min(min_window, n) + 1):
        w = rewards[e:e + window]
        m = math.fsum(w) / len(w)
        sd = math.sqrt(math.fsum((v - m) ** 2 for v in w) / len(w))
        if m > threshold and sd < max_std:
            return e
    return None


# -- metrics -------------------------------------------------------------------


def test_learning_time_examples():
    assert learning_time([-1.0] * 5000) == 0
    assert learning_time([-100.0, 100.0] * 2500) is None
    assert learning_time([]) is None


def test_learning_time_step_change_matches_oracle():
    rewards = [-500.0] * 3000 + [-1.0] * 2000
    expected = oracle_learning_time(rewards)
    # one -500 episode in a window of 1000 still passes: mean -1.499, std 15.77
    assert expected == 2999
    assert learning_time(rewards) == expected
    w = np.array(rewards[2999:3999])
    assert w.mean() == pytest.approx(-1.499) and w.std() < 20


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from([-500.0, -40.0, -5.0, -1.0, 0.0, 3.0]), min_size=1, max_size=400),
       st.integers(5, 150), st.integers(1, 60))
def test_learning_time_matches_oracle(rewards, window, min_window):
    assert learning_time(rewards, window=window, min_window=min_window) == oracle_learning_time(
        rewards, window=window, min_window=min_window)


def test_learning_performance_examples():
    assert learning_performance([5.0] * 3000) == 5.0
    assert learning_performance([-10.0] * 1000 + [0.0] * 1000) == 0.0
    ramp = [float(v) for v in range(-999, 1)]
    assert learning_performance(ramp) == pytest.approx(-49.5, abs=1e-12)
    with pytest.raises(ValueError):
        learning_performance([])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-100, 20), min_size=120, max_size=1500))
def test_performance_dominates_qualifying_window(rewards):
    lt = learning_time(rewards)
    lp = learning_performance(rewards)
    assert lp >= np.mean(rewards[:1000]) - 1e-9
    if lt is not None:
        assert lt < len(rewards)
        assert lp > -15.0


def test_welch_examples():
    assert welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0
    assert welch_t_test([0.0] * 5, [10, 10, 10, 10, 10.0001]) < 1e-6
    assert welch_t_test([2.0, 2.0], [2.0, 2.0]) == 1.0
    assert welch_t_test([2.0, 2.0], [3.0, 3.0]) == 0.0
    with pytest.raises(ValueError):
        welch_t_test([1.0], [1.0, 2.0])


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=20),
       st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=20))
def test_welch_symmetric_and_matches_scipy(a, b):
    p = welch_t_test(a, b)
    assert p == welch_t_test(b, a)
    assert 0.0 <= p <= 1.0
    if np.var(a) > 1e-6 and np.var(b) > 1e-6:
        ref = stats.ttest_ind(a, b, equal_var=False).pvalue
        assert p == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_summary_counts_divergence_as_na():
    ok = RunRecord([-1.0] * 200, seconds=1.0, seed=0)
    bad = RunRecord([-500.0] * 5, seconds=0.5, seed=1, diverged=True)
    s = summarize("gw", "gru", "q", "fixed", [ok, bad])
    assert s.learning_times == [1, None]
    assert s.lt_mean == 1.0 and s.lt_na_count == 1 and s.diverged == 1
    assert s.lp_mean == pytest.approx((-1.0 - 500.0) / 2)


# -- reporting -----------------------------------------------------------------


def _summary(**kw):
    base = dict(world="po", model="gru", algo="q", start_mode="fixed", runs=3, lt_mean=None, lt_std=None,
                lt_na_count=3, lp_mean=-123.25, lp_std=0.1 + 0.2, seconds_mean=12.5)
    base.update(kw)
    return MetricSummary(**base)


def test_empty_summary_csv_is_header_only(tmp_path):
    path = write_summary_csv([], tmp_path / "s.csv")
    assert path.read_text().splitlines() == [
        "world,model,algo,start_mode,runs,lt_mean,lt_std,lt_na_count,lp_mean,lp_std,seconds_mean"
    ]
    assert read_summary_csv(path) == []


def test_na_literal_and_round_trip(tmp_path):
    summaries = [_summary(), _summary(model="lstm", lt_mean=216.4, lt_std=37.6, lt_na_count=0)]
    path = write_summary_csv(summaries, tmp_path / "s.csv")
    rows = list(csv.DictReader(path.open()))
    assert rows[0]["lt_mean"] == "NA" and rows[0]["lt_std"] == "NA"
    back = read_summary_csv(path)
    for orig, got in zip(summaries, back):
        for col in ("world", "model", "algo", "start_mode", "runs", "lt_mean", "lt_std", "lt_na_count",
                    "lp_mean", "lp_std", "seconds_mean"):
            assert getattr(orig, col) == getattr(got, col)


def test_table_and_orderings():
    summaries = [
        _summary(world="gw", model="gru", lt_mean=200.0, lt_std=30.0, lt_na_count=0, lp_mean=0.0),
        _summary(world="gw", model="lstm", lt_mean=400.0, lt_std=30.0, lt_na_count=0, lp_mean=-1.0),
        _summary(world="gw", model="mut1", lt_mean=None, lp_mean=-3.0),
    ]
    table = format_table(summaries)
    assert "200.0/30.0" in table and "NA" in table
    checks = dict(check_orderings(summaries))
    assert checks["learning time gru <= lstm <= mut1 (gw, q, fixed)"]


def _tiny(tmp_path, **kw):
    algo = AlgoConfig(episodes=12, max_steps=25, train_every=5)
    return ExperimentConfig(world="po", model="gru", algorithm="q", runs=2, hidden=3, algo=algo, out=tmp_path, **kw)


def test_emit_all_formats(tmp_path):
    res = run_experiment(_tiny(tmp_path))
    names = {p.name for p in emit_results([res], "svg", tmp_path / "svg")}
    assert names == {"summary.csv", "runs.csv", "curves.csv", "curves_po_q_fixed.svg"}
    names = {p.name for p in emit_results([res], "table", tmp_path / "table")}
    assert names == {"summary.csv", "runs.csv", "table.txt"}
    runs = list(csv.DictReader((tmp_path / "svg" / "runs.csv").open()))
    assert [r["seed"] for r in runs] == ["0", "1"]
    with pytest.raises(ValueError):
        emit_results([res], "xml", tmp_path)


def test_repeated_runs_are_identical(tmp_path):
    a = run_experiment(_tiny(tmp_path))
    b = run_experiment(_tiny(tmp_path))
    assert [r.rewards for r in a.records] == [r.rewards for r in b.records]
    assert [r.losses for r in a.records] == [r.losses for r in b.records]
    assert a.records[0].rewards != a.records[1].rewards


def test_parallel_matches_serial(tmp_path):
    serial = run_experiment(_tiny(tmp_path))
    parallel = run_experiment(_tiny(tmp_path), jobs=2)
    assert [r.rewards for r in serial.records] == [r.rewards for r in parallel.records]
    assert [r.losses for r in serial.records] == [r.losses for r in parallel.records]


def test_full_grid():
    grid = full_grid(ExperimentConfig(runs=1))
    assert len(grid) == 48
    assert len({c.label for c in grid}) == 48
    assert all(c.algo.algorithm == c.algorithm for c in grid)


def test_config_rejects_unknown_tags():
    with pytest.raises(ValueError):
        ExperimentConfig(world="maze")
    with pytest.raises(ValueError):
        ExperimentConfig(model="rnn")


# -- command line --------------------------------------------------------------

TINY = ["--episodes", "12", "--max-steps", "25", "--train-every", "5", "--runs", "2", "--hidden", "3"]


def test_cli_writes_outputs(tmp_path, capsys):
    assert cli.main(TINY + ["--world", "ac", "--random-start", "--format", "svg", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "wrote" in out
    assert (tmp_path / "curves_ac_advantage_random.svg").exists()
    rows = list(csv.DictReader((tmp_path / "summary.csv").open()))
    assert rows[0]["world"] == "ac" and rows[0]["start_mode"] == "random" and rows[0]["runs"] == "2"


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("world = po\nmodel = lstm\nrandom-start = true\nhidden = 3\nepisodes = 12\n")
    args = cli.parse_args(["--config", str(cfg), "--hidden", "4"])
    assert (args.world, args.model, args.random_start, args.hidden, args.episodes) == ("po", "lstm", True, 4, 12)


def test_cli_bad_value_exit_code(tmp_path, capsys):
    assert cli.main(TINY + ["--alpha", "2", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_divergence_exit_code(tmp_path, capsys):
    argv = TINY + ["--lr", "1e305", "--out", str(tmp_path)]
    assert cli.main(argv) == 1
    assert "diverged" in capsys.readouterr().err
    assert cli.main(argv + ["--allow-divergence"]) == 0
    rows = list(csv.DictReader((tmp_path / "runs.csv").open()))
    assert all(r["diverged"] == "1" and r["learning_time"] == "NA" for r in rows)


def test_cli_checkpoint_replay(tmp_path, capsys):
    assert cli.main(TINY + ["--save-checkpoints", "--out", str(tmp_path)]) == 0
    ckpt = tmp_path / "checkpoints" / "gw_gru_advantage_fixed_run0.npz"
    assert ckpt.exists()
    capsys.readouterr()
    assert cli.main(["--replay", str(ckpt), "--max-steps", "25"]) == 0
    assert "return" in capsys.readouterr().out
    assert cli.main(["--replay", str(ckpt), "--world", "ac"]) == 2
