import xml.etree.ElementTree as ET
from dataclasses import replace

import pytest

from mecoffload.baselines import BaselinePolicy
from mecoffload.config import ConfigError, NetworkConfig
from mecoffload.harness import (STREAM_EVAL_ENV, STREAM_TRAIN_ENV, BestAssignmentPolicy, ExperimentConfig,
                                csv_text, derive_seed, emit_csv, emit_plot, experiment_from_mapping,
                                load_experiment, load_policy, parse_csv, read_csv, run_eval, run_training,
                                sweep)
from mecoffload.nn import CheckpointError
from mecoffload.ratemodel import ContractError


def small(tmp_path, **kw):
    base = dict(episodes=2, slots=10, eval_episodes=2, out_dir=str(tmp_path / "run"))
    base.update(kw)
    return ExperimentConfig(**base)


def test_seed_streams_disjoint():
    train = {derive_seed(0, STREAM_TRAIN_ENV, i) for i in range(1000)}
    ev = {derive_seed(0, STREAM_EVAL_ENV, i) for i in range(1000)}
    assert len(train) == 1000 and not train & ev
    assert derive_seed(1, STREAM_TRAIN_ENV, 0) != derive_seed(0, STREAM_TRAIN_ENV, 0)
    assert derive_seed(5, 2, 3) == derive_seed(5, 2, 3)


def test_single_slot_training(tmp_path):
    res = run_training(small(tmp_path, agent="dqn", episodes=1, slots=1))
    assert len(res.rows) == 1
    assert len(res.agent.buffer) == 1
    assert res.metrics_path.is_file()
    assert (res.checkpoint_dir / "q.params").is_file()


@pytest.mark.parametrize("agent", ["dqn", "ddpg", "random"])
def test_training_is_deterministic(tmp_path, agent):
    def run(name):
        res = run_training(small(tmp_path, agent=agent, slots=40, out_dir=str(tmp_path / name)))
        return [{k: v for k, v in r.items() if k != "wall_time"} for r in read_csv(res.metrics_path)]

    assert run("a") == run("b")


def test_metrics_rows_monotone(tmp_path):
    res = run_training(small(tmp_path, agent="ddpg", episodes=3))
    assert [r.episode for r in res.rows] == [0, 1, 2]
    assert all(r.mean_delay == pytest.approx(-r.mean_reward) for r in res.rows)


def test_unwritable_output_fails_before_training(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="not writable"):
        run_training(small(tmp_path, out_dir=str(blocker / "sub")))


def test_eval_local_only_repeatable(tmp_path):
    cfg = small(tmp_path)
    a = run_eval(BaselinePolicy("local_only"), cfg)
    b = run_eval(BaselinePolicy("local_only"), cfg)
    assert a.mean_delay == b.mean_delay and len(a.episode_means) == 2


def test_eval_agent_greedy_deterministic(tmp_path):
    cfg = small(tmp_path, agent="ddpg")
    res = run_training(cfg)
    pol = load_policy(str(res.checkpoint_dir), cfg)
    assert run_eval(pol, cfg).mean_delay == run_eval(pol, cfg).mean_delay
    assert run_eval(pol, cfg).mean_delay == run_eval(res.agent, cfg).mean_delay


def test_random_worse_than_best_assignment(tmp_path):
    cfg = small(tmp_path)
    rnd = run_eval(BaselinePolicy("random"), cfg, slots=15)
    best = run_eval(BestAssignmentPolicy(), cfg, slots=15)
    assert rnd.mean_delay > best.mean_delay


def test_load_policy_errors(tmp_path):
    cfg = small(tmp_path, agent="dqn")
    with pytest.raises(ConfigError):
        load_policy(str(tmp_path / "nothing"), cfg)
    res = run_training(cfg)
    bigger = replace(cfg, network=NetworkConfig(K=3))
    with pytest.raises(CheckpointError):
        load_policy(str(res.checkpoint_dir), bigger)


def test_sweep_mec_capability(tmp_path):
    cfg = small(tmp_path)
    table = sweep("mec_capability", [0.25, 1.0, 4.0],
                  [BaselinePolicy("local_only"), BaselinePolicy("mec_only")], cfg)
    loc = [r["mean_delay"] for r in table if r["policy"] == "local_only"]
    mec = [r["mean_delay"] for r in table if r["policy"] == "mec_only"]
    assert loc[0] == loc[1] == loc[2]
    assert mec[0] >= mec[1] >= mec[2]


def test_sweep_task_rate_monotone_and_crossover(tmp_path):
    cfg = small(tmp_path)
    rates = [1e1, 1e2, 5e4, 5e5, 2.7e6, 5e6]
    pols = [BaselinePolicy(k) for k in ("random", "local_only", "mec_only")]
    table = sweep("task_rate", rates, pols, cfg)
    by = {p: [r["mean_delay"] for r in table if r["policy"] == p] for p in ("random", "local_only", "mec_only")}
    for series in by.values():
        assert all(b >= a for a, b in zip(series, series[1:]))
    wins = [m < r for m, r in zip(by["mec_only"], by["random"])]
    assert not wins[0] and wins[-1]


def test_sweep_rejects_empty_and_bad_axis(tmp_path):
    with pytest.raises(ContractError):
        sweep("task_rate", [], [BaselinePolicy("local_only")], small(tmp_path))
    with pytest.raises(ConfigError):
        sweep("bandwidth", [1.0], [BaselinePolicy("local_only")], small(tmp_path))


def test_csv_round_trip_and_quoting(tmp_path):
    table = [{"policy": 'a,"b"', "value": 1.0000000000000002, "n": 3, "name": "x y"},
             {"policy": "mec_only", "value": 2.5e-7, "n": -1, "name": "line\nbreak"}]
    path = emit_csv(table, tmp_path / "t.csv")
    assert read_csv(path) == table
    assert parse_csv(csv_text(table)) == table
    assert path.read_bytes().split(b"\r\n")[0] == b"policy,value,n,name"


def test_csv_empty_table(tmp_path):
    with pytest.raises(ContractError):
        emit_csv([], tmp_path / "e.csv")
    assert not (tmp_path / "e.csv").exists()


def test_csv_unwritable(tmp_path):
    with pytest.raises(OSError, match="missing"):
        emit_csv([{"a": 1}], tmp_path / "missing" / "x.csv")


def test_svg_well_formed(tmp_path):
    table = [{"value": v, "policy": p, "mean_delay": d}
             for v, p, d in [(1, "a<b", 1e-4), (2, "a<b", 2e-4), (1, "c&d", 3e-3), (2, "c&d", 5e-2)]]
    path = emit_plot(table, tmp_path / "p.svg", title="delay & rate")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 2
    with pytest.raises(ContractError):
        emit_plot([], tmp_path / "q.svg")


def test_experiment_mapping():
    cfg = experiment_from_mapping({"network": {"K": 3}, "experiment": {"agent": "ddpg", "episodes": 5},
                                   "ddpg": {"tau": 0.01, "hidden": [32, 32]}, "solver": {"split_tol": 1e-3}})
    assert cfg.network.K == 3 and cfg.agent == "ddpg" and cfg.episodes == 5
    assert cfg.ddpg.tau == 0.01 and cfg.ddpg.hidden == (32, 32)
    for bad in ({"nets": {}}, {"experiment": {"speed": 1}}, {"dqn": {"alpha": 1}},
                {"experiment": {"agent": "ppo"}}, {"experiment": {"episodes": 0}}, {"dqn": {"gamma": 2.0}}):
        with pytest.raises(ConfigError):
            experiment_from_mapping(bad)


def test_load_experiment_toml(tmp_path):
    p = tmp_path / "e.toml"
    p.write_text('[experiment]\nagent = "mec_only"\nslots = 7\n[network]\ntask_rate = 1e6\n')
    cfg = load_experiment(p)
    assert cfg.agent == "mec_only" and cfg.slots == 7 and cfg.network.C_mean == pytest.approx(1000.0)
    assert load_experiment(None) == ExperimentConfig()
