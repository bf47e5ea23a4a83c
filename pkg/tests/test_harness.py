import csv
import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from latentsafe.agent import Agent
from latentsafe.cli import EXIT_OK, EXIT_ORACLE, EXIT_USAGE, run_cli
from latentsafe.config import RunConfig, default_config_text, load_config, make_env, parse_config
from latentsafe.envs import HazardGridWorld, NavEnv
from latentsafe.metrics import EpisodeLog, write_logs_jsonl

TINY_INI = """\
[run]
seed = 4

[agent]
updates_per_epoch = 2
batch_size = 4
seq_len = 6
seed_episodes = 2
n_candidates = 3
epochs = 3

[world_model]
h_dim = 8
z_dim = 4
hidden = 16

[harness]
checkpoint_every = 2
"""


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.ini").write_text(TINY_INI)
    code = run_cli(["train", "--config", str(root / "tiny.ini"), "--out", str(root / "run")])
    assert code == EXIT_OK
    return root


# -- config -------------------------------------------------------------------

def test_default_config_roundtrip():
    assert parse_config(default_config_text()) == RunConfig()


def test_partial_config_keeps_defaults():
    cfg = parse_config(TINY_INI)
    assert cfg.train.seed == 4 and cfg.train.h_dim == 8 and cfg.train.epochs == 3
    assert cfg.train.lr_policy == RunConfig().train.lr_policy
    assert parse_config(default_config_text(cfg)) == cfg


@pytest.mark.parametrize("text", ["[agent]\nlearning_speed = 3\n", "[optimizer]\nlr = 1\n",
                                  "[agent]\nbarrier = maybe\n", "[env]\nenv = carla\n"])
def test_bad_config_rejected(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_make_env_dispatch():
    assert isinstance(make_env(RunConfig()), HazardGridWorld)
    nav = make_env(RunConfig(env="nav"), "dynamic-3")
    assert isinstance(nav, NavEnv)
    assert isinstance(make_env(RunConfig(), "corridor"), NavEnv)
    with pytest.raises(ValueError):
        make_env(RunConfig(env="nav"), "moon-base")


# -- CLI ----------------------------------------------------------------------

def test_train_outputs(tiny_run):
    run = tiny_run / "run"
    lines = (run / "train.jsonl").read_text().splitlines()
    assert len(lines) == 3
    rec = json.loads(lines[0])
    for key in ("epoch", "J_R", "J_C", "J_V", "J_pi", "KL", "kappa", "beta", "return", "cost"):
        assert key in rec
    assert (run / "checkpoints" / "epoch_0002" / "agent.json").exists()
    assert (run / "final" / "agent.json").exists()
    assert load_config(run / "config.ini") == parse_config(TINY_INI)
    with open(run / "curve.csv") as fh:
        assert next(csv.reader(fh)) == ["epoch", "return", "cost", "violations", "kappa", "beta", "E_gamma"]


def test_eval_and_report(tiny_run):
    out = tiny_run / "eval"
    assert run_cli(["eval", "--checkpoint", str(tiny_run / "run" / "final"), "--episodes", "3",
                    "--out", str(out)]) == EXIT_OK
    with open(out / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["metric", "value", "stderr"]
    assert [r[0] for r in rows[1:]] == ["DS", "RC", "IS", "CO", "IPK", "TTC", "CR"]
    with open(out / "routes.csv") as fh:
        assert next(csv.reader(fh)) == ["route_id", "rc", "is", "ds", "collisions", "distance_km", "min_ttc"]
    for name in ("r1", "r2"):
        assert run_cli(["report", "--logs", str(out / "logs.jsonl"), "--train-log",
                        str(tiny_run / "run" / "train.jsonl"), "--out", str(tiny_run / name)]) == EXIT_OK
    for f in ("metrics.csv", "routes.csv", "curve.csv"):
        assert filecmp.cmp(tiny_run / "r1" / f, tiny_run / "r2" / f, shallow=False)


def test_report_is_order_free(tmp_path):
    logs = [EpisodeLog(0.2 * i, infractions={"Ped": i % 2}, collisions=i % 3, distance_driven=0.1 * i + 0.1,
                       min_ttc=float(i), seed=i) for i in range(5)]
    write_logs_jsonl(logs, tmp_path / "a.jsonl")
    write_logs_jsonl(logs[::-1], tmp_path / "b.jsonl")
    for name in ("a", "b"):
        assert run_cli(["report", "--logs", str(tmp_path / f"{name}.jsonl"), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


SHIPPED = Path(__import__("latentsafe").__file__).parent / "data" / "checkpoints"


def test_sweep_schema(tmp_path):
    ckpt = SHIPPED / "safe"
    out = tmp_path / "sweep.csv"
    code = run_cli(["sweep", "--checkpoint", f"a={ckpt}", "--checkpoint", f"b={ckpt}", "--speeds", "1", "2",
                    "--episodes", "1", "--out", str(out)])
    assert code == EXIT_OK
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["variant", "speed", "episodes", "fail_rate", "avg_time", "safety_score"]
    assert [(r["variant"], float(r["speed"])) for r in rows] == [("a", 1.0), ("a", 2.0), ("b", 1.0), ("b", 2.0)]


@pytest.mark.parametrize("argv", [
    ["eval", "--checkpoint", "x", "--episodes", "0", "--out", "y"],
    ["train"],
    ["frobnicate"],
    ["train", "--out", "o", "--bogus"],
    ["sweep", "--checkpoint", "nodir", "--out", "s.csv"],
    ["report", "--out", "somewhere"],
    ["eval", "--checkpoint", "/nonexistent/ckpt", "--episodes", "1", "--out", "y"],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run_cli(argv) == EXIT_USAGE


def test_checkpoint_world_mismatch_is_usage_error(tiny_run):
    # the tiny run is a hazard-world agent; nav observations do not fit it
    assert run_cli(["eval", "--checkpoint", str(tiny_run / "run" / "final"), "--scenario", "corridor",
                    "--episodes", "1", "--out", str(tiny_run / "bad")]) == EXIT_USAGE


def test_help_exits_zero(capsys):
    assert run_cli(["--help"]) == EXIT_OK
    assert "oracle-check" in capsys.readouterr().out


def test_print_config(capsys, tmp_path):
    assert run_cli(["train", "--out", str(tmp_path), "--variant", "sac", "--print-config"]) == EXIT_OK
    text = capsys.readouterr().out
    assert parse_config(text).train.variant == "sac"


def test_oracle_check_exit_codes(monkeypatch):
    assert run_cli(["oracle-check", "--suite", "metric-examples", "--suite", "tabular-examples"]) == EXIT_OK
    import latentsafe.cli as cli
    from latentsafe.oracles import SuiteResult
    monkeypatch.setattr(cli, "run_suites", lambda names: [SuiteResult("x", False, "forced")])
    assert run_cli(["oracle-check"]) == EXIT_ORACLE


def test_shipped_checkpoints_load():
    root = SHIPPED
    for name in ("safe", "sac"):
        agent = Agent.load(root / name)
        assert agent.obs_dim == NavEnv(make_env(RunConfig(env="nav")).config).obs_dim
        assert np.isfinite(agent.mult.kappa)
    assert load_config(root / "safe" / "config.ini").env == "nav"


def test_sweep_episodes_share_seeds_across_speeds():
    from latentsafe.harness import evaluate
    agent = Agent.load(SHIPPED / "sac")
    cfg = load_config(SHIPPED / "sac" / "config.ini")
    seeds = [[g.seed for g in evaluate(agent, cfg, 3, 0, scenario=f"dynamic-{k}", speed=float(k), seed_key="dynamic")]
             for k in (1, 3)]
    assert seeds[0] == seeds[1]
    unpaired = [g.seed for g in evaluate(agent, cfg, 3, 0, scenario="dynamic-3", speed=3.0)]
    assert unpaired != seeds[0]
