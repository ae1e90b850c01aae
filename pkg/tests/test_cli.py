import os

import pytest

from coinsim.cli import main

SMALL_CONFIG = """
num_users = 6
num_tasks = 2
num_subtasks = 2
slots_per_episode = 2
seed = 13

[chain]
bc_budget = 120.0

[rl]
hidden_sizes = [16, 16]
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_CONFIG)
    return str(path)


def test_eval_writes_metrics_and_is_deterministic(tmp_path, config_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    args = ["eval", "--config", config_path, "--episodes", "2",
            "--policies", "opg,random", "--no-figures"]
    assert main(args + ["--out-dir", out1]) == 0
    assert main(args + ["--out-dir", out2]) == 0
    b1 = open(os.path.join(out1, "eval_metrics.csv"), "rb").read()
    b2 = open(os.path.join(out2, "eval_metrics.csv"), "rb").read()
    assert b1 == b2


def test_seed_flag_overrides_config(tmp_path, config_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    base = ["eval", "--config", config_path, "--episodes", "1",
            "--policies", "random", "--no-figures"]
    main(base + ["--out-dir", out1])
    main(base + ["--seed", "99", "--out-dir", out2])
    b1 = open(os.path.join(out1, "eval_metrics.csv"), "rb").read()
    b2 = open(os.path.join(out2, "eval_metrics.csv"), "rb").read()
    assert b1 != b2


def test_train_then_eval_with_checkpoint(tmp_path, config_path):
    out = str(tmp_path / "run")
    assert main(["train", "--config", config_path, "--episodes", "4",
                 "--out-dir", out, "--no-figures"]) == 0
    ckpt = os.path.join(out, "checkpoint.json")
    assert os.path.exists(ckpt)
    assert os.path.exists(os.path.join(out, "train_metrics.csv"))
    assert main(["eval", "--config", config_path, "--episodes", "1",
                 "--policies", "proposed,opg", "--checkpoint", ckpt,
                 "--out-dir", out, "--no-figures"]) == 0
    assert os.path.exists(os.path.join(out, "eval_metrics.csv"))


def test_eval_renders_figures_alongside_csv(tmp_path, config_path):
    out = str(tmp_path / "figs")
    assert main(["eval", "--config", config_path, "--episodes", "1",
                 "--policies", "opg,random", "--out-dir", out]) == 0
    for name in ("eval_metrics.csv", "cost_per_episode.png",
                 "reward_per_episode.png", "load_fractions.png"):
        assert os.path.exists(os.path.join(out, name)), name


def test_report_consumes_existing_csv(tmp_path, config_path):
    out = str(tmp_path / "r")
    main(["eval", "--config", config_path, "--episodes", "1",
          "--policies", "opg", "--out-dir", out, "--no-figures"])
    figs = str(tmp_path / "r2")
    assert main(["report", "--csv", os.path.join(out, "eval_metrics.csv"),
                 "--out-dir", figs]) == 0
    assert os.path.exists(os.path.join(figs, "cost_per_episode.png"))


def test_sweep_outputs(tmp_path, config_path):
    out = str(tmp_path / "sw")
    assert main(["sweep", "--config", config_path, "--param", "r_max",
                 "--values", "3,6", "--policies", "opg", "--episodes", "2",
                 "--out-dir", out, "--no-figures"]) == 0
    assert os.path.exists(os.path.join(out, "sweep_summary.csv"))
    assert os.path.exists(os.path.join(out, "metrics_r_max_3.csv"))
    assert os.path.exists(os.path.join(out, "metrics_r_max_6.csv"))


def test_ne_demo_trace(tmp_path, config_path):
    out = str(tmp_path / "ne")
    assert main(["ne-demo", "--config", config_path, "--out-dir", out]) == 0
    trace = open(os.path.join(out, "ne_trace.csv")).read().strip().split("\n")
    assert trace[0] == "iteration,potential,mover,cost_drop"
    assert len(trace) >= 2
