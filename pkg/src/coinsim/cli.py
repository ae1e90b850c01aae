"""Command-line interface: train, eval, sweep, ne-demo, selftest, report."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import report
from .config import SystemParams, load_config, with_seed
from .game import init_profile, make_instance, run_to_ne
from .harness import (POLICIES, Environment, emit_csv, run_experiment,
                      run_sweep)
from .radio import distances_to_center, draw_channel_state, draw_positions


def _load_params(args) -> SystemParams:
    params = load_config(args.config) if args.config else SystemParams().validate()
    if args.seed is not None:
        params = with_seed(params, args.seed)
    return params


def _add_common(sub):
    sub.add_argument("--config", help="TOML config file (defaults otherwise)")
    sub.add_argument("--seed", type=int, default=None, help="override config seed")
    sub.add_argument("--out-dir", default="out", help="output directory")


def _prepare_out(args) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def cmd_train(args) -> int:
    params = _load_params(args)
    out = _prepare_out(args)
    rows, agent = run_experiment(params, ["proposed"], eval_episodes=0,
                                 train_episodes=args.episodes,
                                 preset=args.preset,
                                 slots_per_episode=args.slots)
    csv_path = os.path.join(out, "train_metrics.csv")
    emit_csv(rows["train"], csv_path)
    ckpt = os.path.join(out, "checkpoint.json")
    agent.save(ckpt)
    print(f"wrote {csv_path} and {ckpt}")
    if not args.no_figures and rows["train"]:
        for path in report.render_metrics(csv_path, out):
            print(f"wrote {path}")
    return 0


def cmd_eval(args) -> int:
    params = _load_params(args)
    out = _prepare_out(args)
    policies = args.policies.split(",") if args.policies else list(POLICIES)
    if "proposed" in policies and not args.checkpoint:
        print("note: no --checkpoint given; the proposed policy runs untrained",
              file=sys.stderr)
    rows, _ = run_experiment(params, policies, eval_episodes=args.episodes,
                             train_episodes=0, preset=args.preset,
                             checkpoint=args.checkpoint,
                             slots_per_episode=args.slots)
    csv_path = os.path.join(out, "eval_metrics.csv")
    emit_csv(rows["eval"], csv_path)
    print(f"wrote {csv_path}")
    if not args.no_figures and rows["eval"]:
        for path in report.render_metrics(csv_path, out):
            print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    params = _load_params(args)
    out = _prepare_out(args)
    values = [int(v) for v in args.values.split(",")]
    policies = args.policies.split(",") if args.policies else ["proposed", "opg"]
    per_value, summary = run_sweep(params, args.param, values, policies,
                                   eval_episodes=args.episodes,
                                   train_episodes=args.train_episodes,
                                   slots_per_episode=args.slots)
    for value, rows in per_value.items():
        path = os.path.join(out, f"metrics_{args.param}_{value}.csv")
        emit_csv(rows, path)
        print(f"wrote {path}")
    summary_path = os.path.join(out, "sweep_summary.csv")
    emit_csv(summary, summary_path,
             columns=("param", "value", "policy", "mean_cost", "mean_reward",
                      "mean_latency"))
    print(f"wrote {summary_path}")
    if not args.no_figures and summary:
        for path in report.render_sweep(summary, out):
            print(f"wrote {path}")
    return 0


def cmd_ne_demo(args) -> int:
    params = _load_params(args)
    out = _prepare_out(args)
    env = Environment(params, "ne-demo")
    env.begin_slot()
    subtasks = env.user_subtasks()
    inst = make_instance(params, env.state, subtasks)
    outcome = run_to_ne(inst, initial=init_profile(subtasks, params))
    path = os.path.join(out, "ne_trace.csv")
    rows = [{"iteration": 0, "potential": outcome.potential_trace[0],
             "mover": -1, "cost_drop": 0.0}]
    for iteration, phi, mover, drop in outcome.moves:
        rows.append({"iteration": iteration, "potential": phi,
                     "mover": mover, "cost_drop": drop})
    emit_csv(rows, path, columns=("iteration", "potential", "mover", "cost_drop"))
    print(f"wrote {path}")
    print(f"converged={outcome.is_ne} iterations={outcome.iterations} "
          f"bound={outcome.bound:.3g}")
    return 0 if outcome.is_ne else 1


def cmd_selftest(args) -> int:
    from . import selftest
    return selftest.run(seed=args.seed if args.seed is not None else 0)


def cmd_report(args) -> int:
    out = _prepare_out(args)
    for path in report.render_metrics(args.csv, out):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coinsim",
        description="Redundancy-aware blockchain offloading simulator")
    subs = parser.add_subparsers(dest="command", required=True)

    train = subs.add_parser("train", help="train the redundancy agent")
    _add_common(train)
    train.add_argument("--episodes", type=int, default=50)
    train.add_argument("--slots", type=int, default=None,
                       help="slots per episode (config default otherwise)")
    train.add_argument("--preset", choices=("data_intensive", "compute_intensive"),
                       default=None)
    train.add_argument("--no-figures", action="store_true")
    train.set_defaults(func=cmd_train)

    ev = subs.add_parser("eval", help="frozen policy comparison")
    _add_common(ev)
    ev.add_argument("--policies", default=None,
                    help=f"comma list from {','.join(POLICIES)}")
    ev.add_argument("--episodes", type=int, default=20)
    ev.add_argument("--slots", type=int, default=None)
    ev.add_argument("--checkpoint", default=None)
    ev.add_argument("--preset", choices=("data_intensive", "compute_intensive"),
                    default=None)
    ev.add_argument("--no-figures", action="store_true")
    ev.set_defaults(func=cmd_eval)

    sweep = subs.add_parser("sweep", help="grid over r_max / users / subtasks")
    _add_common(sweep)
    sweep.add_argument("--param", choices=("r_max", "num_users", "num_subtasks"),
                       required=True)
    sweep.add_argument("--values", required=True, help="comma list, e.g. 5,10,20,30")
    sweep.add_argument("--policies", default=None)
    sweep.add_argument("--episodes", type=int, default=10)
    sweep.add_argument("--train-episodes", type=int, default=0)
    sweep.add_argument("--slots", type=int, default=None)
    sweep.add_argument("--no-figures", action="store_true")
    sweep.set_defaults(func=cmd_sweep)

    ne = subs.add_parser("ne-demo", help="dump one offloading game's potential trace")
    _add_common(ne)
    ne.set_defaults(func=cmd_ne_demo)

    st = subs.add_parser("selftest", help="run the built-in property suites")
    st.add_argument("--seed", type=int, default=None)
    st.set_defaults(func=cmd_selftest)

    rep = subs.add_parser("report", help="render figures from an emitted CSV")
    rep.add_argument("--csv", required=True)
    rep.add_argument("--out-dir", default="out")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
