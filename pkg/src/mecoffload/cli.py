"""Command-line entry point. Exit codes: 0 success, 1 configuration error, 2 runtime error."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checks
from .config import ConfigError, network_from_mapping
from .harness import (AGENT_KINDS, SWEEP_AXES, emit_csv, emit_plot, load_experiment, load_policy,
                      run_eval, run_training, sweep)
from .solver import UserInstance, solve_assignment, solve_single_user_raw

log = logging.getLogger("mecoffload")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="TOML experiment file")
    parser.add_argument("--seed", type=int, default=default, help="base seed (unsigned 64-bit)")
    parser.add_argument("--out", type=Path, default=default, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mecoffload", description="MEC task-offloading simulator")
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent (or roll out a baseline)")
    _global_flags(p, suppress=True)
    p.add_argument("--agent", choices=AGENT_KINDS)
    p.add_argument("--episodes", type=int)
    p.add_argument("--slots", type=int)

    p = sub.add_parser("eval", help="evaluate a checkpoint directory or baseline")
    _global_flags(p, suppress=True)
    p.add_argument("policies", nargs="+", help="checkpoint dirs or baseline names")
    p.add_argument("--episodes", type=int)

    p = sub.add_parser("sweep", help="sweep task rate or MEC capability")
    _global_flags(p, suppress=True)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", type=float, nargs="+", required=True,
                   help="task rates in bits/s, or E_max_mec multipliers")
    p.add_argument("--policies", nargs="+", default=["random", "local_only", "mec_only"])
    p.add_argument("--episodes", type=int)

    p = sub.add_parser("solve", help="solve one JSON instance")
    _global_flags(p, suppress=True)
    p.add_argument("instance", type=Path)

    p = sub.add_parser("check", help="run the oracle/gradient/stationarity property suites")
    _global_flags(p, suppress=True)
    p.add_argument("--quick", action="store_true", help="reduced sample counts")
    return parser


def _experiment(args):
    cfg = load_experiment(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    for name in ("agent", "episodes", "slots"):
        if getattr(args, name, None) is not None:
            changes[name] = getattr(args, name)
    return replace(cfg, **changes) if changes else cfg


def _out_dir(cfg) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_train(args) -> int:
    cfg = _experiment(args)

    def progress(row):
        log.info("episode %d mean delay %.4e exploration %.3f (%.0fs)",
                 row.episode, row.mean_delay, row.exploration, row.wall_time)

    res = run_training(cfg, progress=progress)
    emit_plot([{"episode": r.episode, "mean_delay": r.mean_delay} for r in res.rows],
              Path(cfg.out_dir) / "training.svg", x="episode", series=None, title=f"{cfg.agent} training")
    tail = res.rows[-min(50, len(res.rows)):]
    print(f"trained {cfg.agent}: final mean delay {np.mean([r.mean_delay for r in tail]):.6e} s")
    print(f"metrics: {res.metrics_path}")
    if res.checkpoint_dir:
        print(f"checkpoint: {res.checkpoint_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _experiment(args)
    rows = []
    for ref in args.policies:
        res = run_eval(load_policy(ref, cfg), cfg, episodes=args.episodes)
        rows.append({"policy": ref, "mean_delay": res.mean_delay, "std_delay": res.std_delay})
        print(f"{ref}: {res.mean_delay:.6e} +- {res.std_delay:.2e} s")
    emit_csv(rows, _out_dir(cfg) / "eval.csv")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _experiment(args)
    policies = [load_policy(ref, cfg) for ref in args.policies]
    table = sweep(args.axis, args.values, policies, cfg, episodes=args.episodes)
    out = _out_dir(cfg)
    emit_csv(table, out / f"sweep_{args.axis}.csv")
    emit_plot(table, out / f"sweep_{args.axis}.svg", title=f"delay vs {args.axis}")
    for row in table:
        print(f"{row['value']:.6g} {row['policy']}: {row['mean_delay']:.6e}")
    return EXIT_OK


def _solve_payload(data: dict, base_network) -> dict:
    net = network_from_mapping({**base_network.to_dict(), **data.get("network", {})}) \
        if "network" in data else base_network
    if "tasks" in data:
        tasks = np.asarray(data["tasks"], float)
        gains = np.asarray(data["gains"], float)
        net = net.replace(K=len(tasks), M=gains.shape[0])
        if "assignment" in data:
            candidates = [tuple(data["assignment"])]
        else:
            candidates = list(itertools.product(range(net.M), repeat=net.K))
        best = None
        for a in candidates:
            dec, rep = solve_assignment(np.array(a), gains, tasks, net)
            if best is None or rep.slot_delay < best[1].slot_delay:
                best = (dec, rep)
        return {"decision": best[0].to_dict(), "report": best[1].to_dict()}
    if "C" in data and "gain" in data:
        inst = UserInstance.from_config(net, data["C"], data["gain"], data.get("E_mec"))
        sol = solve_single_user_raw(inst, cap=net.R_cap)
        return {"solution": {**vars(sol), "delay": sol.delay}}
    raise ConfigError("instance needs either 'tasks' and 'gains', or 'C' and 'gain'")


def cmd_solve(args) -> int:
    cfg = _experiment(args)
    try:
        data = json.loads(args.instance.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read instance {args.instance}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {args.instance}: {exc}") from exc
    result = _solve_payload(data, cfg.network)
    text = json.dumps(result, indent=2)
    if args.out is not None:
        _out_dir(cfg)
        (Path(cfg.out_dir) / "solution.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = _experiment(args)
    results = checks.run_all(cfg.network, quick=args.quick, seed=cfg.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep, "solve": cmd_solve, "check": cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # surfaced as a runtime failure with exit code 2
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
