"""Command-line entry point.

    taskalloc simulate CONFIG [--seed S ...] [--out-dir DIR] [--parallel N] [--threshold T]
    taskalloc table CONFIG_DIR [--out-dir DIR] [--parallel N] [--threshold T]
    taskalloc regret CONFIG [--seed S ...] [--out-dir DIR] [--parallel N]
    taskalloc selftest [--instances N] [--seed S]
"""
from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .config import ConfigError, config_files, load_config
from .selftest import run_selftest
from .suite import run_suite, table_ratios


def _override(cfg, args):
    if getattr(args, "threshold", None) is not None:
        if not cfg.optimizer.enabled:
            raise ConfigError(f"{cfg.name}: --threshold needs the optimizer enabled")
        cfg = cfg.with_(threshold=args.threshold)
    return cfg


def _seeds(args):
    return tuple(args.seed) if args.seed else None


def cmd_simulate(args):
    cfg = _override(load_config(args.config), args)
    results = run_suite([cfg], args.out_dir, parallel=args.parallel, seeds=_seeds(args))
    for r in results:
        flag = "" if r.reached else "  (threshold not reached)"
        print(
            f"{r.name} seed={r.seed} rounds={r.rounds} runtime={r.cum_runtime:.6g} "
            f"worker_time={r.cum_worker_time:.6g} -> {r.path}{flag}"
        )
    return 0 if all(r.reached for r in results) else 1


def cmd_table(args):
    configs = [_override(load_config(p), args) for p in config_files(args.config_dir)]
    missing = [c.name for c in configs if c.threshold is None]
    if missing:
        raise ConfigError(f"table needs a stop threshold (config or --threshold); missing in {missing}")
    results = run_suite(configs, args.out_dir, parallel=args.parallel, seeds=_seeds(args))
    table = table_ratios(results)
    table.write(args.out_dir)
    sys.stdout.write(table.to_text())
    for row in table.flagged:
        print(f"error: n={row.n} {row.policy}: {row.note}", file=sys.stderr)
    return 1 if table.flagged else 0


def cmd_regret(args):
    cfg = load_config(args.config)
    results = run_suite([cfg], args.out_dir, parallel=args.parallel, seeds=_seeds(args))
    regret = np.stack([r.data[:, 5] for r in results])  # cum_regret column
    K = regret.shape[1]
    checkpoints = sorted({10**j for j in range(1, int(math.log10(K)) + 1)} | {K})
    print(f"{cfg.name}: {len(results)} seeds, {K} rounds")
    print(f"{'round':>10}{'cum_regret':>14}{'std':>12}{'/ ln k':>10}{'per round':>12}")
    for k in checkpoints:
        col = regret[:, k - 1]
        print(f"{k:>10}{col.mean():>14.2f}{col.std():>12.2f}{col.mean() / math.log(k):>10.2f}{col.mean() / k:>12.5f}")
    return 0


def cmd_selftest(args):
    return 0 if run_selftest(instances=args.instances, seed=args.seed) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="taskalloc", description="Adaptive task allocation simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, threshold=True):
        sp.add_argument("--seed", type=int, action="append", help="seed to run (repeatable); default: config seeds")
        sp.add_argument("--out-dir", default="results", help="directory for CSV output (default: results)")
        sp.add_argument("--parallel", type=int, default=1, help="number of worker processes")
        if threshold:
            sp.add_argument("--threshold", type=float, help="stop each run once f(x) - f* drops below this")

    sp = sub.add_parser("simulate", help="run one config over its seeds")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("table", help="run a directory of configs and build the ratio table")
    sp.add_argument("config_dir")
    common(sp)
    sp.set_defaults(func=cmd_table)

    sp = sub.add_parser("regret", help="run a config and report cumulative regret checkpoints")
    sp.add_argument("config")
    common(sp, threshold=False)
    sp.set_defaults(func=cmd_regret)

    sp = sub.add_parser("selftest", help="RAS optimality and confidence-bound coverage checks")
    sp.add_argument("--instances", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "parallel", 1) < 1:
        print("error: --parallel must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
