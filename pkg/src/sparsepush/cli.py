"""Command line entry point.

    sparsepush run CONFIG [--seed N] [--output DIR] [--jobs N] [--workers N] [--epochs N]
    sparsepush validate CONFIG
    sparsepush plot-data SWEEP_CSV [--output PATH]
    sparsepush consensus-demo --nodes N --rounds R [--eta E] [--seed S] [--dim D]

Exit status is 0 on success, 2 for invalid configs or inputs and 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import BACKEND, __version__
from .consensus import gossip_average
from .errors import ConfigError, FormatError, InvalidArgument, NumericalFailure
from .harness import apply_overrides, emit_plot_data, expand_cells, load_config, run_experiment
from .topology import GraphSchedule, build_directed_ring, build_topology, four_node_graphs

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    cfg = apply_overrides(
        cfg, seed=args.seed, output_dir=args.output, jobs=args.jobs, workers=args.workers, epochs=args.epochs
    )
    path = run_experiment(cfg)
    print(path)
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    cells = expand_cells(cfg)
    print(f"ok: {len(cells)} cell(s), {cfg.partition.n_nodes} nodes, {cfg.train.epochs} epochs")
    return EXIT_OK


def _cmd_plot_data(args: argparse.Namespace) -> int:
    print(emit_plot_data(args.sweep_csv, args.output))
    return EXIT_OK


def _cmd_consensus_demo(args: argparse.Namespace) -> int:
    if args.nodes < 1 or args.rounds < 0 or args.dim < 1:
        raise InvalidArgument("--nodes and --dim must be >= 1 and --rounds >= 0")
    if args.rotating:
        if args.nodes != 4:
            raise InvalidArgument("--rotating uses the fixed 4-node graphs; pass --nodes 4")
        g = four_node_graphs()
        schedule = GraphSchedule((g["a"], g["b"], g["c"]))
    elif args.nodes == 1:
        schedule = GraphSchedule.static(build_topology({"kind": "single"}))
    else:
        schedule = GraphSchedule.static(build_directed_ring(args.nodes))
    rng = np.random.default_rng(args.seed)
    initial = list(rng.standard_normal((args.nodes, args.dim)))
    trace: list = []
    gossip_average(initial, schedule, args.eta, args.rounds, trace=trace)
    print("round,max_error,min_u,max_u")
    for r in range(args.rounds):
        rows = trace[r * args.nodes : (r + 1) * args.nodes]
        us = [u for _, _, u, _ in rows]
        err = max(e for _, _, _, e in rows)
        print(f"{r + 1},{err:.6e},{min(us):.6f},{max(us):.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsepush", description="Compressed push-sum training experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every cell of an experiment config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="overrides seed")
    p.add_argument("--output", help="overrides output_dir")
    p.add_argument("--jobs", type=int, help="overrides jobs (cells run concurrently)")
    p.add_argument("--workers", type=int, help="overrides train.workers (threads per cell)")
    p.add_argument("--epochs", type=int, help="overrides train.epochs")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="check a config and report the sweep size")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("plot-data", help="aggregate sweep.csv into a tidy accuracy table")
    p.add_argument("sweep_csv")
    p.add_argument("--output", help="destination (default: plot_data.csv next to the sweep)")
    p.set_defaults(func=_cmd_plot_data)

    p = sub.add_parser("consensus-demo", help="push-sum averaging of random vectors on a directed ring")
    p.add_argument("--nodes", type=int, default=4)
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--rotating", action="store_true", help="cycle through the three 4-node graphs")
    p.set_defaults(func=_cmd_consensus_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, FormatError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
