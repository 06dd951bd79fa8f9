#!/usr/bin/env python3
"""
netexp command line
Generate networks, draw isolated sets and assignments, select weights and
run Monte Carlo experiments from a JSON config.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from src.assignment import (
    assignment_to_csv,
    bernoulli_assignment,
    cluster_complete_randomization,
    matched_pairs_randomization,
)
from src.config import ExperimentConfig, load_config
from src.generators import generate
from src.graph import DirectedGraph, edge_list_text, load_edge_list
from src.harness import ExperimentRunner, emit_report, run_scaling
from src.isolation import (
    WeightVector,
    random_isolation,
    resolve_weights,
    weighted_random_isolation,
    weights_from_csv,
)
from src.selection import dmax_reweighting, select_weight

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: Optional[str] = None) -> None:
    """Log to stderr (stdout carries reports), plus a file when NETEXP_LOG_FILE is set"""
    level = (level or os.getenv("NETEXP_LOG_LEVEL") or "INFO").upper()
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_file = os.getenv("NETEXP_LOG_FILE")
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT,
                        handlers=handlers, force=True)


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON experiment config")
    shared.add_argument("--seed", type=int, help="master seed (overrides the config)")
    shared.add_argument("--out", help="output file (default: stdout)")
    shared.add_argument("--format", choices=["csv", "markdown"], default="csv")
    shared.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    network_input = argparse.ArgumentParser(add_help=False)
    network_input.add_argument("--network", help="edge-list file (default: generate from the config)")
    network_input.add_argument("--directed", action="store_true", help="treat the edge list as directed")

    parser = argparse.ArgumentParser(description="Isolation designs for experiments under network interference")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("generate-network", parents=[shared], help="write a synthetic network as an edge list")
    gen.add_argument("--model", help="BA, RG, SW, ER or SBM")
    gen.add_argument("--n", type=int, help="number of units")

    iso = commands.add_parser("isolate", parents=[shared, network_input], help="draw one isolated set")
    iso.add_argument("--weights", help="candidate id such as degree^-1, or a unit,weight CSV file")

    sel = commands.add_parser("select-weight", parents=[shared, network_input], help="run adaptive weight selection")
    sel.add_argument("--n-pre", type=int, help="pre-experiment draws per candidate")
    sel.add_argument("--candidates", nargs="+", help="candidate ids (default: degree^l and spectral^l, l=-1..4)")
    sel.add_argument("--mode", choices=["with_cr", "no_cr"])
    sel.add_argument("--workers", type=int)

    asg = commands.add_parser("assign", parents=[shared, network_input], help="draw one treatment assignment")
    asg.add_argument("--design", choices=["cr", "mpr", "bernoulli"], default="cr")
    asg.add_argument("--weights", help="isolation weights (default: uniform random isolation)")
    asg.add_argument("--p", type=float, help="Bernoulli probability (default: config bernoulli_p)")

    for name, text in (("simulate", "run every configured method"), ("scaling", "run methods across network sizes")):
        run = commands.add_parser(name, parents=[shared], help=text)
        run.add_argument("--replications", type=int)
        run.add_argument("--workers", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file, then environment, then command-line overrides"""
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "replications", None) is not None:
        config.replications = args.replications
    if getattr(args, "workers", None) is not None:
        config.workers = args.workers
    if getattr(args, "n_pre", None) is not None:
        config.selection.n_pre = args.n_pre
    if getattr(args, "candidates", None):
        config.selection.candidates = args.candidates
    if getattr(args, "mode", None):
        config.selection.mode = args.mode
    return config.validate()


def load_network(args: argparse.Namespace, config: ExperimentConfig) -> DirectedGraph:
    if getattr(args, "network", None):
        return load_edge_list(Path(args.network).read_text(encoding="utf-8"), directed=args.directed)
    network = config.network
    if network.file:
        return load_edge_list(Path(network.file).read_text(encoding="utf-8"), directed=network.directed)
    return generate(network.model, network.n, network.params, network.seed)


def load_weights(g: DirectedGraph, value: str) -> WeightVector:
    path = Path(value)
    if path.suffix == ".csv" and path.exists():
        return weights_from_csv(path.read_text(encoding="utf-8"), label=path.stem)
    return resolve_weights(g, value)


def cmd_generate_network(args, config: ExperimentConfig) -> str:
    network = config.network
    model = args.model or network.model
    n = args.n or network.n
    params = network.params if model.upper() == network.model.upper() else {}
    seed = args.seed if args.seed is not None else network.seed
    return edge_list_text(generate(model, n, params, seed))


def cmd_isolate(args, config: ExperimentConfig) -> str:
    g = load_network(args, config)
    if args.weights:
        s = weighted_random_isolation(g, load_weights(g, args.weights), config.seed)
    else:
        s = random_isolation(g, config.seed)
    logger.info(f"Isolated {len(s)} of {g.n} units")
    frame = pd.DataFrame({"order": range(len(s)), "unit": list(s.members)})
    return frame.to_csv(index=False, lineterminator="\n")


def cmd_select_weight(args, config: ExperimentConfig) -> str:
    g = load_network(args, config)
    sel = config.selection
    report = select_weight(
        g, sel.candidates, n_pre=sel.n_pre, seed=config.seed, mode=sel.mode,
        l2_scale=dmax_reweighting(g) if sel.dmax_reweight else 1.0,
        common_random_numbers=sel.common_random_numbers, workers=config.workers,
    )
    return report.to_csv()


def cmd_assign(args, config: ExperimentConfig) -> str:
    g = load_network(args, config)
    if args.design == "bernoulli":
        p = args.p if args.p is not None else config.bernoulli_p
        return assignment_to_csv(bernoulli_assignment(g.n, p, config.seed))
    generator = np.random.default_rng(config.seed)
    if args.weights:
        s = weighted_random_isolation(g, load_weights(g, args.weights), generator)
    else:
        s = random_isolation(g, generator)
    if args.design == "mpr":
        assignment = matched_pairs_randomization(g, s, generator)
    else:
        assignment = cluster_complete_randomization(g, s, generator)
    return assignment_to_csv(assignment)


def cmd_simulate(args, config: ExperimentConfig) -> str:
    summaries = ExperimentRunner(config).setup().run_all()
    return emit_report(summaries, args.format)


def cmd_scaling(args, config: ExperimentConfig) -> str:
    return emit_report(run_scaling(config), args.format)


COMMANDS = {
    "generate-network": cmd_generate_network,
    "isolate": cmd_isolate,
    "select-weight": cmd_select_weight,
    "assign": cmd_assign,
    "simulate": cmd_simulate,
    "scaling": cmd_scaling,
}


def write_output(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {out}")
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry; returns the process exit code"""
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = resolve_config(args)
        write_output(COMMANDS[args.command](args, config), args.out)
        return 0
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
