#!/usr/bin/env python3
"""
Marginal GP toolkit

Dense and state-space Gaussian processes, sparse CG-GP estimation of particle
interaction kernels, and shared-covariance GPPCA.

Usage:
    python main.py simulate --kernel lj --design log-uniform --n 50 --L 10
    python main.py estimate --trajectory trajectories.csv --truth lj --with-variance
    python main.py filter-vs-dense --n-grid 10,100,1000
    python main.py nrmse-table --n-grid 50 --L-grid 1 --replicates 3
    python main.py run --config experiments/nrmse.env
"""

import argparse
import sys
from types import SimpleNamespace

from commands import experiment_commands, filter_commands, gp_commands, gppca_commands, particle_commands
from utils.experiment_runner import ExperimentRunner
from utils.file_workflows import DataWorkflows

# ─── Shared Component Instances ─────────────────────────────────────────────

app = SimpleNamespace(
    runner=ExperimentRunner(show_progress=sys.stderr.isatty()),
    workflows=DataWorkflows(),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Marginal GP toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--seed", type=int, help="Root seed for every random draw")
    parser.add_argument("--out-dir", help="Directory for experiment artifacts")
    parser.add_argument("--threads", type=int, help="Worker threads for replicates and variance solves")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # ─── Register Commands ───────────────────────────────────────────────────
    gp_commands.setup(subparsers)
    filter_commands.setup(subparsers)
    particle_commands.setup(subparsers)
    gppca_commands.setup(subparsers)
    experiment_commands.setup(subparsers)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    result = args.handler(args, app)
    return 0 if result.get("success") else 1


if __name__ == "__main__":
    sys.exit(main())
