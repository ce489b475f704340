from typing import Any, Dict, Optional

from utils.errors import ConfigError
from utils.schemas import load_experiment_config


def setup(subparsers):
    """Register the benchmark, table and config-file commands."""
    bench = subparsers.add_parser("bench", help="Time the sparse CG-GP estimator against particle count.")
    bench.add_argument("--n-grid", help="Comma-separated particle counts, e.g. 50,100,200")
    bench.add_argument("--kernel", choices=["lj", "od"])
    bench.add_argument("--design", choices=["uniform", "normal", "log-uniform"])
    bench.add_argument("--L", type=int, help="Recorded frames per run")
    bench.set_defaults(handler=bench_command)

    table = subparsers.add_parser("nrmse-table", help="Replicated NRMSE for every kernel/design/n/L cell.")
    table.add_argument("--kernels", help="Comma-separated subset of lj,od")
    table.add_argument("--designs", help="Comma-separated subset of uniform,normal,log-uniform")
    table.add_argument("--n-grid", help="Comma-separated particle counts")
    table.add_argument("--L-grid", help="Comma-separated frame counts")
    table.add_argument("--replicates", type=int)
    table.set_defaults(handler=nrmse_table_command)

    run = subparsers.add_parser("run", help="Run an experiment described by a key=value config file.")
    run.add_argument("--config", required=True, help="Path to the config file")
    run.add_argument("--experiment", help="Override the experiment named in the file")
    run.set_defaults(handler=run_command)


def launch(args, app, experiment: Optional[str], overrides: Dict[str, Any], config_path: Optional[str] = None) -> Dict[str, Any]:
    """Resolve config file, global flags and command flags, then run the experiment."""
    values = {
        "experiment": experiment,
        "seed": args.seed,
        "out_dir": args.out_dir,
        "threads": args.threads,
        **overrides,
    }
    try:
        cfg = load_experiment_config(config_path, values)
    except ConfigError as e:
        print(f"❌ {e}")
        return {"success": False, "message": str(e), "error": "Invalid configuration"}
    return app.runner.run(cfg)


def bench_command(args, app) -> Dict[str, Any]:
    return launch(args, app, "scaling-bench", {
        "n_grid": args.n_grid, "kernel": args.kernel, "design": args.design, "L": args.L,
    })


def nrmse_table_command(args, app) -> Dict[str, Any]:
    return launch(args, app, "nrmse-table", {
        "kernels": args.kernels, "designs": args.designs, "n_grid": args.n_grid,
        "L_grid": args.L_grid, "replicates": args.replicates,
    })


def run_command(args, app) -> Dict[str, Any]:
    return launch(args, app, args.experiment, {}, config_path=args.config)
