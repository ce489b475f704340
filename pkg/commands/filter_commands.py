from typing import Any, Dict

from .experiment_commands import launch


def setup(subparsers):
    """Register the state-space commands."""
    kalman = subparsers.add_parser("kalman", help="Linear-time GP predictions on 1-D inputs.")
    kalman.add_argument("--train", required=True, help="CSV with columns x,y")
    kalman.add_argument("--test", required=True, help="CSV with one column of prediction inputs")
    kalman.add_argument("--out", default="kalman_predictions.csv")
    kalman.add_argument("--gamma", type=float, default=1.0)
    kalman.add_argument("--variance", "--sigma2", type=float, default=1.0)
    kalman.add_argument("--nu", type=float, default=2.5, choices=[0.5, 2.5])
    kalman.add_argument("--nugget", type=float, default=0.0, help="Noise variance relative to --variance")
    kalman.add_argument("--fit", action="store_true", help="Fit gamma, nugget and variance by profile likelihood")
    kalman.add_argument("--noisy", action="store_true")
    kalman.set_defaults(handler=kalman_command)

    compare = subparsers.add_parser("filter-vs-dense", help="Compare the Kalman smoother against the dense GP.")
    compare.add_argument("--n-grid", help="Comma-separated design sizes, e.g. 10,100,1000")
    compare.add_argument("--tolerance", type=float)
    compare.add_argument("--dense-max-n", type=int, help="Skip the dense path above this size")
    compare.set_defaults(handler=filter_vs_dense_command)


def kalman_command(args, app) -> Dict[str, Any]:
    return app.workflows.kalman(args.train, args.test, args.out, args.gamma, args.variance,
                                args.nu, args.nugget, args.fit, args.noisy)


def filter_vs_dense_command(args, app) -> Dict[str, Any]:
    return launch(args, app, "filter-vs-dense", {
        "n_grid": args.n_grid, "tolerance": args.tolerance, "dense_max_n": args.dense_max_n,
    })
