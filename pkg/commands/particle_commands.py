from typing import Any, Dict

from pydantic import ValidationError

import config
from utils.schemas import EstimatorConfig, InitialDesign
from .experiment_commands import launch


def setup(subparsers):
    """Register the particle simulation and kernel estimation commands."""
    simulate = subparsers.add_parser("simulate", help="Simulate particle trajectories to a CSV file.")
    simulate.add_argument("--kernel", choices=["lj", "od"], default="lj")
    simulate.add_argument("--design", choices=["uniform", "normal", "log-uniform"], default="uniform")
    simulate.add_argument("--a", type=float, help="Design lower bound (mean for the normal design)")
    simulate.add_argument("--b", type=float, help="Design upper bound (variance for the normal design)")
    simulate.add_argument("--n", type=int, default=50, help="Particles per run")
    simulate.add_argument("--D", type=int, default=config.SIM_DIMENSION, help="Spatial dimension")
    simulate.add_argument("--L", type=int, default=1, help="Recorded frames per run")
    simulate.add_argument("--M", type=int, default=1, help="Independent runs")
    simulate.add_argument("--dt", type=float, default=config.SIM_DT)
    simulate.add_argument("--record-every", type=int, default=config.SIM_RECORD_EVERY,
                          help="Euler steps between recorded frames")
    simulate.add_argument("--noise", type=float, default=config.SIM_NOISE, help="Velocity noise variance")
    simulate.add_argument("--seed", dest="sim_seed", type=int, help="Root seed (overrides the global --seed)")
    simulate.add_argument("--out", default="trajectories.csv")
    simulate.set_defaults(handler=simulate_command)

    estimate = subparsers.add_parser("estimate", help="Estimate the interaction kernel from a trajectory CSV.")
    estimate.add_argument("--trajectory", required=True)
    estimate.add_argument("--out", default="kernel_estimate.csv")
    estimate.add_argument("--gamma", type=float, default=config.PHI_GAMMA)
    estimate.add_argument("--nugget", "--eta", type=float, default=config.PHI_NUGGET)
    estimate.add_argument("--tolerance", "--tol", type=float, default=config.CG_TOLERANCE)
    estimate.add_argument("--max-iter", type=int, default=config.CG_MAX_ITER)
    estimate.add_argument("--preconditioner", choices=["pivoted-cholesky", "jacobi", "none"],
                          default=config.CG_PRECONDITIONER)
    estimate.add_argument("--preconditioner-rank", type=int, default=config.CG_PRECONDITIONER_RANK)
    estimate.add_argument("--points", "--grid-points", type=int, default=config.GRID_POINTS)
    estimate.add_argument("--d-min", "--grid-min", type=float)
    estimate.add_argument("--d-max", "--grid-max", type=float)
    estimate.add_argument("--with-variance", "--variance", action="store_true", help="Also compute 95%% bands")
    estimate.add_argument("--truth", choices=["lj", "od"], help="Report NRMSE against a known kernel")
    estimate.set_defaults(handler=estimate_command)

    forecast = subparsers.add_parser("forecast", help="Estimate a kernel, then roll out a held-out start.")
    forecast.add_argument("--kernel", choices=["lj", "od"])
    forecast.add_argument("--design", choices=["uniform", "normal", "log-uniform"])
    forecast.add_argument("--n", type=int)
    forecast.add_argument("--train-steps", type=int)
    forecast.add_argument("--steps", type=int)
    forecast.add_argument("--inject-truth", action="store_true", default=None,
                          help="Forecast with the true kernel")
    forecast.set_defaults(handler=forecast_command)

    kernels = subparsers.add_parser("kernel-estimation", help="Kernel estimates with bands for every kernel and design.")
    kernels.add_argument("--n", type=int)
    kernels.add_argument("--L-grid", help="Comma-separated frame counts")
    kernels.add_argument("--variance-points", type=int)
    kernels.set_defaults(handler=kernel_estimation_command)


def simulate_command(args, app) -> Dict[str, Any]:
    seed = next((s for s in (args.sim_seed, args.seed) if s is not None), config.DEFAULT_SEED)
    try:
        design = InitialDesign(family=args.design, a=args.a, b=args.b, n=args.n, D=args.D, seed=seed)
    except ValidationError as e:
        print(f"❌ Invalid initial design: {e}")
        return {"success": False, "message": str(e), "error": "Invalid design"}
    return app.workflows.simulate(args.kernel, design, args.L, args.M, args.dt, args.noise, seed, args.out,
                                  args.record_every)


def estimate_command(args, app) -> Dict[str, Any]:
    try:
        estimator = EstimatorConfig(gamma=args.gamma, nugget=args.nugget, tolerance=args.tolerance,
                                    max_iter=args.max_iter, preconditioner=args.preconditioner,
                                    preconditioner_rank=args.preconditioner_rank)
    except ValidationError as e:
        print(f"❌ Invalid estimator settings: {e}")
        return {"success": False, "message": str(e), "error": "Invalid estimator"}
    threads = args.threads or config.DEFAULT_THREADS
    return app.workflows.estimate(args.trajectory, estimator, args.out, args.d_min, args.d_max, args.points,
                                  args.with_variance, args.truth, threads)


def forecast_command(args, app) -> Dict[str, Any]:
    return launch(args, app, "forecast", {
        "kernel": args.kernel, "design": args.design, "n": args.n,
        "train_steps": args.train_steps, "steps": args.steps, "inject_truth": args.inject_truth,
    })


def kernel_estimation_command(args, app) -> Dict[str, Any]:
    return launch(args, app, "kernel-estimation", {
        "n": args.n, "L_grid": args.L_grid, "variance_points": args.variance_points,
    })
