from typing import Any, Dict

from pydantic import ValidationError

from utils.schemas import KernelSpec
from .experiment_commands import launch


def setup(subparsers):
    """Register the dense GP commands."""
    predict = subparsers.add_parser("gp-predict", help="Dense GP predictions from training and test CSV files.")
    predict.add_argument("--train", required=True, help="CSV with input columns then the output column")
    predict.add_argument("--test", required=True, help="CSV with the prediction inputs")
    predict.add_argument("--out", default="gp_predictions.csv")
    add_kernel_arguments(predict)
    predict.add_argument("--noisy", action="store_true", help="Predict noisy observations instead of the latent function")
    predict.add_argument("--zero-mean", action="store_true", help="Drop the constant mean term")
    predict.add_argument("--fixed-variance", action="store_true", help="Use --variance instead of estimating sigma^2")
    predict.set_defaults(handler=gp_predict_command)

    emulate = subparsers.add_parser("emulate", help="Emulate the Branin function from Latin hypercube designs.")
    emulate.add_argument("--n-grid", help="Comma-separated design sizes")
    emulate.add_argument("--nugget", type=float)
    emulate.add_argument("--test-points", type=int)
    emulate.set_defaults(handler=emulate_command)


def add_kernel_arguments(parser):
    parser.add_argument("--family", choices=["matern", "squared_exponential"], default="matern")
    parser.add_argument("--nu", type=float, default=2.5, help="Matérn roughness, 0.5 or 2.5")
    parser.add_argument("--gamma", default="1.0", help="Range parameter(s), comma-separated per input column")
    parser.add_argument("--variance", type=float, default=1.0)
    parser.add_argument("--nugget", type=float, default=0.0)


def kernel_from_args(args) -> KernelSpec:
    return KernelSpec(family=args.family, nu=args.nu, gamma=args.gamma, variance=args.variance, nugget=args.nugget)


def gp_predict_command(args, app) -> Dict[str, Any]:
    try:
        kernel = kernel_from_args(args)
    except ValidationError as e:
        print(f"❌ Invalid kernel: {e}")
        return {"success": False, "message": str(e), "error": "Invalid kernel"}
    return app.workflows.gp_predict(args.train, args.test, kernel, args.out,
                                    args.noisy, args.zero_mean, args.fixed_variance)


def emulate_command(args, app) -> Dict[str, Any]:
    return launch(args, app, "emulate", {
        "n_grid": args.n_grid, "nugget": args.nugget, "test_points": args.test_points,
    })
