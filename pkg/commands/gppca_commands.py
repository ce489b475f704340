from typing import Any, Dict

from pydantic import ValidationError

from utils.schemas import KernelSpec
from .experiment_commands import launch


def setup(subparsers):
    """Register the factor model commands."""
    gppca = subparsers.add_parser("gppca", help="Shared-covariance GPPCA loadings and factor means.")
    gppca.add_argument("--data", required=True, help="n1 x n2 output matrix as a headerless CSV")
    gppca.add_argument("--inputs", help="CSV with one column of the n2 factor inputs (default: grid on [0, 1])")
    gppca.add_argument("--d", type=int, required=True, help="Number of latent factors")
    gppca.add_argument("--gamma", type=float, default=0.1)
    gppca.add_argument("--nu", type=float, default=2.5, choices=[0.5, 2.5])
    gppca.add_argument("--variance", type=float, default=1.0, help="Factor variance sigma^2")
    gppca.add_argument("--noise", "--sigma0sq", type=float, required=True, help="Noise variance sigma0^2")
    gppca.add_argument("--out", default="gppca", help="Output directory")
    gppca.set_defaults(handler=gppca_command)

    demo = subparsers.add_parser("gppca-demo", help="Recover a known subspace from simulated factor data.")
    demo.add_argument("--n1", type=int)
    demo.add_argument("--n2", type=int)
    demo.add_argument("--d", type=int)
    demo.add_argument("--snr", type=float)
    demo.set_defaults(handler=gppca_demo_command)


def gppca_command(args, app) -> Dict[str, Any]:
    try:
        kernel = KernelSpec(nu=args.nu, gamma=(args.gamma,), variance=args.variance)
    except ValidationError as e:
        print(f"❌ Invalid kernel: {e}")
        return {"success": False, "message": str(e), "error": "Invalid kernel"}
    return app.workflows.gppca(args.data, args.out, args.d, kernel, args.noise, args.inputs)


def gppca_demo_command(args, app) -> Dict[str, Any]:
    return launch(args, app, "gppca-demo", {"n1": args.n1, "n2": args.n2, "d": args.d, "snr": args.snr})
