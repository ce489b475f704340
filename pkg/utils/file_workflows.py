import time
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

import config
from .artifacts import (
    read_matrix_csv, read_training_csv, read_trajectory_csv, write_csv, write_jsonl, write_trajectory_csv,
)
from .dense_gp import GpModel, gp_predict
from .distance_index import build_distance_index
from .errors import MarginalError, PreconditionError
from .gppca import factor_covariance, factor_posterior, gppca_shared
from .particle_sim import KERNEL_GRIDS, get_kernel, simulate_ensemble
from .schemas import EstimatorConfig, InitialDesign, KernelSpec
from .sparse_cg_gp import nrmse, predict_phi
from .state_space import StateSpaceGP, fit_parameters


class DataWorkflows:
    """File-in, file-out operations behind the single-purpose subcommands.

    Each method returns:
    {
        "success": bool,
        "message": str,
        "error": str (on failure),
        "outputs": List[str],
        "summary": Dict[str, Any]
    }
    """

    def _failure(self, action: str, error: Exception) -> Dict[str, Any]:
        message = f"{action} failed: {error}"
        print(f"❌ {message}")
        return {"success": False, "message": message, "error": type(error).__name__, "outputs": [], "summary": {}}

    # ─── Particle Systems ────────────────────────────────────────────────────

    def simulate(self, kernel: str, design: InitialDesign, L: int, M: int, dt: float,
                 noise: float, seed: int, out_path: Path,
                 record_every: int = config.SIM_RECORD_EVERY) -> Dict[str, Any]:
        """Simulate M runs of L recorded frames and write them as one trajectory CSV.

        Args:
            kernel: Name of the true interaction kernel ("lj" or "od")
            design: Distribution of the initial positions
            L: Recorded frames per run
            M: Number of independent runs
            dt: Euler step size
            noise: Variance of the Gaussian noise added to recorded velocities
            seed: Root seed; run m uses the m-th spawned child
            out_path: Destination CSV
            record_every: Euler steps between recorded frames

        Returns:
            Result dictionary; ``summary`` holds the trajectory dimensions
        """
        try:
            traj = simulate_ensemble(design, get_kernel(kernel), M, L, dt, noise, seed=seed, record_every=record_every)
            path = write_trajectory_csv(traj, out_path)
        except MarginalError as e:
            return self._failure("Simulation", e)
        print(f"✅ Simulated {M} run(s) of {design.n} particles over {L} frames -> {path}")
        return {
            "success": True,
            "message": f"Wrote {traj.N} velocity components to {path}",
            "outputs": [str(path)],
            "summary": {"M": traj.M, "L": traj.L, "n": traj.n, "D": traj.D, "N": traj.N},
        }

    def estimate(self, trajectory_path: Path, estimator: EstimatorConfig, out_path: Path,
                 d_min: Optional[float] = None, d_max: Optional[float] = None, points: int = config.GRID_POINTS,
                 with_variance: bool = False, truth: Optional[str] = None, threads: int = 1) -> Dict[str, Any]:
        """Estimate the interaction kernel from a trajectory CSV.

        Writes the estimate on a grid (with 95% bands when ``with_variance``)
        and a ``diagnostics.jsonl`` next to it with the CG statistics.
        """
        try:
            # Step 1: Load the trajectories and index the pairwise distances
            traj = read_trajectory_csv(trajectory_path)
            idx = build_distance_index(traj, estimator.gamma)
            print(f"📊 {idx.N} velocity components, {idx.n_unique} distinct distances")

            # Step 2: Choose the evaluation grid
            lo, hi = KERNEL_GRIDS[truth] if truth else (0.0, float(idx.d_s[-1]))
            grid = np.linspace(lo if d_min is None else d_min, hi if d_max is None else d_max, points)

            # Step 3: Solve and evaluate
            started = time.perf_counter()
            estimate = predict_phi(idx, estimator, traj.velocity_vector(), grid, with_variance, threads)
            print(f"⏱️ CG converged in {estimate.iterations} iterations ({time.perf_counter() - started:.2f}s)")
        except MarginalError as e:
            return self._failure("Kernel estimation", e)

        frame = pd.DataFrame({"d": grid, "mean": estimate.mean})
        if estimate.variance is not None:
            half_width = 1.96 * np.sqrt(estimate.variance)
            frame["variance"] = estimate.variance
            frame["lower"] = estimate.mean - half_width
            frame["upper"] = estimate.mean + half_width
        summary: Dict[str, Any] = {"iterations": estimate.iterations, "residual": estimate.residual}
        if truth:
            phi = get_kernel(truth)
            frame["truth"] = phi(grid)
            summary["nrmse"] = nrmse(estimate, phi)
            print(f"📊 NRMSE against the {truth} kernel: {summary['nrmse']:.4g}")

        out_path = Path(out_path)
        path = write_csv(frame, out_path)
        diag_path = write_jsonl([{"trajectory": str(trajectory_path), **estimate.diagnostics}],
                                out_path.parent / config.DIAGNOSTICS_NAME)
        return {
            "success": True,
            "message": f"Kernel estimate on {points} distances written to {path}",
            "outputs": [str(path), str(diag_path)],
            "summary": summary,
        }

    # ─── Gaussian Process Regression ─────────────────────────────────────────

    def gp_predict(self, train_path: Path, test_path: Path, kernel: KernelSpec, out_path: Path,
                   noisy: bool = False, zero_mean: bool = False, fixed_variance: bool = False) -> Dict[str, Any]:
        """Dense GP predictive distribution at the inputs listed in ``test_path``."""
        try:
            X, y = read_training_csv(train_path)
            X_star = pd.read_csv(test_path, float_precision="round_trip").to_numpy(float)
            model = GpModel(kernel, X, y, zero_mean=zero_mean, estimate_variance=not fixed_variance)
            pred = gp_predict(model, X_star, noisy=noisy)
        except MarginalError as e:
            return self._failure("GP prediction", e)

        frame = pd.DataFrame(X_star, columns=[f"x{j}" for j in range(X_star.shape[1])])
        frame["mean"] = pred.mean
        frame["variance"] = pred.variance
        if pred.df is not None:
            frame["df"] = pred.df
        path = write_csv(frame, out_path)
        kind = f"Student-t with {pred.df} degrees of freedom" if pred.df is not None else "Gaussian"
        print(f"✅ {kind} predictions at {len(frame)} inputs -> {path}")
        return {"success": True, "message": f"Predictions written to {path}", "outputs": [str(path)],
                "summary": {"N": model.N, "df": pred.df}}

    def kalman(self, train_path: Path, test_path: Path, out_path: Path, gamma: float = 1.0,
               variance: float = 1.0, nu: float = 2.5, nugget: float = 0.0, fit: bool = False,
               noisy: bool = False) -> Dict[str, Any]:
        """Linear-time GP prediction on 1-D inputs through the state-space form.

        With ``fit`` the range and nugget are chosen by maximizing the profile
        likelihood; otherwise ``sigma0^2 = nugget * variance``.
        """
        try:
            x, y = read_training_csv(train_path)
            if x.shape[1] != 1:
                raise PreconditionError(f"the state-space path needs one input column, got {x.shape[1]}")
            x = x[:, 0]
            summary: Dict[str, Any] = {}
            if fit:
                summary = fit_parameters(x, y, nu)
                gamma, variance, nugget = summary["gamma"], summary["variance"], summary["nugget"]
                print(f"📊 Fitted gamma={gamma:.4g}, nugget={nugget:.3g}, variance={variance:.4g}")
            x_star = pd.read_csv(test_path, float_precision="round_trip").to_numpy(float)[:, 0]
            gp = StateSpaceGP(x, y, gamma, variance, nu, nugget * variance)
            pred = gp.predict(x_star, noisy=noisy)
            summary["log_likelihood"] = gp.log_likelihood()
        except MarginalError as e:
            return self._failure("State-space prediction", e)

        path = write_csv(pd.DataFrame({"x": x_star, "mean": pred.mean, "variance": pred.variance}), out_path)
        print(f"✅ Kalman smoother predictions at {x_star.size} inputs -> {path}")
        return {"success": True, "message": f"Predictions written to {path}", "outputs": [str(path)],
                "summary": summary}

    # ─── Factor Models ───────────────────────────────────────────────────────

    def gppca(self, data_path: Path, out_dir: Path, d: int, kernel: KernelSpec, sigma0sq: float,
              inputs_path: Optional[Path] = None) -> Dict[str, Any]:
        """Estimate shared-covariance GPPCA loadings and the factor posterior means.

        ``data_path`` holds the n1 × n2 output matrix without a header; the
        factor inputs default to an equally spaced grid on [0, 1].
        """
        try:
            Y = read_matrix_csv(data_path)
            n2 = Y.shape[1]
            x = pd.read_csv(inputs_path, float_precision="round_trip").to_numpy(float)[:, 0] if inputs_path else np.linspace(0.0, 1.0, n2)
            if x.size != n2:
                raise PreconditionError(f"{x.size} factor inputs for {n2} columns of Y")
            Sigma = factor_covariance(kernel, x)
            A = gppca_shared(Y, Sigma, sigma0sq, d)
            means = np.vstack([factor_posterior(Y, A, Sigma, sigma0sq, l)[0] for l in range(d)])
        except MarginalError as e:
            return self._failure("GPPCA", e)

        out_dir = Path(out_dir)
        loadings = write_csv(pd.DataFrame(A, columns=[f"a{l}" for l in range(d)]), out_dir / "loadings.csv")
        factors = write_csv(pd.DataFrame({"x": x, **{f"factor{l}": means[l] for l in range(d)}}),
                            out_dir / "factor_means.csv")
        print(f"✅ {d} loading vector(s) and factor means -> {out_dir}")
        return {"success": True, "message": f"GPPCA results written to {out_dir}",
                "outputs": [str(loadings), str(factors)], "summary": {"n1": Y.shape[0], "n2": n2, "d": d}}

