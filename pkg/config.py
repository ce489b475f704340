import os
from dotenv import load_dotenv

# Environment (and an optional .env file) overrides the defaults below
load_dotenv(override=True)  # override=True lets a .env file win over the shell


def _float(name: str, default: float) -> float:
    return float(os.getenv(name, default))


def _int(name: str, default: int) -> int:
    return int(os.getenv(name, default))


# ─── Run Settings ───────────────────────────────────────────────────────────
OUT_DIR = os.getenv("MARGINAL_OUT_DIR", "runs")
DEFAULT_SEED = _int("MARGINAL_SEED", 20230101)
DEFAULT_THREADS = _int("MARGINAL_THREADS", 1)
MANIFEST_NAME = "manifest.jsonl"
DIAGNOSTICS_NAME = "diagnostics.jsonl"

# ─── Interaction Kernel Prior (sparse CG-GP) ────────────────────────────────
PHI_GAMMA = _float("PHI_GAMMA", 5.0)        # range of the exponential prior on phi
PHI_NUGGET = _float("PHI_NUGGET", 1e-5)     # eta = sigma0^2 / sigma^2
PHI_VARIANCE = _float("PHI_VARIANCE", 1.0)
CG_TOLERANCE = _float("CG_TOLERANCE", 1e-6)
CG_VARIANCE_TOLERANCE = _float("CG_VARIANCE_TOLERANCE", 1e-10)
CG_MAX_ITER = _int("CG_MAX_ITER", 3000)
CG_PRECONDITIONER = os.getenv("CG_PRECONDITIONER", "pivoted-cholesky")  # or jacobi, none
CG_PRECONDITIONER_RANK = _int("CG_PRECONDITIONER_RANK", 1500)
PRECONDITIONER_STOP = 1.0  # pivoting stops once the remaining diagonal is below this times eta
TIE_RELATIVE_TOLERANCE = 1e-12  # sorted distances closer than this are one entry
VARIANCE_CLAMP_TOLERANCE = 1e-8  # negative variances above -tol*sigma^2 clamp to 0
PREFIX_SUM_MAX_SPAN = 600.0      # span/gamma beyond which scaled exponentials underflow

# ─── Particle Simulation ────────────────────────────────────────────────────
SIM_DT = _float("SIM_DT", 0.01)
SIM_NOISE = _float("SIM_NOISE", 0.0)  # sigma0^2 on recorded velocities
SIM_DIMENSION = _int("SIM_DIMENSION", 2)
SIM_RECORD_EVERY = _int("SIM_RECORD_EVERY", 1)  # Euler steps between recorded frames

# Initial-position designs: (a, b) per family
UNIFORM_DESIGN = (0.0, 5.0)       # U[a, b]
NORMAL_DESIGN = (0.0, 5.0)        # N(a, b), b is the variance
LOG_UNIFORM_DESIGN = (1e-3, 5.0)  # reciprocal distribution on [a, b]

# ─── Kernel Test Grids ──────────────────────────────────────────────────────
LJ_GRID = (0.0, 5.0)
OD_GRID = (0.0, 1.5)
GRID_POINTS = 1000
NRMSE_REPLICATES = 10

# ─── Filter vs Dense Comparison ─────────────────────────────────────────────
FILTER_GAMMA = 0.5
FILTER_NUGGET = 1e-4
FILTER_NOISE_SD = 0.1
FILTER_DOMAIN = (0.5, 2.5)
FILTER_TOLERANCE = 1e-8
FILTER_TEST_POINTS = 100
DENSE_MAX_N = _int("DENSE_MAX_N", 5000)  # skip the O(N^3) path above this

# ─── Scaling Bench ──────────────────────────────────────────────────────────
BENCH_DENSE_MAX_N = _int("BENCH_DENSE_MAX_N", 150)    # dense R_v assembly cap
BENCH_DENSE_SOLVE_MAX_N = 30                          # dense phi-hat comparison cap
BENCH_SLOPE_LIMIT = 2.5

# ─── Forecast ───────────────────────────────────────────────────────────────
FORECAST_TRAIN_N = 50
FORECAST_TRAIN_STEPS = 20
FORECAST_STEPS = 200

# ─── GPPCA Demo ─────────────────────────────────────────────────────────────
GPPCA_GAMMA = 0.1
GPPCA_SNR = 100.0
