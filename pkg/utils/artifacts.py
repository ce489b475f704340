"""CSV / JSON-lines artifacts, written atomically, plus run manifests."""

import json
import os
import platform
import tempfile
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
import psutil

import config
from .errors import PreconditionError
from .particle_sim import TrajectoryEnsemble

TRACKED_PACKAGES = ["numpy", "scipy", "pandas", "pydantic", "python-dotenv", "tqdm", "psutil"]


def atomic_write_text(path: Path, text: str) -> Path:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    return atomic_write_text(path, frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"))


def write_jsonl(records: Iterable[Dict[str, Any]], path: Path) -> Path:
    lines = [json.dumps(record, sort_keys=True, default=_json_default) for record in records]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_jsonl(path: Path) -> List[Dict[str, Any]]:
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


# ─── Manifest ───────────────────────────────────────────────────────────────

def package_versions() -> Dict[str, str]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def host_info() -> Dict[str, Any]:
    memory = psutil.virtual_memory()
    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "cpu_count_logical": psutil.cpu_count(logical=True),
        "cpu_count_physical": psutil.cpu_count(logical=False),
        "memory_total_gb": round(memory.total / 1024 ** 3, 2),
        "memory_available_gb": round(memory.available / 1024 ** 3, 2),
    }


def write_manifest(out_dir: Path, resolved_config: Dict[str, Any], started: datetime,
                   outputs: Optional[List[str]] = None, status: str = "ok") -> Path:
    """manifest.jsonl: one record each for the config, versions, host and run status."""
    finished = datetime.now(timezone.utc)
    records = [
        {"record": "config", **resolved_config},
        {"record": "versions", **package_versions()},
        {"record": "host", **host_info()},
        {
            "record": "run",
            "status": status,
            "started_utc": started.isoformat(),
            "finished_utc": finished.isoformat(),
            "outputs": sorted(outputs or []),
        },
    ]
    return write_jsonl(records, Path(out_dir) / config.MANIFEST_NAME)


# ─── Data Files ─────────────────────────────────────────────────────────────

def trajectory_frame(traj: TrajectoryEnsemble) -> pd.DataFrame:
    M, L, n, D = traj.positions.shape
    m, l, i = np.meshgrid(np.arange(M), np.arange(L), np.arange(n), indexing="ij")
    columns = {"m": m.ravel(), "l": l.ravel(), "i": i.ravel()}
    for j in range(D):
        columns[f"x{j}"] = traj.positions[..., j].ravel()
    for j in range(D):
        columns[f"v{j}"] = traj.velocities[..., j].ravel()
    return pd.DataFrame(columns)


def write_trajectory_csv(traj: TrajectoryEnsemble, path: Path) -> Path:
    return write_csv(trajectory_frame(traj), path)


def read_trajectory_csv(path: Path, dt: float = config.SIM_DT, noise_variance: float = 0.0) -> TrajectoryEnsemble:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = {"m", "l", "i"} - set(frame.columns)
    if missing:
        raise PreconditionError(f"trajectory file {path} lacks columns {sorted(missing)}")
    x_cols = sorted((c for c in frame.columns if c.startswith("x")), key=lambda c: int(c[1:]))
    v_cols = sorted((c for c in frame.columns if c.startswith("v")), key=lambda c: int(c[1:]))
    if not x_cols or len(x_cols) != len(v_cols):
        raise PreconditionError(f"trajectory file {path} needs matching x*/v* columns")

    frame = frame.sort_values(["m", "l", "i"], kind="stable")
    M, L, n = (int(frame[c].max()) + 1 for c in ("m", "l", "i"))
    if len(frame) != M * L * n:
        raise PreconditionError(f"trajectory file {path} has {len(frame)} rows, expected {M * L * n}")
    D = len(x_cols)
    positions = frame[x_cols].to_numpy(dtype=float).reshape(M, L, n, D)
    velocities = frame[v_cols].to_numpy(dtype=float).reshape(M, L, n, D)
    return TrajectoryEnsemble(positions, velocities, dt, noise_variance)


def read_training_csv(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """Training data: input columns first, output in the last column."""
    frame = pd.read_csv(path, float_precision="round_trip")
    if frame.shape[1] < 2:
        raise PreconditionError(f"{path} needs at least one input column and one output column")
    values = frame.to_numpy(dtype=float)
    return values[:, :-1], values[:, -1]


def read_matrix_csv(path: Path) -> np.ndarray:
    return pd.read_csv(path, header=None, float_precision="round_trip").to_numpy(dtype=float)
