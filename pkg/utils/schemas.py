"""Validated parameter types and experiment configuration parsing."""

from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Type

from dotenv import dotenv_values
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator, model_validator

import config
from .errors import ConfigError


def _split_list(value: Any) -> Any:
    """Accept ``"1,2,3"`` from key-value files as well as real sequences."""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    if isinstance(value, (int, float)):
        return [value]
    return value


IntList = Annotated[List[int], BeforeValidator(_split_list)]
FloatTuple = Annotated[Tuple[float, ...], BeforeValidator(_split_list)]
DesignName = Literal["uniform", "normal", "log-uniform"]
DesignList = Annotated[List[DesignName], BeforeValidator(_split_list)]
KernelName = Literal["lj", "od"]
KernelList = Annotated[List[KernelName], BeforeValidator(_split_list)]


class KernelSpec(BaseModel):
    """Correlation family with one range parameter per input dimension."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    family: Literal["matern", "squared_exponential"] = "matern"
    nu: float = 2.5
    gamma: FloatTuple = (1.0,)
    variance: float = Field(1.0, gt=0)
    nugget: float = Field(0.0, ge=0)

    @field_validator("gamma")
    @classmethod
    def _positive_ranges(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(value) == 0:
            raise ValueError("at least one range parameter is required")
        if any(not g > 0 for g in value):
            raise ValueError(f"range parameters must be > 0, got {value}")
        return value

    @model_validator(mode="after")
    def _supported_roughness(self) -> "KernelSpec":
        if self.family == "matern" and self.nu not in (0.5, 2.5):
            raise ValueError(f"roughness nu must be 1/2 or 5/2, got {self.nu}")
        return self


class EstimatorConfig(BaseModel):
    """Hyperparameters and CG controls of the interaction-kernel estimator."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma: float = Field(config.PHI_GAMMA, gt=0)
    nugget: float = Field(config.PHI_NUGGET, ge=0)
    variance: float = Field(config.PHI_VARIANCE, gt=0)
    tolerance: float = Field(config.CG_TOLERANCE, gt=0)
    variance_tolerance: float = Field(config.CG_VARIANCE_TOLERANCE, gt=0)
    max_iter: int = Field(config.CG_MAX_ITER, ge=1)
    preconditioner: Literal["pivoted-cholesky", "jacobi", "none"] = config.CG_PRECONDITIONER
    preconditioner_rank: int = Field(config.CG_PRECONDITIONER_RANK, ge=0)


class InitialDesign(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    family: DesignName = "uniform"
    a: float
    b: float
    n: int = Field(50, ge=1)
    D: int = Field(config.SIM_DIMENSION, ge=1)
    seed: Optional[int] = None

    @model_validator(mode="before")
    @classmethod
    def _family_defaults(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            family = data.get("family", "uniform")
            defaults = {
                "uniform": config.UNIFORM_DESIGN,
                "normal": config.NORMAL_DESIGN,
                "log-uniform": config.LOG_UNIFORM_DESIGN,
            }.get(family, (None, None))
            if data.get("a") is None:
                data["a"] = defaults[0]
            if data.get("b") is None:
                data["b"] = defaults[1]
        return data

    @model_validator(mode="after")
    def _valid_parameters(self) -> "InitialDesign":
        if self.family == "log-uniform" and self.a <= 0:
            raise ValueError(f"log-uniform design requires a > 0, got a={self.a}")
        if self.family in ("uniform", "log-uniform") and self.b <= self.a:
            raise ValueError(f"design requires a < b, got a={self.a}, b={self.b}")
        if self.family == "normal" and self.b <= 0:
            raise ValueError(f"normal design variance must be > 0, got b={self.b}")
        return self


# ─── Per-Experiment Parameters ──────────────────────────────────────────────

class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FilterVsDenseParams(_Params):
    n_grid: IntList = [10, 100, 1000]
    gamma: float = Field(config.FILTER_GAMMA, gt=0)
    nugget: float = Field(config.FILTER_NUGGET, ge=0)
    nu: float = 2.5
    noise_sd: float = Field(config.FILTER_NOISE_SD, ge=0)
    test_points: int = Field(config.FILTER_TEST_POINTS, ge=1)
    tolerance: float = Field(config.FILTER_TOLERANCE, gt=0)
    dense_max_n: int = Field(config.DENSE_MAX_N, ge=1)


class ScalingBenchParams(_Params):
    n_grid: IntList = [50, 100, 200]
    kernel: KernelName = "lj"
    design: DesignName = "log-uniform"
    D: int = Field(2, ge=1)
    L: int = Field(1, ge=1)
    M: int = Field(1, ge=1)
    grid_points: int = Field(200, ge=1)
    dense_max_n: int = Field(config.BENCH_DENSE_MAX_N, ge=2)
    dense_solve_max_n: int = Field(config.BENCH_DENSE_SOLVE_MAX_N, ge=2)
    slope_limit: float = Field(config.BENCH_SLOPE_LIMIT, gt=0)


class KernelEstimationParams(_Params):
    kernels: KernelList = ["lj", "od"]
    designs: DesignList = ["uniform", "normal", "log-uniform"]
    n: int = Field(50, ge=2)
    L_grid: IntList = [1, 10]
    D: int = Field(2, ge=1)
    grid_points: int = Field(200, ge=1)
    variance_points: int = Field(50, ge=0)


class NrmseTableParams(_Params):
    kernels: KernelList = ["lj", "od"]
    designs: DesignList = ["uniform", "normal", "log-uniform"]
    n_grid: IntList = [50, 200]
    L_grid: IntList = [1, 10]
    D: int = Field(2, ge=1)
    replicates: int = Field(config.NRMSE_REPLICATES, ge=1)
    grid_points: int = Field(config.GRID_POINTS, ge=2)


class ForecastParams(_Params):
    kernel: KernelName = "od"
    design: DesignName = "log-uniform"
    n: int = Field(config.FORECAST_TRAIN_N, ge=2)
    D: int = Field(2, ge=1)
    train_steps: int = Field(config.FORECAST_TRAIN_STEPS, ge=1)
    steps: int = Field(config.FORECAST_STEPS, ge=1)
    inject_truth: bool = False


class GppcaDemoParams(_Params):
    n1: int = Field(8, ge=1)
    n2: int = Field(200, ge=2)
    d: int = Field(2, ge=1)
    gamma: float = Field(config.GPPCA_GAMMA, gt=0)
    nu: float = 2.5
    snr: float = Field(config.GPPCA_SNR, gt=0)
    competitors: int = Field(50, ge=0)


class EmulateParams(_Params):
    n_grid: IntList = [12, 24]
    gamma: FloatTuple = (5.0, 5.0)
    nu: float = 2.5
    nugget: float = Field(0.0, ge=0)
    test_points: int = Field(500, ge=1)


PARAMS_MODELS: Dict[str, Type[_Params]] = {
    "filter-vs-dense": FilterVsDenseParams,
    "scaling-bench": ScalingBenchParams,
    "kernel-estimation": KernelEstimationParams,
    "nrmse-table": NrmseTableParams,
    "forecast": ForecastParams,
    "gppca-demo": GppcaDemoParams,
    "emulate": EmulateParams,
}

ExperimentName = Literal[
    "filter-vs-dense", "scaling-bench", "kernel-estimation",
    "nrmse-table", "forecast", "gppca-demo", "emulate",
]


class ExperimentConfig(BaseModel):
    """Fully resolved experiment: name, globals, estimator settings and parameters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: ExperimentName
    out_dir: str = config.OUT_DIR
    seed: int = config.DEFAULT_SEED
    threads: int = Field(config.DEFAULT_THREADS, ge=1)
    dt: float = Field(config.SIM_DT, gt=0)
    record_every: int = Field(config.SIM_RECORD_EVERY, ge=1)
    noise: float = Field(config.SIM_NOISE, ge=0)
    estimator: EstimatorConfig = EstimatorConfig()
    params: Dict[str, Any] = {}

    def typed_params(self) -> _Params:
        return PARAMS_MODELS[self.experiment](**self.params)


_GLOBAL_KEYS = {"experiment", "out_dir", "seed", "threads", "dt", "record_every", "noise"}
_ESTIMATOR_KEYS = set(EstimatorConfig.model_fields)


def build_experiment_config(values: Dict[str, Any]) -> ExperimentConfig:
    """Split a flat key-value mapping into globals, estimator settings and params.

    Keys naming a field of the experiment's parameter model go to the
    parameters even when the estimator has a field of the same name
    (``gamma`` of filter-vs-dense is the GP range, not the phi-prior range).

    Args:
        values: Flat mapping, e.g. from a config file merged with CLI flags

    Returns:
        Validated ExperimentConfig whose params also validate against the
        experiment's parameter model

    Raises:
        ConfigError: on unknown keys or invalid values
    """
    cleaned = {k.strip().replace("-", "_"): v for k, v in values.items() if v is not None}
    name = cleaned.get("experiment")
    param_fields = set(PARAMS_MODELS[name].model_fields) if name in PARAMS_MODELS else set()

    globals_: Dict[str, Any] = {}
    estimator: Dict[str, Any] = {}
    params: Dict[str, Any] = {}
    for key, value in cleaned.items():
        if key in _GLOBAL_KEYS:
            globals_[key] = value
        elif key in param_fields:
            params[key] = value
        elif key in _ESTIMATOR_KEYS:
            estimator[key] = value
        else:
            params[key] = value  # rejected below by extra="forbid"
    try:
        cfg = ExperimentConfig(**globals_, estimator=EstimatorConfig(**estimator), params=params)
        cfg.typed_params()
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
    return cfg


def load_experiment_config(path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Read a ``key=value`` file and apply command-line overrides on top."""
    values: Dict[str, Any] = {}
    if path:
        if not Path(path).is_file():
            raise ConfigError(f"Config file not found: {path}")
        values.update({k: v for k, v in dotenv_values(path).items() if v is not None})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_experiment_config(values)
