import pytest

from utils.errors import ConfigError
from utils.schemas import (
    EstimatorConfig, FilterVsDenseParams, InitialDesign, KernelSpec, NrmseTableParams, build_experiment_config,
    load_experiment_config,
)


class TestBuildExperimentConfig:

    def test_defaults(self):
        cfg = build_experiment_config({"experiment": "nrmse-table"})
        params = cfg.typed_params()
        assert isinstance(params, NrmseTableParams)
        assert params.n_grid == [50, 200]
        assert cfg.estimator == EstimatorConfig()

    def test_routes_keys(self):
        cfg = build_experiment_config({
            "experiment": "nrmse-table", "seed": "7", "threads": "2",
            "n-grid": "50", "replicates": "3", "tolerance": "1e-8", "max_iter": "100",
        })
        assert cfg.seed == 7 and cfg.threads == 2
        assert cfg.typed_params().n_grid == [50]
        assert cfg.typed_params().replicates == 3
        assert cfg.estimator.tolerance == 1e-8
        assert cfg.estimator.max_iter == 100

    def test_parameter_fields_win_over_estimator_fields(self):
        cfg = build_experiment_config({"experiment": "filter-vs-dense", "gamma": "0.25", "tolerance": "1e-4"})
        params = cfg.typed_params()
        assert isinstance(params, FilterVsDenseParams)
        assert params.gamma == 0.25
        assert params.tolerance == 1e-4
        assert cfg.estimator.gamma == EstimatorConfig().gamma

    def test_comma_separated_lists(self):
        cfg = build_experiment_config({
            "experiment": "kernel-estimation", "kernels": "od", "designs": "uniform, log-uniform", "L_grid": "1,5",
        })
        params = cfg.typed_params()
        assert params.kernels == ["od"]
        assert params.designs == ["uniform", "log-uniform"]
        assert params.L_grid == [1, 5]

    def test_none_values_are_ignored(self):
        cfg = build_experiment_config({"experiment": "forecast", "seed": None})
        assert cfg.seed == build_experiment_config({"experiment": "forecast"}).seed

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            build_experiment_config({"experiment": "forecast", "n_particles": "3"})

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            build_experiment_config({"experiment": "weather"})

    def test_invalid_value(self):
        with pytest.raises(ConfigError):
            build_experiment_config({"experiment": "nrmse-table", "designs": "triangular"})

    def test_invalid_estimator_value(self):
        with pytest.raises(ConfigError):
            build_experiment_config({"experiment": "nrmse-table", "nugget": "-1"})


class TestLoadExperimentConfig:

    def test_file_with_overrides(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("# small table\nexperiment=nrmse-table\nreplicates=2\nseed=3\n")
        cfg = load_experiment_config(str(path), {"seed": 11, "out_dir": str(tmp_path)})
        assert cfg.seed == 11
        assert cfg.out_dir == str(tmp_path)
        assert cfg.typed_params().replicates == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_experiment_config(str(tmp_path / "absent.env"))

    def test_overrides_only(self):
        cfg = load_experiment_config(None, {"experiment": "emulate", "n_grid": "6"})
        assert cfg.typed_params().n_grid == [6]


class TestValueModels:

    def test_kernel_spec_is_frozen(self):
        spec = KernelSpec()
        with pytest.raises(ValueError):
            spec.nu = 0.5

    def test_kernel_spec_rejects_extra_fields(self):
        with pytest.raises(ValueError):
            KernelSpec(lengthscale=1.0)

    def test_kernel_spec_parses_range_string(self):
        assert KernelSpec(gamma="0.5, 2").gamma == (0.5, 2.0)

    @pytest.mark.parametrize("family,a,b", [("uniform", 0.0, 5.0), ("normal", 0.0, 5.0), ("log-uniform", 1e-3, 5.0)])
    def test_design_defaults(self, family, a, b):
        design = InitialDesign(family=family)
        assert (design.a, design.b) == (a, b)

    def test_explicit_design_bounds(self):
        design = InitialDesign(family="uniform", a=-1.0, b=1.0, n=10, D=3)
        assert (design.a, design.b, design.n, design.D) == (-1.0, 1.0, 10, 3)

    @pytest.mark.parametrize("kwargs", [
        {"family": "uniform", "a": 2.0, "b": 1.0},
        {"family": "normal", "b": 0.0},
        {"family": "uniform", "n": 0},
    ])
    def test_invalid_designs(self, kwargs):
        with pytest.raises(ValueError):
            InitialDesign(**kwargs)
