"""Tests for experiment config files and macro expressions."""

import numpy as np
import pytest

from app.errors import ConfigError
from app.models import ExpansionConfig, ExpansionExperiment, FluxMode, ScaleSchedule
from pipeline.config_file import (
    compile_expression,
    load_expansion,
    load_experiments,
    load_macro,
    to_macro_config,
)
from tests.conftest import write_ini

CONVERGENCE_INI = """
[convergence.periodic]
coefficient = periodic-1d
eta = 0.01
q = 6
output = fig1-left.csv

[convergence.local]
coefficient = locally-periodic-1d
sweep_var = eps
eps = 0.005, 0.0025, 0.00125, 0.000625
fit_points = 3
label = lp
output = fig1-left.csv

[convergence.coupled]
coefficient = periodic-2d
dim = 2
r0 = 0, 0
slope = 1, 0
schedule = coupled
beta = 0.2
"""

MACRO_INI = """
[macro]
coefficient = constant
H = 0.1
T = 0.4
initial = sin(pi*x)
exact = sin(pi*x)*cos(pi*t)
snapshot_times = 0, 0.2
"""


class TestLoadExperiments:
    def test_sections_in_file_order(self, tmp_path):
        configs = load_experiments(write_ini(tmp_path / "exp.ini", CONVERGENCE_INI))
        assert [c.name for c in configs] == [
            "convergence.periodic",
            "convergence.local",
            "convergence.coupled",
        ]
        assert [c.label for c in configs] == ["periodic", "lp", "coupled"]

    def test_values_are_typed(self, tmp_path):
        periodic, local, coupled = load_experiments(
            write_ini(tmp_path / "exp.ini", CONVERGENCE_INI)
        )
        assert periodic.q == 6
        assert periodic.eta == 0.01
        assert local.eps == [0.005, 0.0025, 0.00125, 0.000625]
        assert local.fit_points == 3
        assert periodic.fit_points is None
        assert coupled.schedule == ScaleSchedule.COUPLED
        assert coupled.slope == [1.0, 0.0]

    def test_unknown_key(self, tmp_path):
        path = write_ini(tmp_path / "bad.ini", "[convergence]\ncoefficent = periodic-1d")
        with pytest.raises(ConfigError, match="unknown key"):
            load_experiments(path)

    def test_invalid_value_names_section(self, tmp_path):
        path = write_ini(tmp_path / "bad.ini", "[convergence.x]\nschedule = coupled\nbeta = 0.5")
        with pytest.raises(ConfigError, match=r"\[convergence.x\]"):
            load_experiments(path)

    def test_fit_window_needs_three_points(self, tmp_path):
        path = write_ini(tmp_path / "bad.ini", "[convergence.x]\nfit_points = 2")
        with pytest.raises(ConfigError, match=r"\[convergence.x\]"):
            load_experiments(path)

    def test_missing_section(self, tmp_path):
        path = write_ini(tmp_path / "empty.ini", "[macro]\nH = 0.1")
        with pytest.raises(ConfigError, match="no \\[convergence\\]"):
            load_experiments(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_experiments(tmp_path / "nope.ini")

    def test_unparsable_file(self, tmp_path):
        path = tmp_path / "broken.ini"
        path.write_text("no section header\n")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_experiments(path)


class TestLoadExpansion:
    def test_experiment_section(self, tmp_path):
        path = write_ini(
            tmp_path / "exp.ini", "[expansion]\nexperiment = fig4\nradii = 8, 10, 12"
        )
        cfg = load_expansion(path)
        assert cfg.experiment == ExpansionExperiment.FIG4
        assert cfg.radii == [8.0, 10.0, 12.0]

    def test_fig4_box_follows_the_experiment(self, tmp_path):
        cfg = load_expansion(write_ini(tmp_path / "exp.ini", "[expansion]\nexperiment = fig2"))
        assert cfg.box_half_width == 3.0
        swapped = ExpansionConfig.model_validate(cfg.model_dump() | {"experiment": "fig4"})
        assert swapped.box_half_width == 26.0
        assert ExpansionConfig(experiment="fig4", L=30.0).box_half_width == 30.0

    def test_order_range(self, tmp_path):
        path = write_ini(tmp_path / "exp.ini", "[expansion]\norders = 0, 3")
        with pytest.raises(ConfigError):
            load_expansion(path)


class TestMacroConfigFile:
    def test_to_macro_config(self, tmp_path):
        file_cfg = load_macro(write_ini(tmp_path / "macro.ini", MACRO_INI))
        cfg, exact = to_macro_config(file_cfg)
        assert cfg.flux_mode == FluxMode.REFERENCE
        assert cfg.dt == pytest.approx(0.05)
        assert cfg.domain == [(0.0, 1.0)]
        x = np.array([[0.5]])
        assert cfg.g(x)[0] == pytest.approx(1.0)
        assert float(cfg.h(x)[0]) == 0.0
        assert exact(x)[0] == pytest.approx(np.cos(0.4 * np.pi))

    def test_none_values(self, tmp_path):
        text = MACRO_INI.replace("sin(pi*x)*cos(pi*t)", "none")
        file_cfg = load_macro(write_ini(tmp_path / "macro.ini", text))
        assert file_cfg.exact is None

    def test_dimension_mismatch(self, tmp_path):
        text = "[macro]\ncoefficient = periodic-2d\ndim = 1"
        with pytest.raises(ConfigError, match="2D"):
            to_macro_config(load_macro(write_ini(tmp_path / "macro.ini", text)))


class TestCompileExpression:
    def test_vectorized_in_time_and_space(self):
        fn = compile_expression("t*x + y", 2)
        points = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        np.testing.assert_allclose(fn(2.0, points), [[4.0, 10.0]])

    def test_constant_expression_broadcasts(self):
        fn = compile_expression("3", 1)
        assert fn(0.0, np.zeros((5, 1))).shape == (5,)

    def test_unknown_symbol(self):
        with pytest.raises(ConfigError, match="unknown symbols: z"):
            compile_expression("x + z", 1)

    def test_second_coordinate_needs_2d(self):
        with pytest.raises(ConfigError):
            compile_expression("y", 1)

    def test_parse_error(self):
        with pytest.raises(ConfigError, match="cannot parse"):
            compile_expression("x +* 2", 1)
