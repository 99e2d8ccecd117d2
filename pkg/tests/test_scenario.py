"""
测试场景配置解析

覆盖范围：
  1. 默认值与导出后原样读回
  2. 缺少/未知字段、类型错误时报出字段名
  3. 记忆核规格与方程参数的校验
  4. 输出路径

运行: pytest tests/test_scenario.py -v
"""
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import pytest

from memwave.core.discretization import InitialField
from memwave.errors import ScenarioError
from memwave.features.scenario import (
    dump_scenario,
    load_scenario,
    scenario_from_dict,
    scenario_paths,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _base() -> dict:
    return {
        "equation": {"tau": 0.1, "c": 1.0, "gamma": 0.5, "nu": 0.2},
        "kernel": {"spec": "exponential(beta=1.0)"},
        "time": {"dt": 0.01, "n_steps": 100},
    }


class TestParsing:

    def test_defaults(self):
        cfg = scenario_from_dict(_base())
        assert cfg.L == math.pi
        assert cfg.n_modes == 1
        assert cfg.psi0.is_zero
        assert cfg.rule is None
        assert cfg.energy
        assert cfg.T == pytest.approx(1.0)
        assert cfg.params.memory_gap == pytest.approx(0.4)

    def test_full_scenario(self):
        data = _base()
        data["domain"] = {"L": 2.0, "n_modes": 4}
        data["initial"] = {"psi0": {"function": "gaussian()"}, "psi1": {"coeffs": [0.1, 0.2]},
                           "psi2": {"coeffs": [0.1, 0.2]}}
        data["time"]["rule"] = "rectangle"
        data["diagnostics"] = {"energy": False, "fit_window": [0.5, 1.0]}
        cfg = scenario_from_dict(data)
        assert cfg.psi0 == InitialField(function="gaussian()")
        assert cfg.psi1.coeffs == (0.1, 0.2)
        assert cfg.rule == "rectangle"
        assert cfg.fit_window == (0.5, 1.0)
        assert not cfg.energy

    def test_integer_values_accepted(self):
        data = _base()
        data["equation"]["c"] = 1
        data["time"]["n_steps"] = 100.0
        cfg = scenario_from_dict(data)
        assert isinstance(cfg.c, float)
        assert cfg.n_steps == 100

    def test_dump_round_trip(self, tmp_path):
        data = _base()
        data["domain"] = {"n_modes": 3}
        data["initial"] = {"psi0": {"coeffs": [1.0, -0.5]}, "psi2": {"function": "sin_modes(k=2, amp=0.5)"}}
        data["diagnostics"] = {"fit_window": [0.2, 0.8]}
        cfg = scenario_from_dict(data)

        text = dump_scenario(cfg)
        assert scenario_from_dict(tomllib.loads(text)) == cfg

        path = tmp_path / "scenario.toml"
        path.write_text(text, encoding="utf-8")
        assert load_scenario(path) == cfg


class TestErrors:
    """错误信息里带出有问题的字段"""

    def _field(self, data: dict) -> str:
        with pytest.raises(ScenarioError) as exc:
            scenario_from_dict(data)
        return exc.value.field

    def test_missing_required_field(self):
        data = _base()
        del data["equation"]["tau"]
        assert self._field(data) == "equation.tau"

    def test_missing_section(self):
        data = _base()
        del data["time"]
        assert self._field(data) == "time"

    def test_unknown_key(self):
        data = _base()
        data["equation"]["alpha"] = 1.0
        with pytest.raises(ScenarioError, match="alpha") as exc:
            scenario_from_dict(data)
        assert exc.value.field == "equation"

    def test_unknown_section(self):
        data = _base()
        data["solver"] = {}
        with pytest.raises(ScenarioError, match="solver"):
            scenario_from_dict(data)

    def test_missing_kernel_spec(self):
        data = _base()
        data["kernel"] = {}
        assert self._field(data) == "kernel.spec"

    @pytest.mark.parametrize("spec", ["foo(beta=1.0)", "exponential(beta=-1.0)", "exponential beta"])
    def test_invalid_kernel_spec(self, spec):
        data = _base()
        data["kernel"]["spec"] = spec
        assert self._field(data) == "kernel.spec"

    def test_boolean_is_not_a_number(self):
        data = _base()
        data["equation"]["tau"] = True
        assert self._field(data) == "equation.tau"

    def test_fractional_step_count(self):
        data = _base()
        data["time"]["n_steps"] = 1.5
        assert self._field(data) == "time.n_steps"

    def test_invalid_params(self):
        data = _base()
        data["equation"]["nu"] = -1.0
        assert self._field(data) == "equation"

    def test_unknown_rule(self):
        data = _base()
        data["time"]["rule"] = "simpson"
        assert self._field(data) == "time.rule"

    def test_too_many_coefficients(self):
        data = _base()
        data["initial"] = {"psi0": {"coeffs": [1.0, 2.0]}}
        assert self._field(data) == "initial.psi0.coeffs"

    def test_coeffs_and_function(self):
        data = _base()
        data["initial"] = {"psi1": {"coeffs": [1.0], "function": "zero()"}}
        assert self._field(data) == "initial.psi1"

    @pytest.mark.parametrize("window", [[1.0, 0.5], [0.5], "0.5,1.0"])
    def test_bad_fit_window(self, window):
        data = _base()
        data["diagnostics"] = {"fit_window": window}
        assert self._field(data) == "diagnostics.fit_window"

    def test_non_positive_step(self):
        data = _base()
        data["time"]["dt"] = 0.0
        assert self._field(data) == "time.dt"

    def test_toml_syntax_error(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[equation\ntau = 0.1\n", encoding="utf-8")
        with pytest.raises(ScenarioError, match="TOML") as exc:
            load_scenario(path)
        assert exc.value.field == "broken.toml"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="不存在"):
            load_scenario(tmp_path / "missing.toml")


class TestPaths:

    def test_relative_and_absolute(self, tmp_path):
        data = _base()
        absolute = tmp_path / "elsewhere" / "report.txt"
        data["outputs"] = {"csv": "e.csv", "report": str(absolute)}
        paths = scenario_paths(scenario_from_dict(data), tmp_path / "out")
        assert paths["csv"] == tmp_path / "out" / "e.csv"
        assert paths["svg"] == tmp_path / "out" / "energy.svg"
        assert paths["report"] == absolute
