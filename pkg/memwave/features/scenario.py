"""
场景配置模块
分节 TOML 场景文件的解析与导出

[equation] tau/c/gamma/nu
[kernel] spec
[domain] L/n_modes
[initial.psi0] / [initial.psi1] / [initial.psi2]: coeffs 或 function
[time] dt/n_steps/rule
[outputs] csv/svg/report
[diagnostics] energy/fit_window
"""
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from memwave.config import Config
from memwave.core.discretization import EquationParams, InitialField
from memwave.core.kernels import Kernel, QuadratureRule, parse_kernel_spec
from memwave.errors import KernelParameterError, ParamsInvalidError, ScenarioError

logger = logging.getLogger(__name__)

_SECTIONS = {
    "equation": {"tau", "c", "gamma", "nu"},
    "kernel": {"spec"},
    "domain": {"L", "n_modes"},
    "initial": {"psi0", "psi1", "psi2"},
    "time": {"dt", "n_steps", "rule"},
    "outputs": {"csv", "svg", "report"},
    "diagnostics": {"energy", "fit_window"},
}


@dataclass
class ScenarioConfig:
    """一个模拟场景"""
    tau: float
    c: float
    gamma: float
    nu: float
    kernel: str
    L: float = math.pi
    n_modes: int = 1
    psi0: InitialField = field(default_factory=InitialField)
    psi1: InitialField = field(default_factory=InitialField)
    psi2: InitialField = field(default_factory=InitialField)
    dt: float = 1e-3
    n_steps: int = 1000
    rule: Optional[str] = None
    csv: str = Config.OUTPUT["csv"]
    svg: str = Config.OUTPUT["svg"]
    report: str = Config.OUTPUT["report"]
    energy: bool = True
    fit_window: Optional[Tuple[float, float]] = None

    @property
    def params(self) -> EquationParams:
        return EquationParams(self.tau, self.c, self.gamma, self.nu)

    @property
    def T(self) -> float:
        return self.dt * self.n_steps

    def build_kernel(self) -> Kernel:
        return parse_kernel_spec(self.kernel)

    def to_dict(self) -> Dict[str, Any]:
        """TOML 分节字典，None 值省略"""
        data: Dict[str, Any] = {
            "equation": {"tau": self.tau, "c": self.c, "gamma": self.gamma, "nu": self.nu},
            "kernel": {"spec": self.kernel},
            "domain": {"L": self.L, "n_modes": self.n_modes},
            "initial": {
                name: getattr(self, name).to_dict() for name in ("psi0", "psi1", "psi2")
            },
            "time": {"dt": self.dt, "n_steps": self.n_steps},
            "outputs": {"csv": self.csv, "svg": self.svg, "report": self.report},
            "diagnostics": {"energy": self.energy},
        }
        if self.rule is not None:
            data["time"]["rule"] = self.rule
        if self.fit_window is not None:
            data["diagnostics"]["fit_window"] = list(self.fit_window)
        return data


# ============================================================
# 解析
# ============================================================

def _section(data: dict, name: str, required: bool = True) -> dict:
    if name not in data:
        if required:
            raise ScenarioError("缺少必需的节", field=name)
        return {}
    value = data[name]
    if not isinstance(value, dict):
        raise ScenarioError("应为一个节（表）", field=name)
    unknown = set(value) - _SECTIONS[name]
    if unknown:
        raise ScenarioError(f"未知字段 {', '.join(sorted(unknown))}", field=name)
    return value


def _number(section: dict, key: str, where: str, default: Any = None, kind=float):
    if key not in section:
        if default is None:
            raise ScenarioError("缺少必需字段", field=f"{where}.{key}")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"应为数值，得到 {value!r}", field=f"{where}.{key}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ScenarioError(f"应为整数，得到 {value!r}", field=f"{where}.{key}")
        return int(value)
    return float(value)


def _string(section: dict, key: str, where: str, default: Optional[str] = None) -> Optional[str]:
    if key not in section:
        return default
    value = section[key]
    if not isinstance(value, str):
        raise ScenarioError(f"应为字符串，得到 {value!r}", field=f"{where}.{key}")
    return value


def _initial(section: dict, name: str) -> InitialField:
    where = f"initial.{name}"
    if name not in section:
        return InitialField()
    value = section[name]
    if not isinstance(value, dict):
        raise ScenarioError("应为一个节（表）", field=where)
    unknown = set(value) - {"coeffs", "function"}
    if unknown:
        raise ScenarioError(f"未知字段 {', '.join(sorted(unknown))}", field=where)
    if "coeffs" in value and "function" in value:
        raise ScenarioError("coeffs 与 function 只能给出一个", field=where)
    if "coeffs" in value:
        coeffs = value["coeffs"]
        if not isinstance(coeffs, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in coeffs
        ):
            raise ScenarioError("coeffs 应为数值数组", field=f"{where}.coeffs")
        return InitialField(coeffs=tuple(float(v) for v in coeffs))
    if "function" in value:
        return InitialField(function=_string(value, "function", where))
    return InitialField()


def scenario_from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    """
    从分节字典构造 ScenarioConfig 并校验

    Raises:
        ScenarioError: 缺少/未知字段、类型错误、记忆核规格或参数无效（带字段名）
    """
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ScenarioError(f"未知的节 {', '.join(sorted(unknown))}")

    eq = _section(data, "equation")
    kern = _section(data, "kernel")
    dom = _section(data, "domain", required=False)
    init = _section(data, "initial", required=False)
    tim = _section(data, "time")
    out = _section(data, "outputs", required=False)
    diag = _section(data, "diagnostics", required=False)

    spec = _string(kern, "spec", "kernel")
    if spec is None:
        raise ScenarioError("缺少必需字段", field="kernel.spec")

    rule = _string(tim, "rule", "time")
    if rule is not None and rule not in {r.value for r in QuadratureRule}:
        raise ScenarioError(f"未知求积规则 '{rule}'", field="time.rule")

    energy = diag.get("energy", True)
    if not isinstance(energy, bool):
        raise ScenarioError(f"应为布尔值，得到 {energy!r}", field="diagnostics.energy")
    window = diag.get("fit_window")
    if window is not None:
        if (not isinstance(window, list) or len(window) != 2
                or not all(isinstance(v, (int, float)) for v in window) or window[0] >= window[1]):
            raise ScenarioError("应为 [起点, 终点] 且起点 < 终点", field="diagnostics.fit_window")
        window = (float(window[0]), float(window[1]))

    cfg = ScenarioConfig(
        tau=_number(eq, "tau", "equation"),
        c=_number(eq, "c", "equation"),
        gamma=_number(eq, "gamma", "equation"),
        nu=_number(eq, "nu", "equation"),
        kernel=spec,
        L=_number(dom, "L", "domain", default=ScenarioConfig.L),
        n_modes=_number(dom, "n_modes", "domain", default=1, kind=int),
        psi0=_initial(init, "psi0"),
        psi1=_initial(init, "psi1"),
        psi2=_initial(init, "psi2"),
        dt=_number(tim, "dt", "time"),
        n_steps=_number(tim, "n_steps", "time", kind=int),
        rule=rule,
        csv=_string(out, "csv", "outputs", Config.OUTPUT["csv"]),
        svg=_string(out, "svg", "outputs", Config.OUTPUT["svg"]),
        report=_string(out, "report", "outputs", Config.OUTPUT["report"]),
        energy=energy,
        fit_window=window,
    )

    try:
        cfg.params
    except ParamsInvalidError as e:
        raise ScenarioError(str(e), field="equation") from e
    try:
        cfg.build_kernel()
    except KernelParameterError as e:
        raise ScenarioError(str(e), field="kernel.spec") from e
    if cfg.L <= 0:
        raise ScenarioError(f"区间长度必须为正，得到 {cfg.L}", field="domain.L")
    if cfg.n_modes < 1:
        raise ScenarioError(f"模态数必须 >= 1，得到 {cfg.n_modes}", field="domain.n_modes")
    if cfg.dt <= 0:
        raise ScenarioError(f"时间步长必须为正，得到 {cfg.dt}", field="time.dt")
    if cfg.n_steps < 1:
        raise ScenarioError(f"步数必须 >= 1，得到 {cfg.n_steps}", field="time.n_steps")
    for name in ("psi0", "psi1", "psi2"):
        coeffs = getattr(cfg, name).coeffs
        if coeffs is not None and len(coeffs) > cfg.n_modes:
            raise ScenarioError(f"给出了 {len(coeffs)} 个系数，但只有 {cfg.n_modes} 个模态",
                                field=f"initial.{name}.coeffs")
    return cfg


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """读取 TOML 场景文件"""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ScenarioError(f"场景文件不存在: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"TOML 语法错误: {e}", field=path.name) from e

    cfg = scenario_from_dict(data)
    logger.debug(f"已加载场景 {path.name}: {cfg.kernel}, {cfg.n_modes} 模态, T={cfg.T:g}")
    return cfg


def dump_scenario(cfg: ScenarioConfig) -> str:
    """导出为 TOML 文本，load_scenario 可原样读回"""
    return tomli_w.dumps(cfg.to_dict())


def scenario_paths(cfg: ScenarioConfig, out_dir: Path) -> Dict[str, Path]:
    """输出文件的完整路径（相对路径放到 out_dir 下）"""
    paths = {}
    for key in ("csv", "svg", "report"):
        p = Path(getattr(cfg, key))
        paths[key] = p if p.is_absolute() else out_dir / p
    return paths
