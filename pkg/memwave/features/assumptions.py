"""
假设检验模块
对记忆核数值检验适定性假设组、指数衰减假设组和弱衰减假设组，
并计算强制性常数 c̃

判定规则: 数值裕量 > −tolerance（默认 1e-9）才判为 pass。
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import sici

from memwave.config import Config
from memwave.core.kernels import Kernel, KernelFamily, KernelPart, iterated_integral, resolvent
from memwave.errors import UnsupportedKernelError, UnsupportedResolventError

logger = logging.getLogger(__name__)

CTILDE_NOTE = (
    "c̃ 取强制性方向 inf_z Re k̂_λ(z)/|k̂_λ(z)|²；"
    "sup_z |k̂_λ(z)|²/Re k̂_λ(z) 是它的倒数型量，不能作为下界乘子"
)


class Verdict(Enum):
    """判定结果"""
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass
class AssumptionCheck:
    """单项假设的检验结果"""
    name: str
    verdict: Verdict
    evidence: Dict[str, float] = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == Verdict.PASS

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict.value,
            "evidence": dict(self.evidence),
            "note": self.note,
        }


# 假设组 -> 组成它的单项检查
ASSUMPTION_SETS = {
    "wellposed": ("A0", "A1", "A2", "A3"),
    "exponential": ("A4", "A5"),
    "weak": ("A4w", "A5w"),
}


@dataclass
class AssumptionReport:
    """classify 的结果"""
    kernel_spec: str
    checks: Dict[str, AssumptionCheck]
    sets: Dict[str, Verdict]
    c_a2: Optional[float] = None
    ctilde: Optional[float] = None
    lambda_sup: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel_spec,
            "sets": {k: v.value for k, v in self.sets.items()},
            "checks": {k: c.to_dict() for k, c in self.checks.items()},
            "c_a2": self.c_a2,
            "ctilde": self.ctilde,
            "lambda_sup": self.lambda_sup,
            "notes": list(self.notes),
        }

    def to_rows(self) -> List[Tuple[str, str, str, str]]:
        """(假设, 判定, 证据, 说明) 行，用于文本表格与 CSV"""
        rows = []
        for name, check in self.checks.items():
            evidence = ", ".join(f"{k}={v:.6g}" for k, v in check.evidence.items())
            rows.append((name, check.verdict.value, evidence, check.note))
        return rows


def _combine(verdicts: List[Verdict]) -> Verdict:
    if any(v == Verdict.FAIL for v in verdicts):
        return Verdict.FAIL
    if all(v == Verdict.PASS for v in verdicts):
        return Verdict.PASS
    return Verdict.INCONCLUSIVE


def omega_grid(omega_min: Optional[float] = None, omega_max: Optional[float] = None,
               samples: Optional[int] = None) -> np.ndarray:
    """对数频率网格"""
    cfg = Config.get_assumptions_config()
    lo = omega_min if omega_min is not None else cfg["omega_min"]
    hi = omega_max if omega_max is not None else cfg["omega_max"]
    m = samples if samples is not None else cfg["omega_samples"]
    return np.geomspace(lo, hi, m)


# ============================================================
# Fourier 变换
# ============================================================

def _polynomial_transform(p: int, omega: np.ndarray) -> np.ndarray:
    """∫₀^∞ (1+t)^{−p} e^{−iωt} dt，整数 p，用正弦/余弦积分递推"""
    si, ci = sici(omega)
    cos_w, sin_w = np.cos(omega), np.sin(omega)
    tail = 0.5 * np.pi - si
    c = -cos_w * ci + sin_w * tail
    s = cos_w * tail + sin_w * ci
    for q in range(2, p + 1):
        c, s = (1.0 - omega * s) / (q - 1), omega * c / (q - 1)
    return c - 1j * s


def _quadrature_transform(part: KernelPart, omega: np.ndarray) -> Tuple[np.ndarray, bool]:
    """逐频率自适应求积: [0,1] 上 QAGS，[1,∞) 上 QAWF"""
    out = np.empty(omega.size, dtype=complex)
    converged = True
    f = lambda t: float(part.values(np.asarray(t)))
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        for i, w in enumerate(omega):
            try:
                c0, _ = quad(lambda t: f(t) * math.cos(w * t), 0.0, 1.0, limit=200)
                s0, _ = quad(lambda t: f(t) * math.sin(w * t), 0.0, 1.0, limit=200)
                c1, _ = quad(f, 1.0, np.inf, weight="cos", wvar=w)
                s1, _ = quad(f, 1.0, np.inf, weight="sin", wvar=w)
            except IntegrationWarning as e:
                logger.debug(f"ω={w:.3g} 处 Fourier 积分未收敛: {e}")
                converged = False
                out[i] = np.nan
                continue
            out[i] = (c0 + c1) - 1j * (s0 + s1)
    return out, converged


def fourier_transform(kernel: Kernel, omega: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    𝔎̂(ω) = B + ∫₀^∞ k(t)e^{−iωt} dt

    Returns:
        (变换值, 求积是否全部收敛)
    """
    omega = np.asarray(omega, dtype=float)
    if kernel.is_dirac:
        return np.full(omega.size, kernel.point_mass, dtype=complex), True
    if kernel.laplace is not None:
        return kernel.transform(1j * omega), True
    if kernel.family == KernelFamily.POLYNOMIAL and float(kernel.params["p"]).is_integer():
        return kernel.point_mass + _polynomial_transform(int(kernel.params["p"]), omega), True

    values, converged = _quadrature_transform(kernel.density, omega)
    return kernel.point_mass + values, converged


# ============================================================
# 单项检查
# ============================================================

def check_positivity_fourier(kernel: Kernel, omega_max: Optional[float] = None,
                             samples: Optional[int] = None) -> AssumptionCheck:
    """
    Re 𝔎̂(ω) ≥ 0 在频率网格上是否成立（正性假设的充分检验）

    Args:
        kernel: 记忆核
        omega_max: 频率上界
        samples: 采样点数 M

    Returns:
        AssumptionCheck，evidence["min_re"] 为网格上的最小实部
    """
    tol = Config.ASSUMPTIONS["tolerance"]
    omega = omega_grid(omega_max=omega_max, samples=samples)
    values, converged = fourier_transform(kernel, omega)
    re = values.real
    if not converged or not np.all(np.isfinite(re)):
        finite = re[np.isfinite(re)]
        evidence = {"min_re": float(finite.min())} if finite.size else {}
        return AssumptionCheck("fourier_positivity", Verdict.INCONCLUSIVE, evidence,
                               "Fourier 求积未收敛")

    min_re = float(re.min())
    verdict = Verdict.PASS if min_re >= -tol else Verdict.FAIL
    return AssumptionCheck("fourier_positivity", verdict,
                           {"min_re": min_re, "omega_max": float(omega[-1])})


def check_cm_samples(kernel: Union[Kernel, KernelPart], n_max: int = 2,
                     step: Optional[float] = None, horizon: Optional[float] = None) -> AssumptionCheck:
    """
    采样检验 (−1)ⁿ dⁿk/dtⁿ ≥ 0，n = 0..n_max

    均匀网格 t = h, 2h, ..., T 上用二阶中心差分。n ≤ 2 给出正性假设的充分条件，
    n ≤ 1 给出 C_𝒜2 = 0 的充分条件。

    Returns:
        AssumptionCheck，evidence 含各阶最小裕量，失败时 failed_order 为首个失败阶数
    """
    if not 0 <= n_max <= 2:
        raise ValueError(f"n_max 只支持 0..2，得到 {n_max}")
    cfg = Config.get_assumptions_config()
    h = step if step is not None else cfg["fd_step"]
    T = horizon if horizon is not None else cfg["fd_horizon"]
    tol = cfg["tolerance"]

    part = kernel.density if isinstance(kernel, Kernel) else kernel
    if isinstance(kernel, Kernel) and kernel.is_dirac:
        return AssumptionCheck("cm_samples", Verdict.PASS, {"n_max": float(n_max)}, "密度为零")

    t = h * np.arange(1, int(round(T / h)) + 1)
    with np.errstate(all="ignore"):
        f = np.asarray(part(t), dtype=float)
    if not np.all(np.isfinite(f)):
        return AssumptionCheck("cm_samples", Verdict.INCONCLUSIVE, {}, "密度在网格上含非有限值")

    margins = [f]
    if n_max >= 1:
        margins.append(-(f[2:] - f[:-2]) / (2.0 * h))
    if n_max >= 2:
        margins.append((f[2:] - 2.0 * f[1:-1] + f[:-2]) / h ** 2)

    evidence = {f"min_order_{n}": float(m.min()) for n, m in enumerate(margins)}
    for n, m in enumerate(margins):
        if m.min() < -tol:
            evidence["failed_order"] = float(n)
            return AssumptionCheck("cm_samples", Verdict.FAIL, evidence, f"{n} 阶符号条件不成立")
    return AssumptionCheck("cm_samples", Verdict.PASS, evidence)


def compute_ctilde(kernel: Kernel, lam: float, omega: Optional[np.ndarray] = None) -> float:
    """
    c̃_λ = inf_z Re(1/k̂_λ(z))，k̂_λ 为 k(t)e^{−(β−λ/2)t} 的 Fourier 变换

    Re k̂/|k̂|² = Re(1/k̂)。z 取 0 与对数网格（实核的变换共轭对称）。

    Raises:
        UnsupportedKernelError: 记忆核不是 k(t)e^{−βt} 形式或没有闭式 Laplace 变换
        ValueError: λ 超出 [0, 2β]
    """
    if kernel.is_dirac:
        return 1.0
    if kernel.tempering is None or kernel.laplace is None:
        raise UnsupportedKernelError(f"{kernel.spec} 不能写成 k(t)e^{{-βt}} 形式，c̃ 无定义")
    beta = kernel.tempering
    if not 0.0 <= lam <= 2.0 * beta:
        raise ValueError(f"λ 必须位于 [0, 2β] = [0, {2 * beta}]，得到 {lam}")

    z = np.concatenate(([0.0], omega_grid() if omega is None else np.asarray(omega, dtype=float)))
    values = kernel.transform(1j * z - 0.5 * lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.min((1.0 / values).real))


def ctilde_min(kernel: Kernel) -> Tuple[float, Optional[float], np.ndarray]:
    """
    λ 网格上的 min c̃_λ

    λ_k = λ_cap·k/M，k = 0..M−1，λ_cap = min(2β, cap)；λ = 2β 本身不取。

    Returns:
        (c̃, λ_sup = 2β, λ 网格)
    """
    if kernel.is_dirac:
        return 1.0, None, np.zeros(1)
    if kernel.tempering is None:
        raise UnsupportedKernelError(f"{kernel.spec} 不能写成 k(t)e^{{-βt}} 形式，c̃ 无定义")
    cfg = Config.get_assumptions_config()
    beta = kernel.tempering
    cap = min(2.0 * beta, cfg["lambda_cap"])
    m = cfg["lambda_samples"]
    lambdas = cap * np.arange(m) / m
    omega = omega_grid()
    values = np.array([compute_ctilde(kernel, lam, omega) for lam in lambdas])
    return float(values.min()), 2.0 * beta, lambdas


# ============================================================
# 汇总
# ============================================================

def _check_a0(kernel: Kernel) -> AssumptionCheck:
    horizon = Config.ASSUMPTIONS["a0_horizon"]
    mass = kernel.point_mass + float(iterated_integral(kernel.density, horizon, 1, 1)[1])
    ok = math.isfinite(mass) and kernel.point_mass >= 0
    return AssumptionCheck("A0", Verdict.PASS if ok else Verdict.FAIL, {"mass_0_1": mass},
                           "局部有限测度")


def _check_a1(kernel: Kernel) -> AssumptionCheck:
    fourier = check_positivity_fourier(kernel)
    cm = check_cm_samples(kernel, n_max=2)
    evidence = dict(fourier.evidence)
    if fourier.passed or cm.passed:
        via = "Fourier 正性" if fourier.passed else "完全单调 (n ≤ 2)"
        return AssumptionCheck("A1", Verdict.PASS, evidence, f"由 {via} 确认")
    if fourier.verdict == Verdict.FAIL:
        return AssumptionCheck("A1", Verdict.FAIL, evidence, "Re 𝔎̂ 取到负值")
    return AssumptionCheck("A1", Verdict.INCONCLUSIVE, evidence, fourier.note)


def _check_a2(kernel: Kernel) -> Tuple[AssumptionCheck, Optional[float]]:
    if kernel.is_dirac:
        return AssumptionCheck("A2", Verdict.PASS, {"c_a2": 1.0}, "dirac: C_𝒜2 = 1"), 1.0
    if kernel.point_mass == 0 and check_cm_samples(kernel, n_max=1).passed:
        return AssumptionCheck("A2", Verdict.PASS, {"c_a2": 0.0}, "非负非增密度: C_𝒜2 = 0"), 0.0
    return AssumptionCheck("A2", Verdict.INCONCLUSIVE, {}, "C_𝒜2 无可计算的刻画"), None


def _check_a3(kernel: Kernel) -> AssumptionCheck:
    try:
        res = resolvent(kernel, 0.01, 100)
    except UnsupportedResolventError as e:
        return AssumptionCheck("A3", Verdict.FAIL, {}, str(e))
    evidence = {"A": float(res.A)}
    if kernel.point_mass > 0 and math.isinf(res.r.at_zero):
        return AssumptionCheck("A3", Verdict.FAIL, evidence, "有点质量时要求 r ∈ W^{1,q}")
    return AssumptionCheck("A3", Verdict.PASS, evidence, f"预解式 {res.method}")


def _check_a4(kernel: Kernel) -> Tuple[AssumptionCheck, Optional[float], Optional[float]]:
    tol = Config.ASSUMPTIONS["tolerance"]
    try:
        ctilde, lambda_sup, _ = ctilde_min(kernel)
    except UnsupportedKernelError as e:
        return AssumptionCheck("A4", Verdict.FAIL, {}, str(e)), None, None
    evidence = {"ctilde": ctilde}
    if lambda_sup is not None:
        evidence["lambda_sup"] = lambda_sup
    verdict = Verdict.PASS if ctilde > tol else Verdict.FAIL
    return AssumptionCheck("A4", verdict, evidence), ctilde, lambda_sup


def _check_a5(kernel: Kernel) -> AssumptionCheck:
    if kernel.is_dirac:
        return AssumptionCheck("A5", Verdict.PASS, {}, "dirac")
    if kernel.tempering is None:
        return AssumptionCheck("A5", Verdict.FAIL, {}, "不是 k(t)e^{-βt} 形式")
    cm = check_cm_samples(kernel.factored(), n_max=2)
    return AssumptionCheck("A5", cm.verdict, cm.evidence, "k 非负、非增、凸")


def _check_a4w(kernel: Kernel) -> AssumptionCheck:
    tol = Config.ASSUMPTIONS["tolerance"]
    values, converged = fourier_transform(kernel, omega_grid())
    with np.errstate(divide="ignore", invalid="ignore"):
        re_inv = (1.0 / values).real
    if not converged or not np.all(np.isfinite(re_inv)):
        return AssumptionCheck("A4w", Verdict.INCONCLUSIVE, {}, "Fourier 求积未收敛")
    margin = float(re_inv.min())
    return AssumptionCheck("A4w", Verdict.PASS if margin > -tol else Verdict.FAIL,
                           {"min_re_inverse": margin})


def _check_a5w(kernel: Kernel) -> AssumptionCheck:
    cm = check_cm_samples(kernel, n_max=2)
    return AssumptionCheck("A5w", cm.verdict, cm.evidence, "密度正、非增、凸")


def _guarded(name: str, fn, *args):
    try:
        return fn(*args)
    except Exception as e:
        logger.warning(f"假设 {name} 检查异常: {e}")
        return AssumptionCheck(name, Verdict.INCONCLUSIVE, {}, f"检查异常: {e}")


def classify(kernel: Kernel) -> AssumptionReport:
    """
    运行全部检查并汇总三组假设

    Returns:
        AssumptionReport（不抛异常，单项失败记为 inconclusive）
    """
    checks: Dict[str, AssumptionCheck] = {}
    checks["A0"] = _guarded("A0", _check_a0, kernel)
    checks["A1"] = _guarded("A1", _check_a1, kernel)

    c_a2 = None
    try:
        checks["A2"], c_a2 = _check_a2(kernel)
    except Exception as e:
        logger.warning(f"假设 A2 检查异常: {e}")
        checks["A2"] = AssumptionCheck("A2", Verdict.INCONCLUSIVE, {}, f"检查异常: {e}")

    checks["A3"] = _guarded("A3", _check_a3, kernel)

    ctilde = lambda_sup = None
    try:
        checks["A4"], ctilde, lambda_sup = _check_a4(kernel)
    except Exception as e:
        logger.warning(f"假设 A4 检查异常: {e}")
        checks["A4"] = AssumptionCheck("A4", Verdict.INCONCLUSIVE, {}, f"检查异常: {e}")

    checks["A5"] = _guarded("A5", _check_a5, kernel)
    checks["A4w"] = _guarded("A4w", _check_a4w, kernel)
    checks["A5w"] = _guarded("A5w", _check_a5w, kernel)

    sets = {name: _combine([checks[c].verdict for c in members])
            for name, members in ASSUMPTION_SETS.items()}

    report = AssumptionReport(kernel.spec, checks, sets, c_a2, ctilde, lambda_sup, [CTILDE_NOTE])
    failed = [name for name, v in sets.items() if v != Verdict.PASS]
    if failed:
        logger.warning(f"{kernel.spec}: 假设组 {', '.join(failed)} 未通过")
    logger.info(f"假设检验 {kernel.spec}: " + ", ".join(f"{k}={v.value}" for k, v in sets.items()))
    return report
