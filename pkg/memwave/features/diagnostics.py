"""
能量诊断模块
在轨迹上计算能量、修正能量、Lyapunov 泛函与耗散预算，并拟合衰减率

所有 L² 范数按谱系数求和: ‖u‖² = Σuᵢ²，‖∇u‖² = Σμᵢuᵢ²。
记号: g = 𝔎∗ξₜ，v = τgₜ + ξₜ，w = τg + ξ。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import linregress

from memwave.config import Config
from memwave.core.discretization import EquationParams, GalerkinSystem
from memwave.core.stepper import Trajectory
from memwave.errors import DecayFitError, EnergyAnomalyError, ParamsInvalidError

logger = logging.getLogger(__name__)

# 记忆核不满足指数衰减假设时的衰减标签
WEAK_DECAY = "no exponential fit (weak decay)"


def _at(traj: Trajectory, n):
    """第 n 步（或切片）的 (μ, g, gₜ, ξ, ξₜ)，μ 已扩展到可广播形状"""
    mu = traj.mu if isinstance(n, (int, np.integer)) else traj.mu[:, None]
    return mu, traj.conv_xi_t[:, n], traj.conv_xi_t_dt[:, n], traj.xi[:, n], traj.xi_t[:, n]


def _check_index(traj: Trajectory, n: int):
    if not 0 <= n <= traj.n_steps:
        raise IndexError(f"步数 n={n} 超出 [0, {traj.n_steps}]")


# ============================================================
# 能量与泛函
# ============================================================

def _energy(params: EquationParams, mu, g, g_t, xi, xi_t):
    tau, c2 = params.tau, params.c ** 2
    v = tau * g_t + xi_t
    w = tau * g + xi
    return 0.5 * np.sum(v ** 2 + c2 * mu * w ** 2 + tau * params.memory_gap * mu * g ** 2, axis=0)


def _energy_mod(params: EquationParams, mu, g, g_t, xi, xi_t):
    tau, gamma = params.tau, params.gamma
    kappa = tau * params.c ** 2 / gamma
    return np.sum(
        (tau * g_t + kappa * xi_t) ** 2
        + kappa * (params.memory_gap / gamma) * xi_t ** 2
        + (gamma / tau) * mu * (tau * g + kappa * xi) ** 2,
        axis=0,
    )


def _norm_mod(mu, g, g_t, xi, xi_t):
    return np.sum(g_t ** 2 + xi_t ** 2 + mu * g ** 2 + mu * xi ** 2, axis=0)


def _f1(params: EquationParams, mu, g, g_t, xi, xi_t):
    return np.sum((params.tau * g_t + xi_t) * (params.tau * g + xi), axis=0)


def _f2(params: EquationParams, mu, g, g_t, xi, xi_t):
    return -np.sum(params.tau * g * (params.tau * g_t + xi_t), axis=0)


def energy_E(traj: Trajectory, n: int) -> float:
    """E = ½(‖τgₜ+ξₜ‖² + c²‖∇(τg+ξ)‖² + τ(γ−τc²)‖∇g‖²)"""
    _check_index(traj, n)
    return float(_energy(traj.params, *_at(traj, n)))


def energy_mod(traj: Trajectory, n: int) -> float:
    """修正能量 E_mod，权重 τc²/γ 与 (γ−τc²)/γ"""
    _check_index(traj, n)
    return float(_energy_mod(traj.params, *_at(traj, n)))


def norm_mod(traj: Trajectory, n: int) -> float:
    """‖ψ‖_mod = ‖gₜ‖² + ‖ξₜ‖² + ‖∇g‖² + ‖∇ξ‖²"""
    _check_index(traj, n)
    return float(_norm_mod(*_at(traj, n)))


def functional_F1(traj: Trajectory, n: int) -> float:
    """F₁ = (τgₜ + ξₜ, τg + ξ)"""
    _check_index(traj, n)
    return float(_f1(traj.params, *_at(traj, n)))


def functional_F2(traj: Trajectory, n: int) -> float:
    """F₂ = −(τg, τgₜ + ξₜ)"""
    _check_index(traj, n)
    return float(_f2(traj.params, *_at(traj, n)))


def lyapunov(traj: Trajectory, n: int, N0: float, N1: float) -> float:
    """𝓛 = N₀E + F₁ + N₁F₂"""
    return N0 * energy_E(traj, n) + functional_F1(traj, n) + N1 * functional_F2(traj, n)


def modified_lyapunov(traj: Trajectory, n: int, N0: float, N1: float) -> float:
    """𝓛̃ = N₀(E + E_mod) + F₁ + N₁F₂"""
    return lyapunov(traj, n, N0, N1) + N0 * energy_mod(traj, n)


def energy_series(traj: Trajectory) -> Dict[str, np.ndarray]:
    """所有时间步上的 E、E_mod、‖ψ‖_mod、F₁、F₂"""
    parts = _at(traj, slice(None))
    return {
        "E": _energy(traj.params, *parts),
        "Emod": _energy_mod(traj.params, *parts),
        "norm_mod": _norm_mod(*parts),
        "F1": _f1(traj.params, *parts),
        "F2": _f2(traj.params, *parts),
    }


# ============================================================
# Lyapunov 常数
# ============================================================

@dataclass(frozen=True)
class LyapunovConstants:
    """Lyapunov 泛函的权重与界常数"""
    N0: float
    N1: float
    eps1: float
    eps2: float
    eps3: float
    c0: float
    C1: float
    C_eps3: float
    C_eps23: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def lyapunov_constants(params: EquationParams, system: GalerkinSystem,
                       ctilde: Optional[float]) -> LyapunovConstants:
    """
    按固定次序确定常数: ε₁ = c²/4，ε₂，N₁ = 2/(1−ε₂)，ε₃ = (c²−ε₁)/(2N₁)，
    再取使两个括号系数为正且 N₀ > c₀ 的最小 2 的幂 N₀

    Args:
        params: 方程参数，要求 γ > τc², ν > 0
        system: 提供 μ₁
        ctilde: 强制性常数 c̃；None 表示不可用，此时略去对应条件

    Raises:
        ParamsInvalidError: γ ≤ τc² 或 ν = 0
        ValueError: 找不到满足条件的 N₀
    """
    if not params.decay_ok:
        raise ParamsInvalidError(
            f"Lyapunov 构造要求 γ > τc² 且 ν > 0: γ−τc²={params.memory_gap}, ν={params.nu}"
        )
    cfg = Config.get_diagnostics_config()
    tau, c2, nu = params.tau, params.c ** 2, params.nu
    gap = params.memory_gap
    mu1 = float(system.mu[0])

    eps1 = c2 / 4.0
    eps2 = cfg["eps2"]
    N1 = 2.0 / (1.0 - eps2)
    eps3 = (c2 - eps1) / (2.0 * N1)
    C1 = max(gap ** 2, nu ** 2) / (2.0 * eps1)
    C_eps3 = (tau * c2) ** 2 / (4.0 * eps3) + tau * gap + tau * nu / 2.0
    C_eps23 = 1.0 / (4.0 * eps2 * mu1) + tau * nu / 2.0
    c0 = (2.0 / math.sqrt(mu1)) * (1.0 / params.c + N1 * math.sqrt(tau / gap))

    for k in range(cfg["n0_max_exponent"] + 1):
        N0 = float(2 ** k)
        memory_ok = ctilde is None or N0 * gap * ctilde - C1 - N1 * C_eps3 > 0
        if memory_ok and N0 * nu - C1 - N1 * C_eps23 > 0 and N0 > c0:
            return LyapunovConstants(N0, N1, eps1, eps2, eps3, c0, C1, C_eps3, C_eps23)
    raise ValueError(f"在 2^{cfg['n0_max_exponent']} 以内找不到满足条件的 N₀ (c̃={ctilde})")


# ============================================================
# 耗散预算
# ============================================================

def cumulative_integral(values: np.ndarray, dt: float, rule: str = "trapezoid") -> np.ndarray:
    """∫₀^{tₙ} values，与时间推进相同的求积规则（rectangle 取右端点）"""
    values = np.asarray(values, dtype=float)
    if rule == "rectangle":
        out = np.zeros_like(values)
        out[1:] = np.cumsum(values[1:]) * dt
        return out
    return cumulative_trapezoid(values, dx=dt, initial=0.0)


def budget_rhs(traj: Trajectory, c_a2: float) -> float:
    """‖τψ₂+ψ₁‖² + c²‖∇ψ₀‖² + (c²τ²B² + ντC_𝒜2)‖∇ψ₁‖²"""
    system = traj.system
    p = traj.params
    B = traj.kernel.point_mass
    return float(
        np.sum((p.tau * system.xi2K + system.xi1) ** 2)
        + p.c ** 2 * np.sum(system.mu * system.xi0 ** 2)
        + (p.c ** 2 * p.tau ** 2 * B ** 2 + p.nu * p.tau * c_a2) * np.sum(system.mu * system.xi1 ** 2)
    )


@dataclass
class DissipationCheck:
    """耗散不等式 2E + 2ν∫‖∇ψₜ‖² ≤ RHS 的检查结果"""
    residual: np.ndarray
    rhs: float
    passed: bool
    min_residual: float
    monotone: Optional[bool] = None   # ψ₁ = 0 时 E(tₙ) ≤ E(0) + slack

    def to_dict(self) -> dict:
        return {"rhs": self.rhs, "passed": self.passed, "min_residual": self.min_residual,
                "monotone": self.monotone}


def dissipation_check(traj: Trajectory, c_a2: float, energy: Optional[np.ndarray] = None) -> DissipationCheck:
    """
    residual[n] = RHS − 2E[n] − 2ν·∫₀^{tₙ}Σμᵢξₜᵢ²

    Args:
        traj: 轨迹
        c_a2: C_𝒜2（由 classify 给出）
        energy: 已算好的 E 序列，可省略

    Returns:
        DissipationCheck；min residual ≥ −rtol·RHS 判为通过
    """
    cfg = Config.get_diagnostics_config()
    E = energy if energy is not None else energy_series(traj)["E"]
    dissipation = np.sum(traj.mu[:, None] * traj.xi_t ** 2, axis=0)
    rhs = budget_rhs(traj, c_a2)
    residual = rhs - 2.0 * E - 2.0 * traj.params.nu * cumulative_integral(dissipation, traj.dt, traj.rule)

    min_res = float(residual.min())
    passed = min_res >= -cfg["budget_rtol"] * rhs
    monotone = None
    if not np.any(traj.system.xi1):
        monotone = bool(np.max(E) <= E[0] + cfg["monotone_slack"])
    if not passed:
        logger.warning(f"耗散预算不满足: min residual={min_res:.3e}, RHS={rhs:.3e}")
    return DissipationCheck(residual, rhs, passed, min_res, monotone)


# ============================================================
# 衰减拟合
# ============================================================

@dataclass(frozen=True)
class DecayFit:
    """log E 在窗口上的最小二乘直线，附带 log–log 幂律拟合"""
    lambda_fit: float
    r2: float
    window: Tuple[float, float]
    degenerate: bool = False
    exponential: bool = False
    power_exponent: float = math.nan    # E ≈ C·t^{-p} 中的 p
    power_r2: float = math.nan

    def to_dict(self) -> dict:
        return {"lambda_fit": self.lambda_fit, "r2": self.r2, "window": list(self.window),
                "degenerate": self.degenerate, "exponential": self.exponential,
                "power_exponent": self.power_exponent, "power_r2": self.power_r2}


def fit_decay(times: np.ndarray, series: np.ndarray,
              window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """
    拟合 log E(t) ≈ a − λt

    Args:
        times: 时间网格
        series: 能量序列
        window: 拟合区间，默认 [T/2, T]

    Returns:
        DecayFit；常数序列给出 λ=0、r²=0 并标记 degenerate

    Raises:
        DecayFitError: 窗口内有非正值
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    T = float(times[-1])
    lo, hi = window if window is not None else (0.5 * T, T)
    mask = (times >= lo) & (times <= hi)
    if mask.sum() < 2:
        raise DecayFitError(f"拟合窗口 [{lo}, {hi}] 内采样点不足")
    values = series[mask]
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise DecayFitError(f"拟合窗口 [{lo:g}, {hi:g}] 内能量非正，尝试更长的 T 或视为不衰减")

    logs = np.log(values)
    if np.ptp(logs) == 0.0:
        return DecayFit(0.0, 0.0, (lo, hi), degenerate=True)

    fit = linregress(times[mask], logs)
    lam = max(-float(fit.slope), 0.0)
    r2 = float(fit.rvalue ** 2)
    exponential = lam > 0 and r2 >= Config.DIAGNOSTICS["fit_r2_threshold"]

    # t = 0 不进入 log–log 回归
    positive = times[mask] > 0
    power_exponent, power_r2 = math.nan, math.nan
    if positive.sum() >= 2:
        power = linregress(np.log(times[mask][positive]), logs[positive])
        power_exponent = max(-float(power.slope), 0.0)
        power_r2 = float(power.rvalue ** 2)
    return DecayFit(lam, r2, (lo, hi), exponential=exponential,
                    power_exponent=power_exponent, power_r2=power_r2)


# ============================================================
# 逐点界
# ============================================================

@dataclass(frozen=True)
class LemmaBounds:
    """两个逐点界的检查：最大比值应不超过 constant"""
    constant: float
    gradient_ratio: float
    memory_ratio: float
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"constant": self.constant, "gradient_ratio": self.gradient_ratio,
                "memory_ratio": self.memory_ratio, "violations": self.violations}


def lemma_bounds(traj: Trajectory) -> LemmaBounds:
    """
    K = 2(1 + max{0, (2τc²−γ)/(γ−τc²)})

      c²‖∇ξ‖² ≤ K·2E，‖τgₜ‖² ≤ K·E_mod

    E 带 ½ 因子，第一个界右端为 2E。
    """
    p = traj.params
    if p.memory_gap <= 0:
        raise ParamsInvalidError("逐点界要求 γ > τc²")
    K = 2.0 * (1.0 + max(0.0, (2.0 * p.tau * p.c ** 2 - p.gamma) / p.memory_gap))
    series = energy_series(traj)
    grad = p.c ** 2 * np.sum(traj.mu[:, None] * traj.xi ** 2, axis=0)
    mem = np.sum((p.tau * traj.conv_xi_t_dt) ** 2, axis=0)

    slack = 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        g_ratio = np.where(series["E"] > 0, grad / (2.0 * series["E"]), 0.0)
        m_ratio = np.where(series["Emod"] > 0, mem / series["Emod"], 0.0)
    violations = int(np.sum(g_ratio > K * (1 + slack)) + np.sum(m_ratio > K * (1 + slack)))
    return LemmaBounds(K, float(g_ratio.max()), float(m_ratio.max()), violations)


# ============================================================
# 汇总报告
# ============================================================

@dataclass
class EnergyReport:
    """一次运行的全部能量诊断"""
    times: np.ndarray
    E: np.ndarray
    Emod: np.ndarray
    norm_mod: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    L: np.ndarray
    dissipation: DissipationCheck
    fit: Optional[DecayFit]
    fit_note: str
    constants: Optional[LyapunovConstants]
    lemma: Optional[LemmaBounds]
    notes: list = field(default_factory=list)

    @property
    def dissipation_residual(self) -> np.ndarray:
        return self.dissipation.residual

    @property
    def budget_check(self) -> bool:
        return self.dissipation.passed

    @property
    def lambda_fit(self) -> Optional[float]:
        return self.fit.lambda_fit if self.fit is not None else None

    @property
    def fit_r2(self) -> Optional[float]:
        return self.fit.r2 if self.fit is not None else None

    def sandwich_ok(self) -> Optional[bool]:
        """(N₀−c₀)E ≤ 𝓛 ≤ (N₀+c₀)E 在每一步成立"""
        if self.constants is None:
            return None
        N0, c0 = self.constants.N0, self.constants.c0
        tol = 1e-12 * np.maximum(self.E, 1.0)
        return bool(np.all((N0 - c0) * self.E <= self.L + tol) and np.all(self.L <= (N0 + c0) * self.E + tol))

    def rows(self):
        """CSV 行 t,E,Emod,norm_mod,F1,F2,L,dissipation_residual"""
        for n in range(self.times.size):
            yield (self.times[n], self.E[n], self.Emod[n], self.norm_mod[n],
                   self.F1[n], self.F2[n], self.L[n], self.dissipation.residual[n])


def decay_label(fit: DecayFit, exponential_regime: bool) -> str:
    """
    衰减标签: "exponential" / "no exponential fit (weak decay)" / "no exponential fit"

    记忆核不满足指数衰减假设时一律不标 exponential，即使 log E 的直线拟合 r² 很高。
    """
    if not exponential_regime:
        return WEAK_DECAY
    if fit.exponential:
        return "exponential"
    return "no exponential fit"


def energy_report(traj: Trajectory, c_a2: float, ctilde: Optional[float] = None,
                  window: Optional[Tuple[float, float]] = None,
                  exponential_regime: Optional[bool] = None) -> EnergyReport:
    """
    计算全部诊断

    Args:
        exponential_regime: 记忆核是否满足指数衰减假设组；None 时按核是否可写成
            k(t)e^{-βt}（或为 dirac）判断

    Raises:
        EnergyAnomalyError: γ ≥ τc² 时出现负能量
    """
    if exponential_regime is None:
        exponential_regime = traj.kernel.is_dirac or traj.kernel.tempering is not None
    series = energy_series(traj)
    p = traj.params
    if p.memory_gap >= 0:
        for name in ("E", "Emod", "norm_mod"):
            if np.any(series[name] < 0):
                n = int(np.argmin(series[name]))
                raise EnergyAnomalyError(f"{name} 在 t={traj.times[n]:.4g} 处为负: {series[name][n]:.3e}")

    dissipation = dissipation_check(traj, c_a2, series["E"])
    notes = []

    try:
        fit = fit_decay(traj.times, series["E"], window)
        fit_note = decay_label(fit, exponential_regime)
        if fit_note == WEAK_DECAY and not math.isnan(fit.power_r2):
            notes.append(f"幂律拟合 E ≈ C·t^(-{fit.power_exponent:.4g}), r2 = {fit.power_r2:.4f}")
    except DecayFitError as e:
        fit, fit_note = None, f"no exponential fit ({e})"

    constants = None
    lemma = None
    L = np.full(traj.times.size, np.nan)
    if p.decay_ok:
        try:
            constants = lyapunov_constants(p, traj.system, ctilde)
            L = constants.N0 * series["E"] + series["F1"] + constants.N1 * series["F2"]
        except ValueError as e:
            notes.append(f"Lyapunov 常数不可用: {e}")
        lemma = lemma_bounds(traj)
        if not lemma.passed:
            logger.warning(f"逐点界被违反 {lemma.violations} 次 (K={lemma.constant:.4g})")
    else:
        notes.append("γ = τc² 或 ν = 0，不构造 Lyapunov 泛函")

    if ctilde is None and constants is not None:
        notes.append("c̃ 不可用，N₀ 未计入记忆项条件")

    logger.info(
        f"能量诊断: E(0)={series['E'][0]:.6g}, E(T)={series['E'][-1]:.6g}, "
        f"预算 {'通过' if dissipation.passed else '失败'}, {fit_note}"
    )
    return EnergyReport(traj.times, series["E"], series["Emod"], series["norm_mod"],
                        series["F1"], series["F2"], L, dissipation, fit, fit_note,
                        constants, lemma, notes)
