"""
时间推进模块
按模态求解 χ̂ = (𝔎∗ξₜ)ₜₜ 的 Volterra 方程并重构全部轨迹量

每个模态满足
    (τ+A)χ̂ + r∗χ̂ + c²μ(A·1∗1∗χ̂ + 1∗1∗r∗χ̂) + γμ·1∗1∗χ̂ + νμ(A·1∗χ̂ + 1∗r∗χ̂) = f
其中 r、1∗r、1∗1∗r、1、t 五张权重表与模态无关，整次运行只构造一次。
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple, Union

import numpy as np

from memwave.config import Config
from memwave.core.discretization import EquationParams, GalerkinSystem, validate_compatibility
from memwave.core.kernels import (
    ConvWeights,
    Kernel,
    QuadratureRule,
    ResolventRepr,
    discrete_convolution,
    iterated_integral,
    resolvent,
    weights_from_integrals,
)
from memwave.core.volterra import VolterraOp, march
from memwave.errors import SolverError, UnsupportedResolventError

logger = logging.getLogger(__name__)

# 五张共享权重表的名字
TABLES = ("r", "1*r", "1*1*r", "1", "t")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """一次运行的全部模态轨迹，数组形状 (n_modes, N+1)"""
    dt: float
    n_steps: int
    times: np.ndarray
    chi_hat: np.ndarray
    xi: np.ndarray
    xi_t: np.ndarray
    conv_xi_t: np.ndarray
    conv_xi_t_dt: np.ndarray
    params: EquationParams
    kernel: Kernel
    resolvent: ResolventRepr
    system: GalerkinSystem
    rule: str

    @property
    def n_modes(self) -> int:
        return self.xi.shape[0]

    @property
    def mu(self) -> np.ndarray:
        return self.system.mu

    def mode(self, i: int) -> Dict[str, np.ndarray]:
        """第 i 个模态的各量"""
        return {
            "chi_hat": self.chi_hat[i],
            "xi": self.xi[i],
            "xi_t": self.xi_t[i],
            "conv_xi_t": self.conv_xi_t[i],
            "conv_xi_t_dt": self.conv_xi_t_dt[i],
        }

    def scaled(self, factor: float) -> "Trajectory":
        """所有模态量乘以 factor（方程关于初值线性）"""
        return replace(
            self,
            chi_hat=factor * self.chi_hat,
            xi=factor * self.xi,
            xi_t=factor * self.xi_t,
            conv_xi_t=factor * self.conv_xi_t,
            conv_xi_t_dt=factor * self.conv_xi_t_dt,
        )

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "n_steps": self.n_steps,
            "n_modes": self.n_modes,
            "rule": self.rule,
            "params": self.params.to_dict(),
            "kernel": self.kernel.to_dict(),
            "resolvent": {"A": self.resolvent.A, "method": self.resolvent.method},
        }


# ============================================================
# 共享权重表
# ============================================================

@dataclass(frozen=True, eq=False)
class ModeOperator:
    """
    与模态无关的预处理结果

    tables: 五张权重表；integrals: r 的逐次积分 I₁(r)、I₂(r) 的网格值（用于右端项与重构）；
    r_grid: r 的网格采样，t=0 处奇异时记为 0（只与为零的系数相乘）。
    """
    dt: float
    n_steps: int
    rule: QuadratureRule
    A: float
    g0_factor: float
    tables: Dict[str, ConvWeights]
    r_grid: np.ndarray
    r_at_zero: float
    r_t: Optional[np.ndarray]
    r_int1: np.ndarray
    r_int2: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @classmethod
    def build(cls, kernel: Kernel, res: ResolventRepr, dt: float, n_steps: int,
              rule: QuadratureRule) -> "ModeOperator":
        if kernel.point_mass != 0 and res.r_t is None:
            raise UnsupportedResolventError(
                f"{kernel.spec}: 有点质量时需要 r ∈ W^{{1,q}} 及其导数 r_t，预解式未提供 r_t"
            )

        r_ints = [iterated_integral(res.r, dt, n_steps, m) for m in range(1, 5)]
        t = np.arange(n_steps + 1) * dt

        # 1 与 t 的逐次积分: I_m(1) = t^m/m!，I_m(t) = t^{m+1}/(m+1)!
        one = [t ** m / math.factorial(m) for m in (1, 2)]
        lin = [t ** (m + 1) / math.factorial(m + 1) for m in (1, 2)]

        tables = {
            "r": weights_from_integrals(r_ints[0], r_ints[1], dt, rule),
            "1*r": weights_from_integrals(r_ints[1], r_ints[2], dt, rule),
            "1*1*r": weights_from_integrals(r_ints[2], r_ints[3], dt, rule),
            "1": weights_from_integrals(one[0], one[1], dt, rule),
            "t": weights_from_integrals(lin[0], lin[1], dt, rule),
        }

        r_grid = res.samples() if (res.dt == dt and res.n_steps == n_steps) else _sample(res, t)
        r_at_zero = float(r_grid[0])
        if not math.isfinite(r_at_zero):
            r_grid = r_grid.copy()
            r_grid[0] = 0.0

        return cls(dt, n_steps, rule, float(res.A), float(kernel.point_mass), tables,
                   r_grid, r_at_zero, res.r_t, r_ints[0], r_ints[1])

    def coefficients(self, mu: float, params: EquationParams) -> Dict[str, float]:
        """各权重表在第 μ 个模态方程中的系数"""
        c2 = params.c ** 2
        return {
            "r": 1.0,
            "1*r": params.nu * mu,
            "1*1*r": c2 * mu,
            "1": params.nu * mu * self.A,
            "t": c2 * mu * self.A + params.gamma * mu,
        }

    def operator(self, mu: float, params: EquationParams) -> VolterraOp:
        coeffs = self.coefficients(mu, params)
        terms = [(coeffs[name], self.tables[name]) for name in TABLES]
        return VolterraOp(c0=params.tau + self.A, terms=terms, n_steps=self.n_steps, dt=self.dt)

    def forcing(self, mu: float, params: EquationParams, xi0: float, xi1: float, xi2: float) -> np.ndarray:
        """
        右端项 f(tₙ)

        f = −ξ₂r − g₀r_t − c²μ(ξ₀ + Aξ₂t + ξ₂·1∗1∗r + g₀·1∗r) − γμ(ξ₂t + g₀)
            − νμ(Aξ₂ + ξ₂·1∗r + g₀r)，g₀ = B·ξ₁
        """
        t = self.times
        A = self.A
        c2 = params.c ** 2
        g0 = self.g0_factor * xi1
        r_t = self.r_t if self.r_t is not None else np.zeros_like(t)

        f = (
            -xi2 * self.r_grid
            - g0 * r_t
            - c2 * mu * (xi0 + A * xi2 * t + xi2 * self.r_int2 + g0 * self.r_int1)
            - params.gamma * mu * (xi2 * t + g0)
            - params.nu * mu * (A * xi2 + xi2 * self.r_int1 + g0 * self.r_grid)
        )
        if not math.isfinite(self.r_at_zero) and xi2 != 0.0:
            f[0] = -math.copysign(math.inf, xi2)
        return f

    @property
    def singular_resolvent(self) -> bool:
        return not math.isfinite(self.r_at_zero)


def _sample(res: ResolventRepr, t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    out[0] = res.r.at_zero
    out[1:] = res.r(t[1:])
    return out


def assemble_mode_op(
    mu: float,
    params: EquationParams,
    kernel: Kernel,
    res: ResolventRepr,
    dt: float,
    n_steps: int,
    rule: Union[QuadratureRule, str, None] = None,
    initial: Tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> Tuple[VolterraOp, np.ndarray]:
    """
    单个模态的 Volterra 算子与右端项

    Args:
        mu: 特征值 μᵢ
        params: 方程参数
        kernel: 记忆核
        res: 预解式
        dt, n_steps: 时间网格
        rule: 求积规则，缺省取 Config.QUADRATURE["rule"]
        initial: (ξ₀, ξ₁, ξ₂^𝔎) 该模态的初值系数

    Returns:
        (VolterraOp, f)
    """
    rule = QuadratureRule(rule or Config.QUADRATURE["rule"])
    mode_op = ModeOperator.build(kernel, res, dt, n_steps, rule)
    xi0, xi1, xi2 = initial
    return mode_op.operator(mu, params), mode_op.forcing(mu, params, xi0, xi1, xi2)


# ============================================================
# 单模态求解与重构
# ============================================================

def _solve_mode(mode_op: ModeOperator, params: EquationParams, mu: float,
                xi0: float, xi1: float, xi2: float) -> Tuple[np.ndarray, ...]:
    op = mode_op.operator(mu, params)
    f = mode_op.forcing(mu, params, xi0, xi1, xi2)
    chi = march(op, f)

    # rectangle 权重不使用 χ̂(0)，奇异起点时按 0 参与卷积
    chi_conv = chi if np.isfinite(chi[0]) else np.concatenate(([0.0], chi[1:]))
    tab = mode_op.tables
    t = mode_op.times
    A = mode_op.A
    g0 = mode_op.g0_factor * xi1

    one_chi = discrete_convolution(tab["1"], chi_conv)
    one_one_chi = discrete_convolution(tab["t"], chi_conv)
    r_chi = discrete_convolution(tab["1*r"], chi_conv)
    rr_chi = discrete_convolution(tab["1*1*r"], chi_conv)

    conv_dt = one_chi + xi2
    conv = one_one_chi + xi2 * t + g0
    xi_t = A * (one_chi + xi2) + r_chi + xi2 * mode_op.r_int1 + g0 * mode_op.r_grid
    xi = xi0 + A * (one_one_chi + xi2 * t) + rr_chi + xi2 * mode_op.r_int2 + g0 * mode_op.r_int1

    # 初值直接取给定系数（相容性已检查）
    conv_dt[0] = xi2
    conv[0] = g0
    xi_t[0] = xi1
    xi[0] = xi0
    return chi, xi, xi_t, conv, conv_dt


def _choose_rule(requested: Optional[Union[QuadratureRule, str]], res: ResolventRepr,
                 system: GalerkinSystem) -> QuadratureRule:
    rule = QuadratureRule(requested or Config.QUADRATURE["rule"])
    singular_forcing = math.isinf(res.r.at_zero) and np.any(system.xi2K != 0)
    if singular_forcing and rule != QuadratureRule.RECTANGLE:
        logger.warning("预解式在 t=0 奇异且 ψ₂^𝔎 ≠ 0，右端项 f(0) 无界，改用 rectangle 权重")
        return QuadratureRule.RECTANGLE
    return rule


def run(
    system: GalerkinSystem,
    params: EquationParams,
    kernel: Kernel,
    dt: float,
    n_steps: int,
    res: Optional[ResolventRepr] = None,
    rule: Union[QuadratureRule, str, None] = None,
    workers: Optional[int] = None,
) -> Trajectory:
    """
    推进所有模态

    Args:
        system: Galerkin 系统
        params: 方程参数
        kernel: 记忆核
        dt: 时间步长
        n_steps: 步数 N
        res: 预解式，缺省时在同一网格上计算
        rule: 求积规则，缺省取 Config.QUADRATURE["rule"]
        workers: 线程数，缺省取 Config.SOLVER["workers"]

    Returns:
        Trajectory

    Raises:
        ParamsInvalidError: 不满足 γ ≥ τc², ν > 0
        CompatibilityError: 初值不相容
        SolverError: 某个模态推进失败（带模态编号）
    """
    if dt <= 0 or n_steps < 1:
        raise ValueError(f"需要 dt > 0 且 N >= 1，得到 dt={dt}, N={n_steps}")
    params.check_wellposed()

    if res is None:
        res = resolvent(kernel, dt, n_steps)
    elif res.method == "numeric" and (res.n_steps != n_steps or not math.isclose(res.dt, dt)):
        raise ValueError(f"数值预解式网格 (dt={res.dt}, N={res.n_steps}) 与运行网格不一致")

    validate_compatibility(system, kernel, res).raise_if_violated()

    quad_rule = _choose_rule(rule, res, system)
    started = time.perf_counter()
    mode_op = ModeOperator.build(kernel, res, dt, n_steps, quad_rule)

    def solve(i: int):
        try:
            out = _solve_mode(mode_op, params, float(system.mu[i]),
                              float(system.xi0[i]), float(system.xi1[i]), float(system.xi2K[i]))
        except SolverError as e:
            raise SolverError(f"模态 {i} 推进失败: {e}", coefficient=e.coefficient, mode=i) from e
        logger.debug(f"模态 {i} 完成: μ={system.mu[i]:.4g}, |ξ(T)|={abs(out[1][-1]):.3e}")
        return out

    n_workers = workers or Config.SOLVER["workers"]
    with ThreadPoolExecutor(max_workers=max(1, n_workers)) as pool:
        results = list(pool.map(solve, range(system.n)))

    stacked = [np.vstack([r[k] for r in results]) for k in range(5)]
    elapsed = time.perf_counter() - started
    logger.info(
        f"推进完成: {kernel.spec}, 模态 {system.n}, N={n_steps}, dt={dt:g}, "
        f"规则 {quad_rule.value}, 耗时 {elapsed:.2f}s"
    )

    return Trajectory(
        dt=float(dt),
        n_steps=int(n_steps),
        times=np.arange(n_steps + 1) * dt,
        chi_hat=stacked[0],
        xi=stacked[1],
        xi_t=stacked[2],
        conv_xi_t=stacked[3],
        conv_xi_t_dt=stacked[4],
        params=params,
        kernel=kernel,
        resolvent=res,
        system=system,
        rule=quad_rule.value,
    )


# ============================================================
# dirac 核闭式解
# ============================================================

def characteristic_roots(mu: float, params: EquationParams) -> np.ndarray:
    """τs³ + s² + (γ+ν)μs + c²μ = 0 的根"""
    return np.roots([params.tau, 1.0, (params.gamma + params.nu) * mu, params.c ** 2 * mu])


def spectral_abscissa(mu: float, params: EquationParams) -> float:
    """特征根的最大实部，dirac 情形能量以 2 倍该值的速率衰减"""
    return float(np.max(characteristic_roots(mu, params).real))


def dirac_oracle(
    mu: float,
    params: EquationParams,
    xi0: float,
    xi1: float,
    xi2: float,
    t: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    dirac 核单模态的闭式解

    τξ‴ + ξ″ + (γ+ν)μξ′ + c²μξ = 0，ξ(0)=ξ₀，ξ′(0)=ξ₁，ξ″(0)=ξ₂。
    解写成 Σ cⱼe^{sⱼt}，系数由 Vandermonde 方程组确定。

    Returns:
        (ξ, ξ′, ξ″) 在 t 上的值
    """
    roots = characteristic_roots(mu, params).astype(complex)
    gaps = np.abs(roots[:, None] - roots[None, :]) + np.eye(3)
    if np.min(gaps) < 1e-10:
        raise ValueError(f"特征方程有重根，闭式解不适用: {roots}")

    vander = np.vander(roots, 3, increasing=True).T
    coeffs = np.linalg.solve(vander, np.array([xi0, xi1, xi2], dtype=complex))
    t = np.asarray(t, dtype=float)
    modes = np.exp(np.outer(t, roots))
    xi = (modes @ coeffs).real
    xi_t = (modes @ (coeffs * roots)).real
    xi_tt = (modes @ (coeffs * roots ** 2)).real
    return xi, xi_t, xi_tt
