"""
空间离散模块
一维 Dirichlet 区间上的谱 Galerkin 设置：特征对、初值投影与相容性检查

正交基 φᵢ(x) = √(2/L)·sin(iπx/L)，特征值 μᵢ = (iπ/L)²；质量矩阵为单位阵、
刚度矩阵为 diag(μ)，各模态的 Volterra 方程因此完全解耦。
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import simpson

from memwave.config import Config
from memwave.core.kernels import Kernel, ResolventRepr
from memwave.errors import CompatibilityError, ParamsInvalidError
from memwave.utils import parse_call_spec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EquationParams:
    """方程参数 τ, c, γ, ν"""
    tau: float
    c: float
    gamma: float
    nu: float

    def __post_init__(self):
        for name in ("tau", "c", "gamma"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParamsInvalidError(f"参数 {name} 必须为正数，得到 {value}")
        if not (math.isfinite(self.nu) and self.nu >= 0):
            raise ParamsInvalidError(f"参数 nu 必须非负，得到 {self.nu}")

    @property
    def memory_gap(self) -> float:
        """γ − τc²"""
        return self.gamma - self.tau * self.c ** 2

    @property
    def wellposed_ok(self) -> bool:
        return self.memory_gap >= 0 and self.nu > 0

    @property
    def decay_ok(self) -> bool:
        return self.memory_gap > 0 and self.nu > 0

    def check_wellposed(self):
        """不满足适定性假设 γ ≥ τc², ν > 0 时抛出 ParamsInvalidError"""
        if not self.wellposed_ok:
            raise ParamsInvalidError(
                f"适定性要求 γ ≥ τc² 且 ν > 0: γ={self.gamma}, τc²={self.tau * self.c ** 2}, ν={self.nu}"
            )

    def to_dict(self) -> dict:
        return {"tau": self.tau, "c": self.c, "gamma": self.gamma, "nu": self.nu}


@dataclass(frozen=True)
class InitialField:
    """一个初值场：显式系数或闭式函数规格（二选一）"""
    coeffs: Optional[Tuple[float, ...]] = None
    function: Optional[str] = None

    def __post_init__(self):
        if self.coeffs is not None and self.function is not None:
            raise ValueError("初值只能给出 coeffs 或 function 之一")

    @property
    def is_zero(self) -> bool:
        return self.coeffs is None and self.function is None

    def to_dict(self) -> dict:
        if self.coeffs is not None:
            return {"coeffs": list(self.coeffs)}
        if self.function is not None:
            return {"function": self.function}
        return {}


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    """谱 Galerkin 系统"""
    L: float
    n: int
    mu: np.ndarray
    xi0: np.ndarray
    xi1: np.ndarray
    xi2K: np.ndarray

    @property
    def poincare_constant(self) -> float:
        """‖u‖ ≤ C_P‖∇u‖ 的常数 1/√μ₁ = L/π"""
        return 1.0 / math.sqrt(self.mu[0])

    def basis(self, x: np.ndarray) -> np.ndarray:
        """φᵢ(x) 矩阵，形状 (n, len(x))"""
        idx = np.arange(1, self.n + 1)[:, None]
        return math.sqrt(2.0 / self.L) * np.sin(idx * math.pi * np.asarray(x)[None, :] / self.L)

    def evaluate(self, coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
        return coeffs @ self.basis(x)

    def permuted(self, order: Sequence[int]) -> "GalerkinSystem":
        """按给定次序重排模态（特征值不再单调，只用于解耦性检查）"""
        order = np.asarray(order)
        return _unchecked_system(self.L, self.n, self.mu[order], self.xi0[order],
                                 self.xi1[order], self.xi2K[order])


def _unchecked_system(L, n, mu, xi0, xi1, xi2K) -> GalerkinSystem:
    return GalerkinSystem(float(L), int(n), np.asarray(mu, float), np.asarray(xi0, float),
                          np.asarray(xi1, float), np.asarray(xi2K, float))


# ============================================================
# 初值函数目录
# ============================================================

def _sin_modes(L: float, k: int = 1, amp: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: amp * np.sin(int(k) * math.pi * x / L)


def _gaussian(L: float, center: Optional[float] = None, width: Optional[float] = None,
              amp: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    c = 0.5 * L if center is None else float(center)
    w = 0.1 * L if width is None else float(width)
    if w <= 0:
        raise ValueError(f"gaussian 宽度必须为正，得到 {w}")
    return lambda x: amp * np.exp(-((x - c) / w) ** 2)


def _zero(L: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.zeros_like(x)


FUNCTION_CATALOG = {
    "sin_modes": _sin_modes,
    "gaussian": _gaussian,
    "zero": _zero,
}


def resolve_function(spec: str, L: float) -> Callable[[np.ndarray], np.ndarray]:
    """把 `sin_modes(k=1, amp=1.0)` 之类的规格解析为 x 的函数"""
    name, params = parse_call_spec(spec)
    if name not in FUNCTION_CATALOG:
        raise ValueError(f"未知初值函数 '{name}'，可选: {', '.join(FUNCTION_CATALOG)}")
    try:
        return FUNCTION_CATALOG[name](L, **params)
    except TypeError as e:
        raise ValueError(f"初值函数 '{spec}' 参数错误: {e}") from e


def project_function(fn: Callable[[np.ndarray], np.ndarray], L: float, n: int) -> np.ndarray:
    """
    把函数投影到前 n 个正交模态

    复合 Simpson 求积，每个模态 8 个区间。模态数不超过区间数的三角多项式
    被精确积分，因此投影幂等。
    """
    panels = Config.PROJECTION["panels_per_mode"] * n
    x = np.linspace(0.0, L, panels + 1)
    values = np.asarray(fn(x), dtype=float)
    idx = np.arange(1, n + 1)[:, None]
    phi = math.sqrt(2.0 / L) * np.sin(idx * math.pi * x[None, :] / L)
    return simpson(phi * values[None, :], x=x, axis=1)


def _coefficients(field_spec: Union[InitialField, Sequence[float], None], L: float, n: int) -> np.ndarray:
    if field_spec is None:
        return np.zeros(n)
    if not isinstance(field_spec, InitialField):
        field_spec = InitialField(coeffs=tuple(float(v) for v in field_spec))
    if field_spec.is_zero:
        return np.zeros(n)
    if field_spec.function is not None:
        return project_function(resolve_function(field_spec.function, L), L, n)

    coeffs = np.asarray(field_spec.coeffs, dtype=float)
    if coeffs.size > n:
        raise ValueError(f"给出了 {coeffs.size} 个系数，但只有 {n} 个模态")
    out = np.zeros(n)
    out[:coeffs.size] = coeffs
    return out


def build_system(
    L: float,
    n: int,
    psi0: Union[InitialField, Sequence[float], None] = None,
    psi1: Union[InitialField, Sequence[float], None] = None,
    psi2: Union[InitialField, Sequence[float], None] = None,
) -> GalerkinSystem:
    """
    构造 Galerkin 系统

    Args:
        L: 区间长度
        n: 模态数
        psi0, psi1, psi2: ψ₀、ψ₁、ψ₂^𝔎 的初值（系数列表或 InitialField）

    Returns:
        GalerkinSystem
    """
    if not (L > 0 and math.isfinite(L)):
        raise ValueError(f"区间长度必须为正，得到 L={L}")
    if n < 1:
        raise ValueError(f"模态数必须 >= 1，得到 n={n}")

    mu = (np.arange(1, n + 1) * math.pi / L) ** 2
    xi0 = _coefficients(psi0, L, n)
    xi1 = _coefficients(psi1, L, n)
    xi2K = _coefficients(psi2, L, n)
    for name, vec in (("xi0", xi0), ("xi1", xi1), ("xi2K", xi2K)):
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"初值系数 {name} 含非有限值")

    logger.debug(f"Galerkin 系统: L={L}, n={n}, ‖xi0‖={np.linalg.norm(xi0):.4g}")
    return GalerkinSystem(float(L), int(n), mu, xi0, xi1, xi2K)


# ============================================================
# 相容性条件
# ============================================================

@dataclass(frozen=True)
class CompatibilityResult:
    """相容性检查结果"""
    ok: bool
    norm: float
    rule: str

    def raise_if_violated(self):
        if not self.ok:
            raise CompatibilityError("初值不满足相容性条件", self.norm, self.rule)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "norm": self.norm, "rule": self.rule}


def validate_compatibility(system: GalerkinSystem, kernel: Kernel, res: ResolventRepr) -> CompatibilityResult:
    """
    检查 ψ₁ = A·ψ₂^𝔎（仅当记忆核无点质量时要求）

    A = 0 的 Abel 型核因此要求 ψ₁ = 0；有点质量时不附加条件。
    """
    norm = float(np.linalg.norm(system.xi1 - res.A * system.xi2K))
    if kernel.point_mass != 0:
        return CompatibilityResult(True, norm, "point mass present: no condition")

    rule = f"xi1 = A·xi2K with A={res.A:.6g}"
    tol = 1e-12 * (1.0 + float(np.linalg.norm(system.xi2K)))
    ok = norm <= tol
    if not ok:
        logger.warning(f"相容性条件不满足: ‖xi1 − A·xi2K‖={norm:.3e} > {tol:.1e}")
    return CompatibilityResult(ok, norm, rule)
