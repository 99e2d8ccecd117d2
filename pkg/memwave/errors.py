"""
异常定义模块
所有数值与配置错误的公共基类及 CLI 退出码映射
"""
from typing import Optional


class MemwaveError(Exception):
    """memwave 错误基类"""
    exit_code = 1


class KernelParameterError(MemwaveError, ValueError):
    """记忆核参数超出允许范围"""
    exit_code = 2


class UnsupportedResolventError(MemwaveError):
    """无法为该记忆核构造预解式，需要调用方显式提供"""
    exit_code = 2


class UnsupportedKernelError(MemwaveError):
    """记忆核不满足某项计算的结构前提（例如无法写成 k(t)e^{-βt}）"""
    exit_code = 2


class MittagLefflerError(MemwaveError, ArithmeticError):
    """Mittag-Leffler 级数未收敛"""
    exit_code = 5

    def __init__(self, message: str, alpha: float, beta: float, z: float, terms: int):
        super().__init__(f"{message} (alpha={alpha}, beta={beta}, z={z}, terms={terms})")
        self.alpha = alpha
        self.beta = beta
        self.z = z
        self.terms = terms


class SolverError(MemwaveError):
    """Volterra 推进失败"""
    exit_code = 5

    def __init__(self, message: str, coefficient: Optional[float] = None, mode: Optional[int] = None):
        details = []
        if mode is not None:
            details.append(f"mode={mode}")
        if coefficient is not None:
            details.append(f"c0+Σcoeff·w[0]={coefficient:.3e}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")
        self.coefficient = coefficient
        self.mode = mode


class CompatibilityError(MemwaveError):
    """初值不满足相容性条件 ψ₁ = A·ψ₂^𝔎"""
    exit_code = 3

    def __init__(self, message: str, norm: float, rule: str):
        super().__init__(f"{message}: ‖xi1 − A·xi2K‖ = {norm:.3e} ({rule})")
        self.norm = norm
        self.rule = rule


class ParamsInvalidError(MemwaveError, ValueError):
    """方程参数不满足适定性假设 γ ≥ τc², ν > 0"""
    exit_code = 4


class ScenarioError(MemwaveError):
    """场景配置文件解析失败"""
    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(f"[{field}] {message}" if field else message)
        self.field = field


class DecayFitError(MemwaveError):
    """衰减拟合窗口内出现非正值"""
    exit_code = 5


class EnergyAnomalyError(MemwaveError):
    """γ ≥ τc² 时出现负能量"""
    exit_code = 6
