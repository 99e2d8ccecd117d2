"""
记忆核模块
构造、求值与分解记忆核 𝔎 = (原点点质量) + (局部可积密度)，
计算预解式 𝔎̃ = A·δ₀ + r 以及乘积求积权重。

权重约定（右端点配置）:
    (k∗y)(tₙ) ≈ Σ_{j=0}^{n} w[n−j]·y(tⱼ) + start[n]·y(t₀)
  - rectangle: 协因子在每个子区间取右端点值，w[j] 为核在第 j 个子区间上的精确矩；
  - trapezoid: 协因子分段线性插值，权重由精确的零阶与一阶矩组合得到。
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.special import gamma, gammainc, rgamma

from memwave.config import Config
from memwave.core.mittag_leffler import mittag_leffler_array
from memwave.errors import KernelParameterError, UnsupportedResolventError
from memwave.utils import format_call_spec, parse_call_spec

logger = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]

# closed_order 取此值表示任意阶逐次积分都有闭式
ALL_ORDERS = 99


class KernelFamily(Enum):
    """记忆核族"""
    DIRAC = "dirac"
    EXPONENTIAL = "exponential"
    ABEL = "abel"
    ABEL_TEMPERED = "abel_tempered"
    MITTAG_LEFFLER = "mittag_leffler"
    POLYNOMIAL = "polynomial"
    CUSTOM = "custom"


class QuadratureRule(Enum):
    """乘积求积规则"""
    RECTANGLE = "rectangle"
    TRAPEZOID = "trapezoid"


@dataclass(frozen=True)
class KernelPart:
    """
    (0, ∞) 上的正则函数 q(t)

    记忆核的密度与预解式的正则部分都用它表示。integrals(t, m) 给出
    逐次积分 (1^{∗m}∗q)(t)，仅对 1 ≤ m ≤ closed_order 有效。
    """
    values: ArrayFn
    at_zero: float
    derivative: Optional[ArrayFn] = None
    integrals: Optional[Callable[[np.ndarray, int], np.ndarray]] = None
    closed_order: int = 0
    label: str = ""

    def __call__(self, t) -> np.ndarray:
        return self.values(np.asarray(t, dtype=float))

    @property
    def singular(self) -> bool:
        return math.isinf(self.at_zero)

    def integral(self, t, order: int) -> np.ndarray:
        if order < 1 or order > self.closed_order or self.integrals is None:
            raise ValueError(f"{self.label or 'part'} 没有 {order} 阶闭式积分")
        return self.integrals(np.asarray(t, dtype=float), order)

    @classmethod
    def from_samples(cls, times: np.ndarray, samples: np.ndarray, label: str = "sampled") -> "KernelPart":
        """
        由均匀网格上的采样值构造

        逐次积分用累积梯形公式在同一网格上预先算好，只在网格点上精确。
        """
        times = np.asarray(times, dtype=float)
        samples = np.asarray(samples, dtype=float)
        cumulative = [samples]
        for _ in range(4):
            cumulative.append(cumulative_trapezoid(cumulative[-1], times, initial=0.0))

        def values(t):
            return np.interp(t, times, samples)

        def integrals(t, m):
            return np.interp(t, times, cumulative[m])

        return cls(
            values=values,
            at_zero=float(samples[0]),
            integrals=integrals,
            closed_order=4,
            label=label,
        )


@dataclass(frozen=True)
class Kernel:
    """记忆核 𝔎 = point_mass·δ₀ + density"""
    family: KernelFamily
    params: Dict[str, float]
    point_mass: float
    density: KernelPart
    tempering: Optional[float] = None          # 可写成 k(t)e^{-βt} 时的 β
    laplace: Optional[Callable[[np.ndarray], np.ndarray]] = None  # 密度的 Laplace 变换
    resolvent_hint: Optional[Tuple[float, KernelPart]] = None      # 调用方提供的 (A, r)

    def __call__(self, t) -> np.ndarray:
        return self.density(t)

    @property
    def is_dirac(self) -> bool:
        return self.family == KernelFamily.DIRAC

    @property
    def spec(self) -> str:
        return format_call_spec(self.family.value, self.params)

    def transform(self, s: np.ndarray) -> np.ndarray:
        """整个测度的 Laplace 变换 point_mass + L[density](s)"""
        if self.laplace is None:
            raise ValueError(f"{self.spec} 没有闭式 Laplace 变换")
        return self.point_mass + self.laplace(np.asarray(s, dtype=complex))

    def factored(self) -> KernelPart:
        """去掉指数因子后的 k(t) = density(t)·e^{βt}"""
        if self.tempering is None:
            raise ValueError(f"{self.spec} 不是 k(t)e^{{-βt}} 形式")
        beta = self.tempering
        dens = self.density
        return KernelPart(
            values=lambda t: dens.values(t) * np.exp(beta * t),
            at_zero=dens.at_zero,
            label=f"factored {self.spec}",
        )

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "params": dict(self.params),
            "point_mass": self.point_mass,
            "tempering": self.tempering,
        }


@dataclass(frozen=True)
class ResolventRepr:
    """预解式 𝔎̃ = A·δ₀ + r"""
    A: float
    r: KernelPart
    r_t: Optional[np.ndarray]
    method: str
    dt: float
    n_steps: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def samples(self) -> np.ndarray:
        """r 在网格上的采样，t=0 处取右极限（可能为 inf）"""
        t = self.times
        out = np.empty_like(t)
        out[0] = self.r.at_zero
        out[1:] = self.r(t[1:])
        return out


@dataclass(frozen=True)
class ConvWeights:
    """乘积求积权重"""
    dt: float
    n_steps: int
    rule: QuadratureRule
    w: np.ndarray
    start: np.ndarray
    point_mass: float = 0.0   # 瞬时贡献 point_mass·y(tₙ)，不含在 w 中

    @property
    def empty(self) -> bool:
        return self.w.size == 0

    def scaled(self, coeff: float) -> "ConvWeights":
        return ConvWeights(self.dt, self.n_steps, self.rule, coeff * self.w,
                           coeff * self.start, coeff * self.point_mass)


# ============================================================
# 幂函数与常数部分
# ============================================================

def power_part(coef: float, exponent: float, label: str = "") -> KernelPart:
    """q(t) = coef·t^exponent，exponent > −1，逐次积分全部闭式"""
    if exponent <= -1.0:
        raise ValueError(f"t^{exponent} 在 0 附近不可积")

    if exponent < 0:
        at_zero = math.inf if coef != 0 else 0.0
    elif exponent == 0:
        at_zero = coef
    else:
        at_zero = 0.0

    g1 = gamma(exponent + 1.0)

    def values(t):
        with np.errstate(divide="ignore"):
            return coef * np.power(t, exponent)

    def derivative(t):
        if exponent == 0:
            return np.zeros_like(t)
        with np.errstate(divide="ignore"):
            return coef * exponent * np.power(t, exponent - 1.0)

    def integrals(t, m):
        return coef * g1 * rgamma(exponent + 1.0 + m) * np.power(t, exponent + m)

    return KernelPart(values, at_zero, derivative, integrals, ALL_ORDERS, label or f"{coef}·t^{exponent}")


def sum_parts(*parts: KernelPart, label: str = "") -> KernelPart:
    """若干部分之和，逐次积分闭式阶数取最小值"""
    closed = min(p.closed_order for p in parts)
    at_zero = sum(p.at_zero for p in parts)

    def values(t):
        return sum(p.values(t) for p in parts)

    def integrals(t, m):
        return sum(p.integrals(t, m) for p in parts)

    return KernelPart(values, at_zero, None, integrals if closed else None, closed,
                      label or " + ".join(p.label for p in parts))


# ============================================================
# 各族记忆核
# ============================================================

def _require(condition: bool, family: str, constraint: str, params: dict):
    if not condition:
        raise KernelParameterError(f"{family} 参数违反约束 {constraint}: {params}")


def _number(params: dict, name: str, family: str) -> float:
    if name not in params:
        raise KernelParameterError(f"{family} 缺少参数 {name}")
    try:
        return float(params[name])
    except (TypeError, ValueError) as e:
        raise KernelParameterError(f"{family} 参数 {name}={params[name]!r} 不是实数") from e


def _dirac(params: dict) -> Kernel:
    zero = KernelPart(
        values=lambda t: np.zeros_like(t),
        at_zero=0.0,
        derivative=lambda t: np.zeros_like(t),
        integrals=lambda t, m: np.zeros_like(t),
        closed_order=ALL_ORDERS,
        label="0",
    )
    return Kernel(KernelFamily.DIRAC, {}, 1.0, zero,
                  laplace=lambda s: np.zeros_like(s))


def _exp_iterated(beta: float, t: np.ndarray, m: int) -> np.ndarray:
    """
    (1^{∗m}∗e^{−β·})(t) = (−β)^{−m}·[e^{−βt} − Σ_{j<m} (−βt)^j/j!]

    βt 较小时改用级数 t^m·Σ_{j≥0} (−βt)^j/(j+m)!，避免相消。
    """
    t = np.asarray(t, dtype=float)
    x = beta * t
    out = np.empty_like(t)

    small = x < 2.0
    xs = x[small]
    term = np.full_like(xs, 1.0 / math.factorial(m))
    series = term.copy()
    for j in range(1, 40):
        term = term * (-xs) / (j + m)
        series += term
    out[small] = np.power(t[small], m) * series

    xl = x[~small]
    poly = sum((-xl) ** j / math.factorial(j) for j in range(m))
    out[~small] = (np.exp(-xl) - poly) / (-beta) ** m
    return out


def _exponential(params: dict) -> Kernel:
    beta = _number(params, "beta", "exponential")
    _require(beta > 0, "exponential", "beta > 0", params)

    def integrals(t, m):
        if m == 1:
            return -np.expm1(-beta * t) / beta
        return _exp_iterated(beta, t, m)

    part = KernelPart(
        values=lambda t: np.exp(-beta * t),
        at_zero=1.0,
        derivative=lambda t: -beta * np.exp(-beta * t),
        integrals=integrals,
        closed_order=ALL_ORDERS,
        label=f"exp(-{beta}t)",
    )
    return Kernel(KernelFamily.EXPONENTIAL, {"beta": beta}, 0.0, part,
                  tempering=beta, laplace=lambda s: 1.0 / (s + beta))


def _abel(params: dict) -> Kernel:
    alpha = _number(params, "alpha", "abel")
    _require(0 < alpha < 1, "abel", "0 < alpha < 1", params)
    part = power_part(float(rgamma(alpha)), alpha - 1.0, label=f"t^{alpha - 1}/Γ({alpha})")
    return Kernel(KernelFamily.ABEL, {"alpha": alpha}, 0.0, part,
                  laplace=lambda s: np.power(s, -alpha))


def _abel_tempered(params: dict) -> Kernel:
    alpha = _number(params, "alpha", "abel_tempered")
    beta = _number(params, "beta", "abel_tempered")
    _require(0 < alpha < 1, "abel_tempered", "0 < alpha < 1", params)
    _require(beta > 0, "abel_tempered", "beta > 0", params)
    scale = float(rgamma(alpha))

    def values(t):
        with np.errstate(divide="ignore"):
            return scale * np.power(t, alpha - 1.0) * np.exp(-beta * t)

    def integrals(t, m):
        x = beta * t
        if m == 1:
            return gammainc(alpha, x) / beta ** alpha
        # ∫₀ᵗ P(α, βs) ds = t·P(α, βt) − (α/β)·P(α+1, βt)
        return (t * gammainc(alpha, x) - alpha / beta * gammainc(alpha + 1.0, x)) / beta ** alpha

    part = KernelPart(values, math.inf, None, integrals, 2,
                      f"t^{alpha - 1}e^(-{beta}t)/Γ({alpha})")
    return Kernel(KernelFamily.ABEL_TEMPERED, {"alpha": alpha, "beta": beta}, 0.0, part,
                  tempering=beta, laplace=lambda s: np.power(s + beta, -alpha))


def _mittag_leffler(params: dict) -> Kernel:
    alpha = _number(params, "alpha", "mittag_leffler")
    beta = _number(params, "beta", "mittag_leffler")
    # α = 1 时归一化因子 1/Γ(1−α) 为零，密度退化
    _require(0 < alpha < 1, "mittag_leffler", "0 < alpha < 1", params)
    _require(alpha <= beta <= 1, "mittag_leffler", "alpha <= beta <= 1", params)
    scale = float(rgamma(1.0 - alpha))

    def values(t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return scale * np.power(t, beta - 1.0) * mittag_leffler_array(alpha, beta, -np.power(t, alpha))

    def integrals(t, m):
        # ∫₀ᵗ s^{b−1}E_{α,b}(−s^α) ds = t^b·E_{α,b+1}(−t^α)
        return scale * np.power(t, beta + m - 1.0) * mittag_leffler_array(alpha, beta + m, -np.power(t, alpha))

    at_zero = scale if beta == 1.0 else math.inf
    part = KernelPart(values, at_zero, None, integrals, ALL_ORDERS,
                      f"t^{beta - 1}E_{alpha},{beta}(-t^{alpha})/Γ({1 - alpha})")
    return Kernel(KernelFamily.MITTAG_LEFFLER, {"alpha": alpha, "beta": beta}, 0.0, part,
                  laplace=lambda s: scale * np.power(s, alpha - beta) / (np.power(s, alpha) + 1.0))


def _polynomial(params: dict) -> Kernel:
    p = _number(params, "p", "polynomial")
    _require(p > 1, "polynomial", "p > 1", params)

    def integrals(t, m):
        if m == 1:
            return (1.0 - np.power(1.0 + t, 1.0 - p)) / (p - 1.0)
        if p == 2.0:
            return t - np.log1p(t)
        return (t - (np.power(1.0 + t, 2.0 - p) - 1.0) / (2.0 - p)) / (p - 1.0)

    part = KernelPart(
        values=lambda t: np.power(1.0 + t, -p),
        at_zero=1.0,
        derivative=lambda t: -p * np.power(1.0 + t, -p - 1.0),
        integrals=integrals,
        closed_order=2,
        label=f"(1+t)^-{p}",
    )
    return Kernel(KernelFamily.POLYNOMIAL, {"p": p}, 0.0, part)


_BUILDERS = {
    KernelFamily.DIRAC: _dirac,
    KernelFamily.EXPONENTIAL: _exponential,
    KernelFamily.ABEL: _abel,
    KernelFamily.ABEL_TEMPERED: _abel_tempered,
    KernelFamily.MITTAG_LEFFLER: _mittag_leffler,
    KernelFamily.POLYNOMIAL: _polynomial,
}


def make_kernel(family: Union[KernelFamily, str], params: Optional[dict] = None) -> Kernel:
    """
    构造内置族记忆核

    Args:
        family: 族名或 KernelFamily
        params: 族参数

    Returns:
        Kernel

    Raises:
        KernelParameterError: 未知族或参数越界
    """
    params = dict(params or {})
    try:
        fam = KernelFamily(family) if not isinstance(family, KernelFamily) else family
    except ValueError as e:
        raise KernelParameterError(f"未知记忆核族 '{family}'") from e

    if fam == KernelFamily.CUSTOM:
        return make_custom_kernel(**params)
    return _BUILDERS[fam](params)


def make_custom_kernel(
    density: ArrayFn,
    point_mass: float = 0.0,
    derivative: Optional[ArrayFn] = None,
    at_zero: Optional[float] = None,
    primitive: Optional[ArrayFn] = None,
    laplace: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    tempering: Optional[float] = None,
    resolvent: Optional[Tuple[float, KernelPart]] = None,
    label: str = "custom",
) -> Kernel:
    """
    用户自定义记忆核

    Args:
        density: 向量化密度函数 t ↦ k(t)
        point_mass: 原点点质量系数
        derivative: k'(t)，缺省时用中心差分
        at_zero: k(0⁺)，缺省时在 t=1e-14 处取值估计
        primitive: ∫₀ᵗ k，缺省时数值积分
        laplace: 密度的 Laplace 变换
        tempering: 若 k(t) = k₀(t)e^{-βt}，给出 β
        resolvent: 显式给定的 (A, r)
    """
    if point_mass < 0:
        raise KernelParameterError(f"custom 参数违反约束 point_mass >= 0: {point_mass}")

    def values(t):
        return np.asarray(density(np.asarray(t, dtype=float)), dtype=float)

    if at_zero is None:
        probe = float(values(np.array([1e-14]))[0])
        at_zero = math.inf if (not math.isfinite(probe) or abs(probe) > 1e12) else probe

    if derivative is None:
        def derivative(t, _h=1e-6):
            t = np.asarray(t, dtype=float)
            lo = np.maximum(t - _h, 0.5 * t)
            return (values(t + _h) - values(lo)) / (t + _h - lo)

    integrals = None
    closed = 0
    if primitive is not None:
        closed = 1

        def integrals(t, m):
            return np.asarray(primitive(t), dtype=float)

    part = KernelPart(values, float(at_zero), derivative, integrals, closed, label)
    params = {"point_mass": float(point_mass)}
    if tempering is not None:
        params["tempering"] = float(tempering)
    return Kernel(KernelFamily.CUSTOM, params, float(point_mass), part,
                  tempering=tempering, laplace=laplace, resolvent_hint=resolvent)


def parse_kernel_spec(text: str) -> Kernel:
    """
    解析 `family(name=value, ...)` 形式的记忆核规格

    Examples:
        exponential(beta=2.0), abel(alpha=0.5), polynomial(p=2.0), dirac()
    """
    try:
        name, params = parse_call_spec(text)
    except ValueError as e:
        raise KernelParameterError(str(e)) from e
    if name == KernelFamily.CUSTOM.value:
        raise KernelParameterError("custom 记忆核只能在代码中通过 make_custom_kernel 构造")
    return make_kernel(name, params)


# ============================================================
# 逐次积分与乘积求积权重
# ============================================================

def iterated_integral(part: KernelPart, dt: float, n_steps: int, order: int) -> np.ndarray:
    """
    (1^{∗order}∗q)(tⱼ)，tⱼ = j·dt，j = 0..n_steps

    有闭式时直接求值；否则一阶积分用逐单元自适应求积（可处理端点奇异），
    更高阶在网格上累积梯形积分。
    """
    t = np.arange(n_steps + 1) * dt
    if order <= part.closed_order and part.integrals is not None:
        out = np.asarray(part.integrals(t, order), dtype=float)
        out[0] = 0.0
        return out

    if part.closed_order >= 1 and part.integrals is not None:
        level = part.closed_order
        current = np.asarray(part.integrals(t, level), dtype=float)
        current[0] = 0.0
    else:
        level = 1
        limit = Config.QUADRATURE["cell_quad_limit"]
        cells = np.empty(n_steps)
        for j in range(n_steps):
            cells[j], _ = quad(lambda s: float(part.values(np.asarray(s))), t[j], t[j + 1], limit=limit)
        current = np.concatenate(([0.0], np.cumsum(cells)))

    while level < order:
        current = cumulative_trapezoid(current, dx=dt, initial=0.0)
        level += 1
    return current


def weights_from_integrals(first: np.ndarray, second: np.ndarray, dt: float,
                           rule: QuadratureRule, point_mass: float = 0.0) -> ConvWeights:
    """
    由逐次积分 Q₁ = 1∗q、Q₂ = 1∗1∗q 的网格值构造权重

    单元 i = [i·dt, (i+1)·dt] 上:
        m_i = Q₁(t_{i+1}) − Q₁(t_i)
        b_i = (1/dt)∫ q(u)(u − t_i) du = Q₁(t_{i+1}) − (Q₂(t_{i+1}) − Q₂(t_i))/dt
        a_i = m_i − b_i
    """
    rule = QuadratureRule(rule)
    n_steps = first.size - 1
    moments = np.diff(first)

    w = np.zeros(n_steps + 1)
    start = np.zeros(n_steps + 1)
    if rule == QuadratureRule.RECTANGLE:
        w[:n_steps] = moments
        start[:n_steps] = -moments
    else:
        b = first[1:] - np.diff(second) / dt
        a = moments - b
        w[0] = a[0]
        w[1:n_steps] = a[1:] + b[:-1]
        w[n_steps] = b[n_steps - 1]
        start[:n_steps] = -a
    return ConvWeights(dt, n_steps, rule, w, start, point_mass)


def conv_weights(kernel_part: Union[Kernel, KernelPart], dt: float, n_steps: int,
                 rule: Optional[Union[QuadratureRule, str]] = None) -> ConvWeights:
    """
    记忆核密度或预解式正则部分的乘积求积权重

    Args:
        kernel_part: Kernel（取其密度）或 KernelPart
        dt: 时间步长
        n_steps: 步数 N
        rule: rectangle / trapezoid，默认取 Config.QUADRATURE["rule"]

    Returns:
        ConvWeights；dirac 核返回空权重，点质量记在 point_mass 中
    """
    if dt <= 0 or n_steps < 1:
        raise ValueError(f"需要 dt > 0 且 N >= 1，得到 dt={dt}, N={n_steps}")
    rule = QuadratureRule(rule or Config.QUADRATURE["rule"])

    if isinstance(kernel_part, Kernel):
        if kernel_part.is_dirac:
            empty = np.zeros(0)
            return ConvWeights(dt, n_steps, rule, empty, empty, kernel_part.point_mass)
        point_mass = kernel_part.point_mass
        part = kernel_part.density
    else:
        point_mass = 0.0
        part = kernel_part

    first = iterated_integral(part, dt, n_steps, 1)
    second = iterated_integral(part, dt, n_steps, 2) if rule == QuadratureRule.TRAPEZOID else first
    return weights_from_integrals(first, second, dt, rule, point_mass)


def discrete_convolution(weights: ConvWeights, x: np.ndarray) -> np.ndarray:
    """对整段序列求 (k∗x)(tₙ)，n = 0..N；不含点质量贡献"""
    x = np.asarray(x, dtype=float)
    if weights.empty:
        return np.zeros_like(x)
    n = x.size
    out = np.convolve(weights.w[:n], x)[:n]
    out += weights.start[:n] * x[0]
    out[0] = 0.0
    return out


# ============================================================
# 预解式
# ============================================================

def _constant_part(value: float, label: str) -> KernelPart:
    return power_part(value, 0.0, label=label)


def _tempered_abel_resolvent(alpha: float, beta: float) -> KernelPart:
    """(s+β)^α/s 的反变换: t^{−α}e^{−βt}/Γ(1−α) + β^α·P(1−α, βt)"""
    a = 1.0 - alpha
    scale = float(rgamma(a))

    def values(t):
        with np.errstate(divide="ignore"):
            return scale * np.power(t, -alpha) * np.exp(-beta * t) + beta ** alpha * gammainc(a, beta * t)

    def integrals(t, m):
        x = beta * t
        singular = gammainc(a, x) / beta ** a
        smooth = beta ** alpha * (t * gammainc(a, x) - a / beta * gammainc(a + 1.0, x))
        return singular + smooth

    return KernelPart(values, math.inf, None, integrals, 1, "tempered abel resolvent")


def _closed_form_resolvent(kernel: Kernel) -> Optional[Tuple[float, KernelPart]]:
    fam = kernel.family
    p = kernel.params
    if fam == KernelFamily.DIRAC:
        return 0.0, _constant_part(1.0, "1")
    if fam == KernelFamily.EXPONENTIAL:
        return 1.0, _constant_part(p["beta"], f"{p['beta']}")
    if fam == KernelFamily.ABEL:
        alpha = p["alpha"]
        return 0.0, power_part(float(rgamma(1.0 - alpha)), -alpha, label=f"t^-{alpha}/Γ({1 - alpha})")
    if fam == KernelFamily.ABEL_TEMPERED:
        return 0.0, _tempered_abel_resolvent(p["alpha"], p["beta"])
    if fam == KernelFamily.MITTAG_LEFFLER:
        alpha, beta = p["alpha"], p["beta"]
        g = float(gamma(1.0 - alpha))
        if beta == 1.0:
            # Γ(1−α)(s^α+1)/s^α = Γ(1−α)(1 + s^{−α})
            return g, power_part(g * float(rgamma(alpha)), alpha - 1.0, label="ml resolvent")
        return 0.0, sum_parts(
            power_part(g * float(rgamma(1.0 - beta)), -beta),
            power_part(g * float(rgamma(1.0 + alpha - beta)), alpha - beta),
            label="ml resolvent",
        )
    if kernel.resolvent_hint is not None:
        return kernel.resolvent_hint
    return None


def _derivative_part(density: KernelPart) -> KernelPart:
    """k' 作为 KernelPart: (1∗k')(t) = k(t) − k(0)，更高阶由 k 的积分平移得到"""
    k0 = density.at_zero

    def integrals(t, m):
        if m == 1:
            return density.values(t) - k0
        return density.integrals(t, m - 1) - k0 * np.power(t, m - 1) / math.factorial(m - 1)

    closed = 1 + (density.closed_order if density.integrals is not None else 0)
    return KernelPart(density.derivative, float(density.derivative(np.array([0.0]))[0]),
                      None, integrals, closed, f"d/dt {density.label}")


def resolvent(kernel: Kernel, dt: float, n_steps: int) -> ResolventRepr:
    """
    计算预解式 𝔎̃ = A·δ₀ + r，满足 𝔎∗𝔎̃ = 1

    闭式: dirac (A=0, r≡1)、exponential (A=1, r≡β)、abel (A=0, r=t^{−α}/Γ(1−α))、
    abel_tempered、mittag_leffler。其余族在网格上数值推进:
      - 无点质量: k(0)·r + k'∗r = −A·k'，A = 1/k(0⁺)
      - 点质量 B > 0: B·r + s∗r = 1，A = 0

    Raises:
        UnsupportedResolventError: k(0⁺) ∈ {0, ∞} 且没有闭式
    """
    from memwave.core.volterra import VolterraOp, march

    times = np.arange(n_steps + 1) * dt
    closed = _closed_form_resolvent(kernel)
    if closed is not None:
        A, part = closed
        r_t = None
        if kernel.point_mass > 0:
            r_t = _finite_difference(part, times)
        logger.debug(f"预解式闭式: {kernel.spec}, A={A}")
        return ResolventRepr(A, part, r_t, "closed_form", dt, n_steps)

    density = kernel.density
    trapezoid = QuadratureRule.TRAPEZOID

    if kernel.point_mass > 0:
        B = kernel.point_mass
        weights = conv_weights(density, dt, n_steps, trapezoid if not density.singular else QuadratureRule.RECTANGLE)
        op = VolterraOp(c0=B, terms=[(1.0, weights)], n_steps=n_steps, dt=dt)
        r = march(op, np.ones(n_steps + 1))
        r[0] = 1.0 / B
        part = KernelPart.from_samples(times, r, label=f"resolvent {kernel.spec}")
        r_t = np.gradient(r, dt)
        logger.debug(f"预解式数值推进（点质量 {B}）: {kernel.spec}")
        return ResolventRepr(0.0, part, r_t, "numeric", dt, n_steps)

    k0 = density.at_zero
    if not math.isfinite(k0) or k0 == 0.0:
        raise UnsupportedResolventError(
            f"{kernel.spec}: k(0⁺)={k0} 且无闭式预解式，请通过 make_custom_kernel(resolvent=(A, r)) 显式提供"
        )

    A = 1.0 / k0
    dpart = _derivative_part(density)
    weights = conv_weights(dpart, dt, n_steps, trapezoid)
    forcing = -A * dpart.values(times)
    op = VolterraOp(c0=k0, terms=[(1.0, weights)], n_steps=n_steps, dt=dt)
    r = march(op, forcing)
    part = KernelPart.from_samples(times, r, label=f"resolvent {kernel.spec}")
    logger.debug(f"预解式数值推进: {kernel.spec}, A={A:.6g}, r(0)={r[0]:.6g}")
    return ResolventRepr(A, part, None, "numeric", dt, n_steps)


def _finite_difference(part: KernelPart, times: np.ndarray) -> np.ndarray:
    samples = np.empty_like(times)
    samples[0] = part.at_zero
    samples[1:] = part(times[1:])
    if not np.all(np.isfinite(samples)):
        raise UnsupportedResolventError("点质量情形要求 r ∈ W^{1,q}，但 r 在 0 处奇异")
    return np.gradient(samples, times[1] - times[0])


def resolvent_identity_residual(kernel: Kernel, res: ResolventRepr) -> np.ndarray:
    """
    |(𝔎∗𝔎̃)(tₙ) − 1|，n = 1..N

    (𝔎∗𝔎̃)(t) = B·r(t) + A·k(t) + (k∗r)(t)。闭式 r 用自适应求积
    （在中点切分，两端的可积奇异各自处理）；采样 r 用梯形乘积权重。
    """
    times = res.times[1:]
    B = kernel.point_mass
    A = res.A
    k = kernel.density

    if kernel.is_dirac:
        conv = np.zeros_like(times)
    elif res.method == "closed_form":
        cfg = Config.get_quadrature_config()
        conv = np.empty_like(times)
        rk = res.r
        for i, t in enumerate(times):
            f = lambda s, t=t: float(k.values(np.asarray(t - s)) * rk.values(np.asarray(s)))
            left, _ = quad(f, 0.0, 0.5 * t, epsabs=cfg["identity_epsabs"], epsrel=cfg["identity_epsrel"], limit=200)
            right, _ = quad(f, 0.5 * t, t, epsabs=cfg["identity_epsabs"], epsrel=cfg["identity_epsrel"], limit=200)
            conv[i] = left + right
    else:
        weights = conv_weights(k, res.dt, res.n_steps, QuadratureRule.TRAPEZOID)
        conv = discrete_convolution(weights, res.samples())[1:]

    total = B * res.r(times) + A * k(times) + conv
    return np.abs(total - 1.0)
