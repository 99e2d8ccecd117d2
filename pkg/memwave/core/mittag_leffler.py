"""
Mittag-Leffler 函数模块
实数非正自变量上的双参数 Mittag-Leffler 函数 E_{α,β}(z)

两种求值方式:
  - Taylor 级数 Σ z^k/Γ(αk+β)，在 mpmath 中按最大项量级自适应设置精度，
    避免交错级数的相消误差；
  - 渐近展开 −Σ z^{-k}/Γ(β−αk)（0 < α < 1），在 |z|^{1/α} 足够大时使用，
    截断到最小项为止。
α = 1 时负实轴上存在 e^z 型指数项，渐近展开不成立，始终走 Taylor 级数。
"""
import logging
import math
from typing import Union

import mpmath
import numpy as np
from scipy.special import gammaln, rgamma

from memwave.config import Config
from memwave.errors import MittagLefflerError

logger = logging.getLogger(__name__)


def _validate(alpha: float, beta: float, z: float):
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"Mittag-Leffler 参数要求 0 < alpha <= 1，得到 alpha={alpha}")
    if beta <= 0.0:
        raise ValueError(f"Mittag-Leffler 参数要求 beta > 0，得到 beta={beta}")
    if not math.isfinite(z) or z > 0.0:
        raise ValueError(f"只支持有限的非正实数自变量，得到 z={z}")


def _taylor(alpha: float, beta: float, z: float, cfg: dict) -> float:
    x = -z
    growth = x ** (1.0 / alpha)
    # 最大项约为 exp(|z|^{1/α})，相消会吃掉同样多的十进制位
    dps = cfg["guard_digits"] + int(math.ceil(growth / math.log(10.0)))
    # 项在 (αk)^α > |z| 之后单调递减
    k_peak = growth / alpha + 2.0
    rtol = cfg["series_rtol"]

    with mpmath.workdps(dps):
        zz = mpmath.mpf(z)
        a = mpmath.mpf(alpha)
        b = mpmath.mpf(beta)
        total = mpmath.mpf(0)
        power = mpmath.mpf(1)
        for k in range(cfg["max_terms"]):
            term = power * mpmath.rgamma(a * k + b)
            total += term
            if k > k_peak and abs(term) <= rtol * abs(total):
                return float(total)
            power *= zz

    raise MittagLefflerError("Taylor 级数未收敛", alpha, beta, z, cfg["max_terms"])


def _asymptotic(alpha: float, beta: float, x: np.ndarray, cfg: dict) -> np.ndarray:
    """x = −z > 0 的数组上逐行截断的渐近展开"""
    x = np.asarray(x, dtype=float)
    k = np.arange(1, cfg["asymptotic_max_terms"] + 1, dtype=float)
    log_x = np.log(x)[:, None]
    decay = np.exp(-k[None, :] * log_x)
    recip = rgamma(beta - alpha * k)

    # |1/Γ(β−αk)| ≤ Γ(1−β+αk)/π（反射公式），用作截断判据
    shift = alpha * k + 1.0 - beta
    with np.errstate(over="ignore"):
        reflected = np.exp(gammaln(np.where(shift > 0.0, shift, 1.0))[None, :] - k[None, :] * log_x) / math.pi
    bound = np.where(shift[None, :] > 0.0, reflected, np.abs(recip)[None, :] * decay)

    terms = -((-1.0) ** k)[None, :] * decay * recip[None, :]
    partial = np.cumsum(terms, axis=1)

    late = np.broadcast_to(k[None, :] > 2, bound.shape)
    growing = np.zeros(bound.shape, dtype=bool)
    growing[:, 1:] = late[:, 1:] & (bound[:, 1:] > bound[:, :-1])
    small = late & (bound <= cfg["series_rtol"] * np.abs(partial))

    # 项数: 界开始增长之前，或界足够小的那一项为止
    n_terms = np.full(x.shape, k.size)
    first_growing = np.argmax(growing, axis=1)
    n_terms = np.where(growing.any(axis=1), np.minimum(n_terms, first_growing), n_terms)
    first_small = np.argmax(small, axis=1) + 1
    n_terms = np.where(small.any(axis=1), np.minimum(n_terms, first_small), n_terms)

    keep = np.arange(k.size)[None, :] < n_terms[:, None]
    return np.sum(np.where(keep, terms, 0.0), axis=1)


def _use_asymptotic(alpha: float, x: np.ndarray, cfg: dict) -> np.ndarray:
    if alpha >= 1.0:
        return np.zeros(x.shape, dtype=bool)
    return np.power(x, 1.0 / alpha) >= cfg["asymptotic_min_power"]


def mittag_leffler_eval(alpha: float, beta: float, z: float) -> float:
    """
    计算 E_{α,β}(z)，z ≤ 0

    Args:
        alpha: 0 < α ≤ 1
        beta: β > 0
        z: 非正实数

    Returns:
        相对精度约 1e-10 的函数值

    Raises:
        ValueError: 参数越界
        MittagLefflerError: 级数未收敛
    """
    alpha, beta, z = float(alpha), float(beta), float(z)
    _validate(alpha, beta, z)

    if z == 0.0:
        return float(rgamma(beta))

    cfg = Config.get_mittag_leffler_config()
    x = np.array([-z])
    if _use_asymptotic(alpha, x, cfg)[0]:
        return float(_asymptotic(alpha, beta, x, cfg)[0])
    return _taylor(alpha, beta, z, cfg)


def mittag_leffler_array(alpha: float, beta: float, z: Union[np.ndarray, float]) -> np.ndarray:
    """
    数组上的 E_{α,β}(z)

    渐近区整体向量化求值；Taylor 区每个不同的 z 只算一次。
    """
    alpha, beta = float(alpha), float(beta)
    z_arr = np.asarray(z, dtype=float)
    flat = z_arr.ravel()
    out = np.empty(flat.shape, dtype=float)
    if flat.size == 0:
        return out.reshape(z_arr.shape)
    bad = ~np.isfinite(flat) | (flat > 0.0)
    _validate(alpha, beta, float(flat[bad][0]) if bad.any() else 0.0)

    cfg = Config.get_mittag_leffler_config()
    x = -flat
    zero = flat == 0.0
    asym = ~zero & _use_asymptotic(alpha, x, cfg)
    out[zero] = float(rgamma(beta))
    if asym.any():
        out[asym] = _asymptotic(alpha, beta, x[asym], cfg)

    series = ~zero & ~asym
    if series.any():
        values, inverse = np.unique(flat[series], return_inverse=True)
        computed = np.array([_taylor(alpha, beta, float(v), cfg) for v in values])
        out[series] = computed[inverse.ravel()]
    return out.reshape(z_arr.shape)
