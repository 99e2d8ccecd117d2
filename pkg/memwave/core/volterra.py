"""
Volterra 推进模块
第二类线性 Volterra 积分方程的逐步求解

    c0·x(tₙ) + Σ coeff·(k∗x)(tₙ) = f(tₙ)

在子区间右端点配置（隐式格式），历史卷积和移到右端，每步求解一个标量方程。
总代价 O(N²)。
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from memwave.core.kernels import ConvWeights, QuadratureRule
from memwave.errors import SolverError

logger = logging.getLogger(__name__)

_DEGENERATE = 1e-300


@dataclass
class VolterraOp:
    """c0·x + Σ coeff·(w ∗ x) 形式的算子"""
    c0: float
    terms: List[Tuple[float, ConvWeights]] = field(default_factory=list)
    n_steps: int = 0
    dt: float = 0.0

    def __post_init__(self):
        for _, weights in self.terms:
            if not weights.empty and weights.w.size != self.n_steps + 1:
                raise ValueError(
                    f"权重长度 {weights.w.size} 与步数 N={self.n_steps} 不匹配"
                )

    @property
    def instantaneous(self) -> float:
        """t=0 处的系数: 积分项在 t=0 消失，只剩 c0 与点质量"""
        return self.c0 + sum(coeff * w.point_mass for coeff, w in self.terms)

    @property
    def diagonal(self) -> float:
        """每步线性方程的系数 c0 + Σ coeff·(point_mass + w[0])"""
        return self.instantaneous + sum(
            coeff * w.w[0] for coeff, w in self.terms if not w.empty
        )

    @property
    def rectangle_only(self) -> bool:
        return all(w.empty or w.rule == QuadratureRule.RECTANGLE for _, w in self.terms)

    def combined(self) -> Tuple[np.ndarray, np.ndarray]:
        """把所有卷积项合并成一张权重表 (w, start)"""
        w = np.zeros(self.n_steps + 1)
        start = np.zeros(self.n_steps + 1)
        for coeff, weights in self.terms:
            if weights.empty:
                continue
            w += coeff * weights.w
            start += coeff * weights.start
        return w, start


def convolve_tail(weights: ConvWeights, x: np.ndarray, n: int) -> float:
    """
    历史贡献 Σ_{j=0}^{n−1} w[n−j]·x[j] + start[n]·x[0]

    Args:
        weights: 乘积求积权重
        x: 至少包含 x[0..n−1]
        n: 当前步，n ≥ 1

    Returns:
        历史卷积和（dirac 空权重返回 0）
    """
    if n < 1:
        raise ValueError(f"convolve_tail 需要 n >= 1，得到 {n}")
    if weights.empty:
        return 0.0
    return float(np.dot(weights.w[n:0:-1], x[:n]) + weights.start[n] * x[0])


def march(op: VolterraOp, f: np.ndarray) -> np.ndarray:
    """
    逐步求解 op(x) = f

    Args:
        op: Volterra 算子
        f: 右端项采样 f[0..N]

    Returns:
        x[0..N]；若 f[0] 非有限（奇异强迫项），x[0] 记为 NaN

    Raises:
        SolverError: 每步系数退化，或奇异强迫项配合了非 rectangle 权重
    """
    f = np.asarray(f, dtype=float)
    n_steps = op.n_steps
    if f.size != n_steps + 1:
        raise ValueError(f"右端项长度 {f.size} 应为 N+1={n_steps + 1}")

    diag = op.diagonal
    if abs(diag) < _DEGENERATE:
        raise SolverError("每步线性方程系数退化", coefficient=diag)

    singular_start = not np.isfinite(f[0])
    if singular_start and not op.rectangle_only:
        raise SolverError("t=0 处强迫项奇异，只能使用 rectangle 权重")

    w, start = op.combined()
    reversed_w = w[::-1].copy()
    x = np.zeros(n_steps + 1)

    if not singular_start:
        diag0 = op.instantaneous
        if abs(diag0) < _DEGENERATE:
            raise SolverError("t=0 处系数退化", coefficient=diag0)
        x[0] = f[0] / diag0

    for n in range(1, n_steps + 1):
        tail = np.dot(reversed_w[n_steps - n:n_steps], x[:n]) + start[n] * x[0]
        x[n] = (f[n] - tail) / diag

    if singular_start:
        x[0] = np.nan
    return x


def dense_matrix(op: VolterraOp) -> np.ndarray:
    """配置方程组的下三角矩阵形式 M·x = f"""
    n_steps = op.n_steps
    w, start = op.combined()
    matrix = np.zeros((n_steps + 1, n_steps + 1))
    matrix[0, 0] = op.instantaneous
    for n in range(1, n_steps + 1):
        matrix[n, n] = op.diagonal
        matrix[n, 1:n] = w[n - 1:0:-1]
        matrix[n, 0] = w[n] + start[n]
    return matrix
