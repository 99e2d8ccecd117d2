"""
测试 Volterra 推进

覆盖范围：
  1. x + e^{−t}∗x = 1 的闭式解 (1 + e^{−2t})/2
  2. x + (t^{−1/2}/Γ(1/2))∗x = 1 的闭式解 erfcx(√t)
  3. 逐步推进与下三角矩阵直接求解一致
  4. 退化系数、奇异强迫项

运行: pytest tests/test_volterra.py -v
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
import pytest
from scipy.linalg import solve_triangular
from scipy.special import erfcx

from memwave.core.kernels import QuadratureRule, conv_weights, discrete_convolution, make_kernel
from memwave.core.volterra import VolterraOp, convolve_tail, dense_matrix, march
from memwave.errors import SolverError


def _op(spec_family, params, dt, n, rule, c0=1.0):
    weights = conv_weights(make_kernel(spec_family, params), dt, n, rule)
    return VolterraOp(c0=c0, terms=[(1.0, weights)], n_steps=n, dt=dt)


# ================================================================== #
#  闭式解
# ================================================================== #

class TestClosedFormSolutions:
    """两个有闭式解的第二类方程"""

    def test_exponential_trapezoid(self):
        dt, n = 0.01, 500
        x = march(_op("exponential", {"beta": 1.0}, dt, n, QuadratureRule.TRAPEZOID), np.ones(n + 1))
        t = np.arange(n + 1) * dt
        np.testing.assert_allclose(x, 0.5 * (1.0 + np.exp(-2.0 * t)), atol=1e-4)

    def test_exponential_rectangle(self):
        dt, n = 0.01, 500
        x = march(_op("exponential", {"beta": 1.0}, dt, n, QuadratureRule.RECTANGLE), np.ones(n + 1))
        t = np.arange(n + 1) * dt
        np.testing.assert_allclose(x, 0.5 * (1.0 + np.exp(-2.0 * t)), atol=1e-2)

    def test_exponential_second_order(self):
        errors = []
        for n in (100, 200):
            dt = 2.0 / n
            x = march(_op("exponential", {"beta": 1.0}, dt, n, "trapezoid"), np.ones(n + 1))
            t = np.arange(n + 1) * dt
            errors.append(np.max(np.abs(x - 0.5 * (1.0 + np.exp(-2.0 * t)))))
        assert errors[0] / errors[1] > 3.5

    def test_abel_kernel(self):
        dt, n = 0.01, 300
        x = march(_op("abel", {"alpha": 0.5}, dt, n, "trapezoid"), np.ones(n + 1))
        t = np.arange(n + 1) * dt
        np.testing.assert_allclose(x, erfcx(np.sqrt(t)), atol=1e-2)

    def test_abel_refines(self):
        errors = []
        for n in (50, 200):
            dt = 1.0 / n
            x = march(_op("abel", {"alpha": 0.5}, dt, n, "trapezoid"), np.ones(n + 1))
            t = np.arange(n + 1) * dt
            errors.append(np.max(np.abs(x - erfcx(np.sqrt(t)))))
        assert errors[1] < errors[0]


# ================================================================== #
#  与直接求解比较
# ================================================================== #

class TestDenseEquivalence:

    @pytest.mark.parametrize("rule", ["rectangle", "trapezoid"])
    def test_march_equals_triangular_solve(self, rule):
        dt, n = 0.05, 60
        k1 = conv_weights(make_kernel("exponential", {"beta": 2.0}), dt, n, rule)
        k2 = conv_weights(make_kernel("abel", {"alpha": 0.3}), dt, n, rule)
        op = VolterraOp(c0=0.7, terms=[(1.5, k1), (-0.2, k2)], n_steps=n, dt=dt)
        f = np.cos(np.arange(n + 1) * dt)
        x = march(op, f)
        y = solve_triangular(dense_matrix(op), f, lower=True)
        np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)

    def test_residual_of_solution(self):
        """解代回方程后残差为零"""
        dt, n = 0.05, 40
        w = conv_weights(make_kernel("polynomial", {"p": 2.0}), dt, n, "trapezoid")
        op = VolterraOp(c0=2.0, terms=[(3.0, w)], n_steps=n, dt=dt)
        f = 1.0 + np.arange(n + 1) * dt
        x = march(op, f)
        lhs = 2.0 * x + 3.0 * discrete_convolution(w, x)
        np.testing.assert_allclose(lhs[1:], f[1:], atol=1e-12)
        assert x[0] == pytest.approx(f[0] / 2.0)

    def test_convolve_tail_matches_full(self):
        dt, n = 0.1, 20
        w = conv_weights(make_kernel("exponential", {"beta": 1.0}), dt, n, "trapezoid")
        x = np.sin(np.arange(n + 1) * dt)
        full = discrete_convolution(w, x)
        for m in (1, 5, 20):
            assert convolve_tail(w, x, m) + w.w[0] * x[m] == pytest.approx(full[m], abs=1e-14)

    def test_convolve_tail_requires_positive_step(self):
        w = conv_weights(make_kernel("exponential", {"beta": 1.0}), 0.1, 5)
        with pytest.raises(ValueError):
            convolve_tail(w, np.ones(6), 0)


# ================================================================== #
#  错误处理
# ================================================================== #

class TestErrors:

    def test_degenerate_coefficient(self):
        op = VolterraOp(c0=0.0, terms=[], n_steps=5, dt=0.1)
        with pytest.raises(SolverError, match="退化"):
            march(op, np.ones(6))

    def test_length_mismatch(self):
        w = conv_weights(make_kernel("exponential", {"beta": 1.0}), 0.1, 5)
        with pytest.raises(ValueError):
            VolterraOp(c0=1.0, terms=[(1.0, w)], n_steps=6, dt=0.1)

    def test_forcing_length(self):
        op = _op("exponential", {"beta": 1.0}, 0.1, 5, "rectangle")
        with pytest.raises(ValueError):
            march(op, np.ones(5))

    def test_singular_start_needs_rectangle(self):
        op = _op("abel", {"alpha": 0.5}, 0.1, 10, "trapezoid")
        f = np.ones(11)
        f[0] = -np.inf
        with pytest.raises(SolverError):
            march(op, f)

    def test_singular_start_rectangle(self):
        op = _op("abel", {"alpha": 0.5}, 0.1, 10, "rectangle")
        f = np.ones(11)
        f[0] = -np.inf
        x = march(op, f)
        assert np.isnan(x[0])
        assert np.all(np.isfinite(x[1:]))

    def test_point_mass_only(self):
        """dirac 权重为空，方程退化为 (c0 + B)x = f"""
        w = conv_weights(make_kernel("dirac"), 0.1, 4)
        op = VolterraOp(c0=1.0, terms=[(2.0, w)], n_steps=4, dt=0.1)
        np.testing.assert_allclose(march(op, np.full(5, 6.0)), 2.0)
