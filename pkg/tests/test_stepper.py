"""
测试时间推进与轨迹重构

覆盖范围：
  1. 零初值给出零轨迹
  2. dirac 核与三阶常微分方程闭式解比较，收敛阶
  3. 关于初值线性、模态解耦（重排不变）、线程数无关
  4. 右端项 f(0) 的具体数值、重构量之间的导数关系
  5. 奇异右端项自动退回 rectangle，点质量缺少 r_t 时报错

运行: pytest tests/test_stepper.py -v
"""
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
import pytest

from memwave.core.discretization import EquationParams, build_system
from memwave.core.kernels import ResolventRepr, make_kernel, power_part, resolvent
from memwave.core.stepper import (
    assemble_mode_op,
    characteristic_roots,
    dirac_oracle,
    run,
    spectral_abscissa,
)
from memwave.errors import CompatibilityError, ParamsInvalidError, UnsupportedResolventError

# dirac 基准: 特征根 −1 与 (−1 ± i√7)/2
ORACLE_PARAMS = EquationParams(tau=0.5, c=1.0, gamma=1.0, nu=0.5)
DECAY_PARAMS = EquationParams(tau=0.1, c=1.0, gamma=0.5, nu=0.2)


def _dirac_error(n_steps, T=10.0, rule="trapezoid"):
    system = build_system(math.pi, 1, psi0=[1.0])
    traj = run(system, ORACLE_PARAMS, make_kernel("dirac"), T / n_steps, n_steps, rule=rule)
    exact, _, _ = dirac_oracle(1.0, ORACLE_PARAMS, 1.0, 0.0, 0.0, traj.times)
    return float(np.max(np.abs(traj.xi[0] - exact)))


# ================================================================== #
#  dirac 闭式解
# ================================================================== #

class TestDiracOracle:
    """τξ‴ + ξ″ + (γ+ν)μξ′ + c²μξ = 0"""

    def test_roots(self):
        roots = np.sort_complex(characteristic_roots(1.0, ORACLE_PARAMS))
        expected = np.sort_complex(np.array([-1.0, complex(-0.5, -math.sqrt(7) / 2), complex(-0.5, math.sqrt(7) / 2)]))
        np.testing.assert_allclose(roots, expected, atol=1e-12)
        assert spectral_abscissa(1.0, ORACLE_PARAMS) == pytest.approx(-0.5)

    def test_oracle_initial_values(self):
        xi, xi_t, xi_tt = dirac_oracle(1.0, ORACLE_PARAMS, 1.0, 0.3, -0.2, np.array([0.0]))
        assert xi[0] == pytest.approx(1.0)
        assert xi_t[0] == pytest.approx(0.3)
        assert xi_tt[0] == pytest.approx(-0.2)

    def test_run_matches_oracle(self):
        assert _dirac_error(10000) <= 5e-3

    def test_trapezoid_second_order(self):
        errors = [_dirac_error(n) for n in (2500, 5000, 10000, 20000)]
        ratios = [errors[i] / errors[i + 1] for i in range(3)]
        assert min(ratios) >= 3.6

    def test_rectangle_first_order(self):
        errors = [_dirac_error(n, rule="rectangle") for n in (2500, 5000, 10000, 20000)]
        ratios = [errors[i] / errors[i + 1] for i in range(3)]
        assert min(ratios) >= 1.8

    def test_velocity_and_history(self):
        """dirac 核: 𝔎∗ξₜ = ξₜ"""
        system = build_system(math.pi, 1, psi0=[1.0], psi1=[0.2], psi2=[0.1])
        traj = run(system, ORACLE_PARAMS, make_kernel("dirac"), 1e-3, 3000)
        _, xi_t, xi_tt = dirac_oracle(1.0, ORACLE_PARAMS, 1.0, 0.2, 0.1, traj.times)
        np.testing.assert_allclose(traj.xi_t[0], xi_t, atol=1e-3)
        np.testing.assert_allclose(traj.conv_xi_t[0], xi_t, atol=1e-3)
        np.testing.assert_allclose(traj.conv_xi_t_dt[0], xi_tt, atol=1e-3)


# ================================================================== #
#  结构性质
# ================================================================== #

class TestStructure:

    def test_zero_data(self):
        system = build_system(math.pi, 3)
        traj = run(system, DECAY_PARAMS, make_kernel("exponential", {"beta": 1.0}), 0.01, 50)
        for arr in (traj.chi_hat, traj.xi, traj.xi_t, traj.conv_xi_t, traj.conv_xi_t_dt):
            np.testing.assert_array_equal(arr, 0.0)

    def test_shapes(self):
        system = build_system(math.pi, 3, psi0=[1.0])
        traj = run(system, DECAY_PARAMS, make_kernel("exponential", {"beta": 1.0}), 0.01, 50)
        assert traj.xi.shape == (3, 51)
        assert traj.n_modes == 3
        assert traj.rule == "trapezoid"
        assert traj.to_dict()["resolvent"]["A"] == 1.0

    def test_linearity(self):
        kernel = make_kernel("exponential", {"beta": 1.0})
        a, b = 2.0, -0.5
        d1 = build_system(math.pi, 2, psi0=[1.0, 0.0])
        d2 = build_system(math.pi, 2, psi0=[0.0, 1.0], psi1=[0.3, 0.0], psi2=[0.3, 0.0])
        combo = build_system(math.pi, 2, psi0=[a, b], psi1=[0.3 * b, 0.0], psi2=[0.3 * b, 0.0])
        t1 = run(d1, DECAY_PARAMS, kernel, 0.01, 300)
        t2 = run(d2, DECAY_PARAMS, kernel, 0.01, 300)
        tc = run(combo, DECAY_PARAMS, kernel, 0.01, 300)
        scale = np.max(np.abs(tc.xi))
        np.testing.assert_allclose(tc.xi, a * t1.xi + b * t2.xi, atol=1e-10 * scale)
        np.testing.assert_allclose(tc.xi_t, a * t1.xi_t + b * t2.xi_t, atol=1e-10 * scale)

    def test_scaled(self):
        system = build_system(math.pi, 1, psi0=[1.0])
        traj = run(system, DECAY_PARAMS, make_kernel("exponential", {"beta": 1.0}), 0.01, 20)
        np.testing.assert_allclose(traj.scaled(3.0).xi, 3.0 * traj.xi)

    def test_mode_permutation(self):
        kernel = make_kernel("exponential", {"beta": 1.0})
        system = build_system(math.pi, 3, psi0=[1.0, -0.5, 0.25])
        order = [2, 0, 1]
        base = run(system, DECAY_PARAMS, kernel, 0.01, 200)
        perm = run(system.permuted(order), DECAY_PARAMS, kernel, 0.01, 200)
        np.testing.assert_array_equal(perm.xi, base.xi[order])
        np.testing.assert_array_equal(perm.chi_hat, base.chi_hat[order])

    def test_worker_count_irrelevant(self):
        kernel = make_kernel("abel", {"alpha": 0.5})
        system = build_system(math.pi, 4, psi0=[1.0, 0.5, 0.25, 0.125])
        one = run(system, DECAY_PARAMS, kernel, 0.01, 200, workers=1)
        many = run(system, DECAY_PARAMS, kernel, 0.01, 200, workers=4)
        np.testing.assert_array_equal(one.xi, many.xi)

    def test_reconstruction_derivatives(self):
        """ξ 与 ξₜ、𝔎∗ξₜ 与其导数之间的一致性"""
        kernel = make_kernel("exponential", {"beta": 1.0})
        params = EquationParams(tau=0.5, c=1.0, gamma=1.0, nu=0.5)
        system = build_system(math.pi, 2, psi0=[1.0, 0.5])
        traj = run(system, params, kernel, 1e-3, 2000)
        for i in range(2):
            np.testing.assert_allclose(np.gradient(traj.xi[i], traj.dt), traj.xi_t[i], atol=1e-2)
            np.testing.assert_allclose(np.gradient(traj.conv_xi_t[i], traj.dt), traj.conv_xi_t_dt[i], atol=1e-2)


# ================================================================== #
#  单模态算子与右端项
# ================================================================== #

class TestModeOperator:

    def test_forcing_at_zero(self):
        """exponential 核、μ=1、参数全为 1: f(0) = −ξ₂ − c²μξ₀ − νμξ₁"""
        kernel = make_kernel("exponential", {"beta": 1.0})
        params = EquationParams(tau=1.0, c=1.0, gamma=1.0, nu=1.0)
        res = resolvent(kernel, 0.01, 10)
        op, f = assemble_mode_op(1.0, params, kernel, res, 0.01, 10, initial=(1.0, 0.4, 0.4))
        assert f[0] == pytest.approx(-0.4 - 1.0 - 0.4)
        assert op.c0 == pytest.approx(2.0)

    def test_zero_forcing(self):
        kernel = make_kernel("abel", {"alpha": 0.5})
        res = resolvent(kernel, 0.01, 10)
        _, f = assemble_mode_op(4.0, DECAY_PARAMS, kernel, res, 0.01, 10)
        np.testing.assert_array_equal(f, 0.0)

    def test_point_mass_requires_derivative(self):
        kernel = make_kernel("dirac")
        res = ResolventRepr(0.0, power_part(1.0, 0.0), None, "closed_form", 0.01, 10)
        with pytest.raises(UnsupportedResolventError):
            assemble_mode_op(1.0, ORACLE_PARAMS, kernel, res, 0.01, 10)


# ================================================================== #
#  错误与回退
# ================================================================== #

class TestRunErrors:

    def test_incompatible_data(self):
        system = build_system(math.pi, 2, psi1=[0.5])
        with pytest.raises(CompatibilityError):
            run(system, DECAY_PARAMS, make_kernel("abel", {"alpha": 0.5}), 0.01, 10)

    def test_illposed_params(self):
        params = EquationParams(tau=1.0, c=1.0, gamma=0.5, nu=1.0)
        with pytest.raises(ParamsInvalidError):
            run(build_system(math.pi, 1, psi0=[1.0]), params, make_kernel("dirac"), 0.01, 10)

    @pytest.mark.parametrize("dt,n", [(0.0, 10), (0.01, 0)])
    def test_invalid_grid(self, dt, n):
        with pytest.raises(ValueError):
            run(build_system(math.pi, 1), DECAY_PARAMS, make_kernel("dirac"), dt, n)

    def test_numeric_resolvent_grid_mismatch(self):
        kernel = make_kernel("polynomial", {"p": 2.0})
        res = resolvent(kernel, 0.01, 100)
        with pytest.raises(ValueError, match="网格"):
            run(build_system(math.pi, 1, psi0=[1.0]), DECAY_PARAMS, kernel, 0.02, 50, res=res)

    def test_singular_forcing_falls_back_to_rectangle(self, caplog):
        kernel = make_kernel("abel", {"alpha": 0.5})
        system = build_system(math.pi, 2, psi0=[1.0], psi2=[0.5])
        with caplog.at_level("WARNING"):
            traj = run(system, DECAY_PARAMS, kernel, 0.01, 200, rule="trapezoid")
        assert traj.rule == "rectangle"
        assert np.isnan(traj.chi_hat[0, 0])
        assert np.all(np.isfinite(traj.xi))
        assert np.all(np.isfinite(traj.xi_t))
        assert "rectangle" in caplog.text
