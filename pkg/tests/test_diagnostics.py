"""
测试能量诊断

覆盖范围：
  1. 能量、修正能量与泛函的代数性质（E(0) 公式、E_mod 系数、Poincaré 界）
  2. 衰减拟合（合成指数、幂律、常数序列、非正值）与衰减标签
  3. 耗散预算与 E(t) ≤ E(0)
  4. Lyapunov 常数与夹逼不等式、逐点界
  5. 端到端: dirac 衰减率、exponential 指数衰减、polynomial 弱衰减

运行: pytest tests/test_diagnostics.py -v
"""
import math
import sys
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
import pytest

from memwave.core.discretization import EquationParams, InitialField, build_system
from memwave.core.kernels import make_kernel
from memwave.core.stepper import run
from memwave.errors import DecayFitError, ParamsInvalidError
from memwave.features.assumptions import Verdict, classify, ctilde_min
from memwave.features.diagnostics import (
    WEAK_DECAY,
    cumulative_integral,
    decay_label,
    dissipation_check,
    energy_E,
    energy_mod,
    energy_report,
    energy_series,
    fit_decay,
    functional_F1,
    functional_F2,
    lemma_bounds,
    lyapunov,
    lyapunov_constants,
    modified_lyapunov,
    norm_mod,
)

ORACLE_PARAMS = EquationParams(tau=0.5, c=1.0, gamma=1.0, nu=0.5)
DECAY_PARAMS = EquationParams(tau=0.1, c=1.0, gamma=0.5, nu=0.2)


def _synthetic(params, g, g_t, xi, xi_t):
    """单模态、单步的人工轨迹（μ = 1）"""
    base = run(build_system(math.pi, 1), params, make_kernel("dirac"), 0.1, 1)
    row = lambda v: np.array([[v, v]], dtype=float)
    return replace(base, conv_xi_t=row(g), conv_xi_t_dt=row(g_t), xi=row(xi), xi_t=row(xi_t))


@pytest.fixture(scope="module")
def exponential_run():
    """exponential 核、16 模态、高斯初值"""
    system = build_system(math.pi, 16, psi0=InitialField(function="gaussian()"))
    kernel = make_kernel("exponential", {"beta": 1.0})
    return run(system, DECAY_PARAMS, kernel, 5e-3, 8000)


# ================================================================== #
#  能量与泛函
# ================================================================== #

class TestEnergyFormulas:

    def test_initial_energy(self):
        system = build_system(math.pi, 3, psi0=[1.0, 0.5, 0.2])
        traj = run(system, ORACLE_PARAMS, make_kernel("exponential", {"beta": 1.0}), 0.01, 5)
        expected = 0.5 * ORACLE_PARAMS.c ** 2 * float(np.sum(system.mu * system.xi0 ** 2))
        assert energy_E(traj, 0) == pytest.approx(expected, rel=1e-14)
        assert norm_mod(traj, 0) == pytest.approx(float(np.sum(system.mu * system.xi0 ** 2)))

    def test_mod_energy_middle_coefficient(self):
        """γ = 2τc² 时 E_mod 中 ‖ξₜ‖² 的系数为 1/4"""
        traj = _synthetic(ORACLE_PARAMS, g=0.0, g_t=0.0, xi=0.0, xi_t=1.0)
        kappa = ORACLE_PARAMS.tau * ORACLE_PARAMS.c ** 2 / ORACLE_PARAMS.gamma
        assert energy_mod(traj, 0) - kappa ** 2 == pytest.approx(0.25)

    def test_energy_terms(self):
        traj = _synthetic(ORACLE_PARAMS, g=1.0, g_t=0.0, xi=0.0, xi_t=0.0)
        # ½(c²τ² + τ(γ−τc²)) = ½(0.25 + 0.25)
        assert energy_E(traj, 1) == pytest.approx(0.25)

    def test_index_checked(self):
        traj = _synthetic(ORACLE_PARAMS, 0.0, 0.0, 1.0, 0.0)
        with pytest.raises(IndexError):
            energy_E(traj, 2)

    def test_series_match_pointwise(self, exponential_run):
        series = energy_series(exponential_run)
        for n in (0, 100, 8000):
            assert series["E"][n] == pytest.approx(energy_E(exponential_run, n))
            assert series["norm_mod"][n] == pytest.approx(norm_mod(exponential_run, n))

    def test_poincare_bound_on_F1(self, exponential_run):
        """|F₁| ≤ 2E/(c√μ₁)"""
        series = energy_series(exponential_run)
        bound = 2.0 * series["E"] / (DECAY_PARAMS.c * math.sqrt(exponential_run.mu[0]))
        assert np.all(np.abs(series["F1"]) <= bound * (1 + 1e-12) + 1e-300)

    def test_modified_lyapunov(self, exponential_run):
        n = 500
        base = lyapunov(exponential_run, n, 128.0, 4.0)
        assert modified_lyapunov(exponential_run, n, 128.0, 4.0) == pytest.approx(
            base + 128.0 * energy_mod(exponential_run, n))
        assert base == pytest.approx(128.0 * energy_E(exponential_run, n) + functional_F1(exponential_run, n)
                                     + 4.0 * functional_F2(exponential_run, n))


# ================================================================== #
#  衰减拟合
# ================================================================== #

class TestFitDecay:

    def test_synthetic_exponential(self):
        t = np.linspace(0.0, 10.0, 1001)
        fit = fit_decay(t, 3.0 * np.exp(-2.0 * t))
        assert fit.lambda_fit == pytest.approx(2.0, rel=1e-10)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)
        assert fit.window == (5.0, 10.0)
        assert fit.exponential

    def test_constant_series(self):
        t = np.linspace(0.0, 10.0, 101)
        fit = fit_decay(t, np.full_like(t, 4.0))
        assert fit.lambda_fit == 0.0
        assert fit.r2 == 0.0
        assert fit.degenerate
        assert not fit.exponential

    def test_growth_clamped(self):
        t = np.linspace(0.0, 1.0, 11)
        assert fit_decay(t, np.exp(t)).lambda_fit == 0.0

    def test_nonpositive_values(self):
        t = np.linspace(0.0, 10.0, 101)
        values = np.exp(-t)
        values[-1] = 0.0
        with pytest.raises(DecayFitError):
            fit_decay(t, values)

    def test_window_too_small(self):
        t = np.linspace(0.0, 10.0, 11)
        with pytest.raises(DecayFitError):
            fit_decay(t, np.exp(-t), window=(3.2, 3.8))

    def test_power_law_series(self):
        """t^{-2} 在 log–log 下是直线，log-linear 拟合更差"""
        t = np.linspace(1.0, 100.0, 2001)
        fit = fit_decay(t, 5.0 * t ** -2.0)
        assert fit.power_exponent == pytest.approx(2.0, rel=1e-10)
        assert fit.power_r2 == pytest.approx(1.0, abs=1e-12)
        assert fit.power_r2 > fit.r2

    def test_power_fit_skips_origin(self):
        t = np.linspace(0.0, 1.0, 11)
        fit = fit_decay(t, np.exp(-t), window=(0.0, 0.1))
        assert math.isnan(fit.power_r2)

    def test_decay_label(self):
        t = np.linspace(0.0, 10.0, 1001)
        fit = fit_decay(t, np.exp(-t))
        assert decay_label(fit, True) == "exponential"
        assert decay_label(fit, False) == WEAK_DECAY
        flat = fit_decay(t, np.full_like(t, 2.0))
        assert decay_label(flat, True) == "no exponential fit"

    def test_custom_window(self):
        t = np.linspace(0.0, 10.0, 1001)
        series = np.where(t < 5.0, np.exp(-t), np.exp(-5.0) * np.exp(-3.0 * (t - 5.0)))
        assert fit_decay(t, series, window=(0.0, 4.0)).lambda_fit == pytest.approx(1.0, rel=1e-8)


# ================================================================== #
#  耗散预算
# ================================================================== #

class TestDissipation:

    def test_cumulative_integral_rules(self):
        dt = 0.1
        t = np.arange(11) * dt
        np.testing.assert_allclose(cumulative_integral(t, dt), t ** 2 / 2, atol=1e-14)
        np.testing.assert_allclose(cumulative_integral(np.ones(11), dt, "rectangle"), t, atol=1e-14)

    @pytest.mark.parametrize("spec", [("dirac", {}), ("exponential", {"beta": 1.0})])
    def test_budget_holds(self, spec):
        family, params = spec
        system = build_system(math.pi, 1, psi0=[1.0])
        traj = run(system, ORACLE_PARAMS, make_kernel(family, params), 5e-3, 2000)
        check = dissipation_check(traj, 0.0)
        assert check.passed
        assert check.monotone is True
        assert check.min_residual >= -1e-6 * check.rhs

    def test_monotone_skipped_with_velocity(self):
        system = build_system(math.pi, 1, psi0=[1.0], psi1=[0.5])
        traj = run(system, ORACLE_PARAMS, make_kernel("dirac"), 1e-2, 200)
        assert dissipation_check(traj, 0.0).monotone is None

    def test_rhs_includes_point_mass_term(self):
        system = build_system(math.pi, 1, psi1=[1.0])
        traj = run(system, ORACLE_PARAMS, make_kernel("dirac"), 1e-2, 10)
        # ‖ψ₁‖² + c²τ²B²‖∇ψ₁‖² + ντC_𝒜2‖∇ψ₁‖²，B = 1, C_𝒜2 = 1
        check = dissipation_check(traj, 1.0)
        assert check.rhs == pytest.approx(1.0 + 0.25 + 0.25)


# ================================================================== #
#  Lyapunov 常数
# ================================================================== #

class TestLyapunovConstants:

    def test_reference_values(self):
        system = build_system(math.pi, 4)
        c = lyapunov_constants(DECAY_PARAMS, system, 1.0 / 64.0)
        assert c.N1 == pytest.approx(4.0)
        assert c.eps1 == pytest.approx(0.25)
        assert c.c0 == pytest.approx(6.0)
        assert c.N0 == 128.0

    def test_without_ctilde(self):
        c = lyapunov_constants(DECAY_PARAMS, build_system(math.pi, 1), None)
        # 只剩 N₀ν > C₁ + N₁C_ε23 与 N₀ > c₀
        assert c.N0 == 16.0

    def test_requires_memory_gap(self):
        params = EquationParams(tau=0.5, c=1.0, gamma=0.5, nu=0.2)
        with pytest.raises(ParamsInvalidError):
            lyapunov_constants(params, build_system(math.pi, 1), 0.1)

    def test_ctilde_of_exponential(self):
        ctilde, lam_sup, _ = ctilde_min(make_kernel("exponential", {"beta": 1.0}))
        assert ctilde == pytest.approx(1.0 / 64.0)
        assert lam_sup == pytest.approx(2.0)


# ================================================================== #
#  端到端
# ================================================================== #

class TestEndToEnd:

    def test_dirac_decay_rate(self):
        """dirac 核能量衰减率为谱横坐标的两倍"""
        system = build_system(math.pi, 1, psi0=[1.0])
        traj = run(system, ORACLE_PARAMS, make_kernel("dirac"), 1e-2, 3000)
        report = energy_report(traj, 1.0)
        assert report.lambda_fit == pytest.approx(1.0, rel=0.1)
        assert report.budget_check

    def test_exponential_decay(self, exponential_run):
        ctilde, _, _ = ctilde_min(exponential_run.kernel)
        report = energy_report(exponential_run, 0.0, ctilde)
        assert report.fit.lambda_fit > 0
        assert report.fit.r2 >= 0.98
        assert report.fit_note == "exponential"
        assert report.budget_check
        assert report.constants.N0 == 128.0
        assert report.sandwich_ok()
        assert report.lemma.passed
        assert np.all(np.isfinite(report.L))

    def test_exponential_lemma_bounds(self, exponential_run):
        bounds = lemma_bounds(exponential_run)
        assert bounds.constant == pytest.approx(2.0)
        assert bounds.gradient_ratio <= bounds.constant
        assert bounds.memory_ratio <= bounds.constant

    @pytest.mark.parametrize("T", [20.0, 40.0])
    def test_polynomial_weak_decay(self, T):
        """多项式核: ‖ψ‖_mod 衰减，但不被标成指数衰减"""
        kernel = make_kernel("polynomial", {"p": 2.0})
        system = build_system(math.pi, 16, psi0=InitialField(function="gaussian()"))
        n_steps = int(round(T / 5e-3))
        traj = run(system, DECAY_PARAMS, kernel, 5e-3, n_steps)
        series = energy_series(traj)["norm_mod"]
        assert series[-1] < 0.5 * series[0]
        total = cumulative_integral(series, traj.dt)
        assert total[-1] < 2.0 * total[n_steps // 2]

        assumptions = classify(kernel)
        regime = assumptions.sets["exponential"] == Verdict.PASS
        assert not regime
        for report in (energy_report(traj, 0.0), energy_report(traj, 0.0, exponential_regime=regime)):
            assert report.fit_note == WEAK_DECAY
            assert not math.isnan(report.fit.power_r2)
            assert any("幂律" in note for note in report.notes)

    def test_polynomial_single_mode_not_exponential(self):
        """单模态初值 log E 近似直线，标签仍不是 exponential"""
        system = build_system(math.pi, 16, psi0=[1.0])
        traj = run(system, DECAY_PARAMS, make_kernel("polynomial", {"p": 2.0}), 5e-3, 4000)
        report = energy_report(traj, 0.0)
        assert report.fit_note != "exponential"
        assert report.fit_note.startswith("no exponential fit")

    def test_critical_gap_has_no_lyapunov(self):
        params = EquationParams(tau=0.5, c=1.0, gamma=0.5, nu=0.5)
        system = build_system(math.pi, 1, psi0=[1.0])
        traj = run(system, params, make_kernel("dirac"), 1e-2, 200)
        report = energy_report(traj, 1.0)
        assert report.constants is None
        assert report.lemma is None
        assert np.all(np.isnan(report.L))
        assert report.sandwich_ok() is None
        assert report.notes

    def test_csv_rows(self):
        system = build_system(math.pi, 1, psi0=[1.0])
        traj = run(system, ORACLE_PARAMS, make_kernel("dirac"), 1e-2, 20)
        rows = list(energy_report(traj, 1.0).rows())
        assert len(rows) == 21
        assert len(rows[0]) == 8
        assert rows[0][0] == 0.0
