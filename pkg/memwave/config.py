"""
配置管理模块
非局部 MGT 模拟器的数值默认值

所有容差、网格与输出文件名集中在 Config 中；少量运行参数
（输出目录、日志级别、线程数）可以通过环境变量或 .env 覆盖。
"""
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


class Config:
    # 求积配置
    QUADRATURE = {
        "rule": "trapezoid",          # 乘积求积规则: rectangle / trapezoid
        "cell_quad_limit": 200,       # 无闭式原函数时单元积分 quad 的子区间上限
        "identity_epsabs": 1e-12,     # 预解式恒等式检查的 quad 绝对容差
        "identity_epsrel": 1e-11,
    }

    # Mittag-Leffler 函数求值
    MITTAG_LEFFLER = {
        "series_rtol": 1e-17,         # Taylor 级数截断的相对增量
        "max_terms": 20000,           # Taylor 级数最大项数
        "asymptotic_min_power": 40.0, # |z|^(1/α) 超过此值时改用渐近展开
        "asymptotic_max_terms": 60,   # 渐近展开最大项数
        "guard_digits": 20,           # mpmath 额外保护位数
    }

    # 假设检验配置
    ASSUMPTIONS = {
        "omega_min": 1e-3,            # 频率网格下界
        "omega_max": 1e3,             # 频率网格上界
        "omega_samples": 2048,        # 频率采样点数 M
        "lambda_samples": 64,         # c̃ 最小化的 λ 网格点数
        "lambda_cap": 10.0,           # λ 上限 min(2β, cap)
        "fd_step": 1e-2,              # 有限差分步长 h
        "fd_horizon": 20.0,           # 有限差分网格 (0, T]
        "tolerance": 1e-9,            # pass 判定容差
        "a0_horizon": 1.0,            # 局部有限性检查的积分区间 (0, 1]
    }

    # Galerkin 投影配置
    PROJECTION = {
        "panels_per_mode": 8,         # Simpson 复合求积: 每个模态 8 个区间
    }

    # 能量诊断配置
    DIAGNOSTICS = {
        "budget_rtol": 1e-6,          # 耗散预算残差容差（相对 RHS）
        "monotone_slack": 1e-8,       # E(t) ≤ E(0) 的绝对余量
        "fit_r2_threshold": 0.98,     # 判定指数衰减所需的 r²
        "eps2": 0.5,                  # Lyapunov 构造中的 ε₂
        "n0_max_exponent": 60,        # N₀ 搜索的 2 的最高次幂
    }

    # 求解器配置
    SOLVER = {
        "workers": int(os.getenv("MEMWAVE_WORKERS", "4")),  # 模态并行线程数
    }

    # 输出文件名
    OUTPUT = {
        "csv": "energy.csv",
        "svg": "energy.svg",
        "report": "report.txt",
        "resolvent_csv": "resolvent.csv",
        "kernel_csv": "kernel_check.csv",
        "convergence_csv": "convergence.csv",
    }

    LOG_LEVEL = os.getenv("MEMWAVE_LOG_LEVEL", "INFO")

    # 路径配置
    BASE_DIR = Path(__file__).resolve().parent.parent  # project root (parent of memwave/)
    DATA_DIR = BASE_DIR / "data"
    OUTPUT_DIR = Path(os.getenv("MEMWAVE_OUTPUT_DIR", str(BASE_DIR / "output")))

    @classmethod
    def ensure_dirs(cls):
        """确保必要的目录存在"""
        cls.DATA_DIR.mkdir(parents=True, exist_ok=True)
        cls.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)

    @classmethod
    def validate(cls) -> bool:
        """验证配置是否有效"""
        if cls.QUADRATURE["rule"] not in ("rectangle", "trapezoid"):
            return False
        if cls.ASSUMPTIONS["omega_min"] <= 0 or cls.ASSUMPTIONS["omega_max"] <= cls.ASSUMPTIONS["omega_min"]:
            return False
        if cls.SOLVER["workers"] < 1:
            return False
        return 0.0 < cls.DIAGNOSTICS["eps2"] < 1.0

    @classmethod
    def get_quadrature_config(cls) -> dict:
        """获取求积配置"""
        return cls.QUADRATURE.copy()

    @classmethod
    def get_mittag_leffler_config(cls) -> dict:
        return cls.MITTAG_LEFFLER.copy()

    @classmethod
    def get_assumptions_config(cls) -> dict:
        """获取假设检验配置"""
        return cls.ASSUMPTIONS.copy()

    @classmethod
    def get_projection_config(cls) -> dict:
        return cls.PROJECTION.copy()

    @classmethod
    def get_diagnostics_config(cls) -> dict:
        """获取能量诊断配置"""
        return cls.DIAGNOSTICS.copy()

    @classmethod
    def get_solver_config(cls) -> dict:
        return cls.SOLVER.copy()

    @classmethod
    def get_output_config(cls) -> dict:
        return cls.OUTPUT.copy()
