"""
Memwave - 带记忆核的非局部 MGT 方程模拟与分析工具包
Simulator and analysis toolkit for the nonlocal Moore-Gibson-Thompson equation with memory kernels.
"""

__version__ = "1.0.0"
