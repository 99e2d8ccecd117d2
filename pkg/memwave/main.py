"""
memwave 命令行主程序
功能：运行场景、检验记忆核假设、导出预解式、收敛性研究

退出码: 0 成功，2 配置错误，3 相容性不满足，4 参数不适定，5 求解失败，6 能量异常
"""
import argparse
import logging
import math
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from memwave import __version__
from memwave.config import Config
from memwave.core.discretization import build_system, validate_compatibility
from memwave.core.kernels import parse_kernel_spec, resolvent
from memwave.core.stepper import dirac_oracle, run
from memwave.errors import MemwaveError
from memwave.features.assumptions import Verdict, classify
from memwave.features.diagnostics import energy_report
from memwave.features.outputs import (
    assumption_lines,
    run_report_lines,
    write_csv,
    write_energy_csv,
    write_energy_svg,
    write_text,
)
from memwave.features.scenario import ScenarioConfig, dump_scenario, load_scenario, scenario_paths
from memwave.utils import format_table, get_verdict_emoji, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0


def _banner(title: str):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def _out_dir(path: Optional[str]) -> Path:
    out = Path(path) if path else Config.OUTPUT_DIR
    out.mkdir(parents=True, exist_ok=True)
    return out


def _system(cfg: ScenarioConfig):
    return build_system(cfg.L, cfg.n_modes, cfg.psi0, cfg.psi1, cfg.psi2)


# ============================================================
# 子命令
# ============================================================

def cmd_run(cfg: ScenarioConfig, out_dir: Path) -> int:
    """运行一个场景，写出 CSV、SVG 与文本报告"""
    started = time.perf_counter()
    kernel = cfg.build_kernel()
    params = cfg.params
    params.check_wellposed()
    system = _system(cfg)

    assumptions = classify(kernel)
    res = resolvent(kernel, cfg.dt, cfg.n_steps)
    compatibility = validate_compatibility(system, kernel, res)
    compatibility.raise_if_violated()

    traj = run(system, params, kernel, cfg.dt, cfg.n_steps, res=res, rule=cfg.rule)

    energy = None
    if cfg.energy:
        c_a2 = assumptions.c_a2 if assumptions.c_a2 is not None else 0.0
        regime = assumptions.sets["exponential"]
        exponential_regime = None if regime == Verdict.INCONCLUSIVE else regime == Verdict.PASS
        energy = energy_report(traj, c_a2, assumptions.ctilde, cfg.fit_window, exponential_regime)
        if assumptions.c_a2 is None:
            energy.notes.append("C_A2 无法确定，耗散预算按 C_A2 = 0 计算")

    paths = scenario_paths(cfg, out_dir)
    if energy is not None:
        write_energy_csv(energy, paths["csv"])
        write_energy_svg(energy, paths["svg"], title=f"log10 E(t), {kernel.spec}")
    lines = run_report_lines(dump_scenario(cfg), assumptions, compatibility.to_dict(), energy)
    write_text(paths["report"], lines)

    _banner(f"memwave run: {kernel.spec}")
    print(f"  模态数: {cfg.n_modes}, dt = {cfg.dt:g}, N = {cfg.n_steps}, 规则 {traj.rule}")
    for name, verdict in assumptions.sets.items():
        print(f"  {get_verdict_emoji(verdict.value)} 假设组 {name}: {verdict.value}")
    if energy is not None:
        print(f"  E(0) = {energy.E[0]:.6g}, E(T) = {energy.E[-1]:.6g}")
        if energy.fit is not None:
            print(f"  λ_fit = {energy.fit.lambda_fit:.6g}, r2 = {energy.fit.r2:.4f} ({energy.fit_note})")
        else:
            print(f"  {energy.fit_note}")
        ok = energy.dissipation.passed
        print(f"  {get_verdict_emoji('pass' if ok else 'fail')} 耗散预算: {'pass' if ok else 'fail'}")
    print(f"  报告: {paths['report']}")
    print(f"  耗时: {time.perf_counter() - started:.2f}s")
    print("=" * 60 + "\n")
    return EXIT_OK


def cmd_check_kernel(spec: str, csv_path: Optional[Path] = None) -> int:
    """打印记忆核的假设检验表"""
    kernel = parse_kernel_spec(spec)
    report = classify(kernel)
    _banner(f"记忆核假设检验: {kernel.spec}")
    print("\n".join(assumption_lines(report)))
    if csv_path is not None:
        write_csv(csv_path, ("assumption", "verdict", "evidence", "note"), report.to_rows())
        print(f"\nCSV: {csv_path}")
    return EXIT_OK


def cmd_resolvent(spec: str, dt: float, n_steps: int, out_dir: Path) -> int:
    """导出预解式 (t, r(t)[, r_t]) 与 A"""
    kernel = parse_kernel_spec(spec)
    res = resolvent(kernel, dt, n_steps)
    samples = res.samples()
    times = res.times

    path = out_dir / Config.OUTPUT["resolvent_csv"]
    if res.r_t is not None:
        write_csv(path, ("t", "r", "r_t"), zip(times, samples, res.r_t))
    else:
        write_csv(path, ("t", "r"), zip(times, samples))

    _banner(f"预解式: {kernel.spec}")
    print(f"  A = {res.A:.10g}")
    print(f"  方法: {res.method}")
    print(f"  r(T) = {samples[-1]:.10g}  (T = {times[-1]:g})")
    print(f"  CSV: {path}")
    print("=" * 60 + "\n")
    return EXIT_OK


def convergence_table(cfg: ScenarioConfig, refinements: int) -> List[tuple]:
    """
    (dt, 最大误差, 观测阶) 表

    单模态 dirac 场景与闭式解比较；其余与再加密一次的最细网格比较。
    """
    if refinements < 2:
        raise ValueError(f"refinements 必须 >= 2，得到 {refinements}")
    kernel = cfg.build_kernel()
    params = cfg.params
    system = _system(cfg)
    T = cfg.T
    use_oracle = kernel.is_dirac and cfg.n_modes == 1

    def solve(level: int):
        n = cfg.n_steps * 2 ** level
        return run(system, params, kernel, T / n, n, rule=cfg.rule)

    reference = None
    if not use_oracle:
        reference = solve(refinements).xi

    rows = []
    prev = None
    for level in range(refinements):
        traj = solve(level)
        if use_oracle:
            exact, _, _ = dirac_oracle(float(system.mu[0]), params, float(system.xi0[0]),
                                       float(system.xi1[0]), float(system.xi2K[0]), traj.times)
            error = float(np.max(np.abs(traj.xi[0] - exact)))
        else:
            stride = 2 ** (refinements - level)
            error = float(np.max(np.abs(traj.xi - reference[:, ::stride])))
        order = math.log2(prev / error) if prev and error > 0 else float("nan")
        rows.append((traj.dt, error, order))
        logger.debug(f"收敛性: dt={traj.dt:g}, 误差={error:.3e}")
        prev = error
    return rows


def cmd_convergence(cfg: ScenarioConfig, refinements: int, out_dir: Path) -> int:
    rows = convergence_table(cfg, refinements)
    path = write_csv(out_dir / Config.OUTPUT["convergence_csv"], ("dt", "max_error", "order"), rows)
    _banner(f"收敛性研究: {cfg.kernel}")
    print(format_table(("dt", "max_error", "order"), rows))
    print(f"\nCSV: {path}")
    print("=" * 60 + "\n")
    return EXIT_OK


# ============================================================
# 参数解析
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memwave",
        description=f"带记忆核的非局部 MGT 方程模拟器 v{__version__}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例:
  python run.py run --config scenario.toml
  python run.py run --config scenario.toml --dump-config
  python run.py check-kernel "exponential(beta=1.0)"
  python run.py resolvent "abel(alpha=0.5)" --dt 0.01 --n 1000
  python run.py convergence --config scenario.toml --refinements 4
        """,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="输出 DEBUG 日志")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help="输出目录（默认 Config.OUTPUT_DIR）")

    p_run = sub.add_parser("run", parents=[common], help="运行场景")
    p_run.add_argument("--config", required=True, help="TOML 场景文件")
    p_run.add_argument("--dump-config", action="store_true", help="打印解析后的场景并退出")

    p_check = sub.add_parser("check-kernel", parents=[common], help="检验记忆核假设")
    p_check.add_argument("spec", help="记忆核规格，如 exponential(beta=1.0)")
    p_check.add_argument("--csv", action="store_true", help="同时写出 CSV")

    p_res = sub.add_parser("resolvent", parents=[common], help="导出预解式")
    p_res.add_argument("spec", help="记忆核规格")
    p_res.add_argument("--dt", type=float, default=0.01, help="时间步长")
    p_res.add_argument("--n", type=int, default=1000, help="步数")

    p_conv = sub.add_parser("convergence", parents=[common], help="收敛性研究")
    p_conv.add_argument("--config", required=True, help="TOML 场景文件")
    p_conv.add_argument("--refinements", type=int, default=4, help="加密次数")
    p_conv.add_argument("--dump-config", action="store_true", help="打印解析后的场景并退出")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO)
    setup_logging(level)

    try:
        if args.command in ("run", "convergence"):
            cfg = load_scenario(args.config)
            if args.dump_config:
                print(dump_scenario(cfg), end="")
                return EXIT_OK
            out_dir = _out_dir(args.out_dir)
            if args.command == "run":
                return cmd_run(cfg, out_dir)
            return cmd_convergence(cfg, args.refinements, out_dir)

        out_dir = _out_dir(args.out_dir)
        if args.command == "check-kernel":
            csv_path = out_dir / Config.OUTPUT["kernel_csv"] if args.csv else None
            return cmd_check_kernel(args.spec, csv_path)
        return cmd_resolvent(args.spec, args.dt, args.n, out_dir)

    except MemwaveError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        logger.error(f"参数错误: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
