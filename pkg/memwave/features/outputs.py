"""
输出模块
能量 CSV、log₁₀E 折线图 SVG 与文本报告
"""
import csv
import logging
import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from memwave.features.assumptions import AssumptionReport
from memwave.features.diagnostics import EnergyReport
from memwave.utils import format_table, get_verdict_emoji

logger = logging.getLogger(__name__)

ENERGY_HEADER = ("t", "E", "Emod", "norm_mod", "F1", "F2", "L", "dissipation_residual")

# SVG 画布
_WIDTH, _HEIGHT = 720, 420
_MARGIN = {"left": 70, "right": 20, "top": 30, "bottom": 50}


def _fmt(value: float) -> str:
    return repr(float(value))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[float]]) -> Path:
    """写 CSV，浮点数用 repr 保证可逆且逐字节确定"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    logger.debug(f"已写入 {path}")
    return path


def write_energy_csv(report: EnergyReport, path: Path) -> Path:
    """t,E,Emod,norm_mod,F1,F2,L,dissipation_residual 每步一行"""
    return write_csv(path, ENERGY_HEADER, report.rows())


# ============================================================
# SVG
# ============================================================

def _nice_ticks(lo: float, hi: float, count: int = 5) -> List[float]:
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / count))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= count:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    value = first
    while value <= hi + 1e-12 * step:
        ticks.append(round(value, 12))
        value += step
    return ticks


def render_energy_svg(report: EnergyReport, title: str = "log10 E(t)") -> str:
    """
    log₁₀E 对 t 的折线图，拟合直线叠加在拟合窗口上

    E ≤ 0 的点不画（log 无定义）。
    """
    t = report.times
    positive = report.E > 0
    if not np.any(positive):
        t_plot, y_plot = t[:1], np.zeros(1)
    else:
        t_plot, y_plot = t[positive], np.log10(report.E[positive])

    # 超过 2000 个点时抽样
    stride = max(1, t_plot.size // 2000)
    t_plot, y_plot = t_plot[::stride], y_plot[::stride]

    x0, x1 = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0
    y0, y1 = float(np.min(y_plot)), float(np.max(y_plot))
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5

    pw = _WIDTH - _MARGIN["left"] - _MARGIN["right"]
    ph = _HEIGHT - _MARGIN["top"] - _MARGIN["bottom"]

    def sx(x):
        return _MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return _MARGIN["top"] + (y1 - y) / (y1 - y0) * ph

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{sx(x0):.2f}" y1="{sy(y0):.2f}" x2="{sx(x1):.2f}" y2="{sy(y0):.2f}" stroke="black"/>',
        f'<line x1="{sx(x0):.2f}" y1="{sy(y0):.2f}" x2="{sx(x0):.2f}" y2="{sy(y1):.2f}" stroke="black"/>',
    ]
    for xt in _nice_ticks(x0, x1):
        lines.append(f'<line x1="{sx(xt):.2f}" y1="{sy(y0):.2f}" x2="{sx(xt):.2f}" '
                     f'y2="{sy(y0) + 5:.2f}" stroke="black"/>')
        lines.append(f'<text x="{sx(xt):.2f}" y="{sy(y0) + 18:.2f}" text-anchor="middle">{xt:g}</text>')
    for yt in _nice_ticks(y0, y1):
        lines.append(f'<line x1="{sx(x0) - 5:.2f}" y1="{sy(yt):.2f}" x2="{sx(x0):.2f}" '
                     f'y2="{sy(yt):.2f}" stroke="black"/>')
        lines.append(f'<text x="{sx(x0) - 8:.2f}" y="{sy(yt) + 4:.2f}" text-anchor="end">{yt:g}</text>')
    lines.append(f'<text x="{_WIDTH / 2:.1f}" y="{_HEIGHT - 10}" text-anchor="middle">t</text>')

    points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(t_plot, y_plot))
    lines.append(f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{points}"/>')

    fit = report.fit
    if fit is not None and not fit.degenerate and np.any(positive):
        lo, hi = fit.window
        mask = (t >= lo) & (t <= hi) & positive
        if np.any(mask):
            # 直线经过窗口内 log₁₀E 的均值点，斜率 −λ/ln10
            tm = float(np.mean(t[mask]))
            ym = float(np.mean(np.log10(report.E[mask])))
            slope = -fit.lambda_fit / math.log(10.0)
            ya, yb = ym + slope * (lo - tm), ym + slope * (hi - tm)
            lines.append(
                f'<line x1="{sx(lo):.2f}" y1="{sy(ya):.2f}" x2="{sx(hi):.2f}" y2="{sy(yb):.2f}" '
                f'stroke="#d62728" stroke-dasharray="6,4" stroke-width="1.5"/>'
            )
            lines.append(
                f'<text x="{sx(hi) - 4:.2f}" y="{_MARGIN["top"] + 14}" text-anchor="end" fill="#d62728">'
                f'λ_fit={fit.lambda_fit:.4g}, r²={fit.r2:.4f}</text>'
            )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_energy_svg(report: EnergyReport, path: Path, title: str = "log10 E(t)") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_energy_svg(report, title), encoding="utf-8")
    return path


# ============================================================
# 文本报告
# ============================================================

def assumption_lines(report: AssumptionReport) -> List[str]:
    """假设检验表"""
    lines = [f"记忆核: {report.kernel_spec}", ""]
    for name, verdict in report.sets.items():
        lines.append(f"  {get_verdict_emoji(verdict.value)} {name:<12} {verdict.value}")
    lines.append("")
    lines.append(format_table(("assumption", "verdict", "evidence", "note"), report.to_rows()))
    lines.append("")
    if report.c_a2 is not None:
        lines.append(f"C_A2 = {report.c_a2:g}")
    if report.ctilde is not None:
        lines.append(f"c̃ = {report.ctilde:.6g}")
    if report.lambda_sup is not None:
        lines.append(f"λ_sup = {report.lambda_sup:.6g}")
    for note in report.notes:
        lines.append(f"注: {note}")
    return lines


def run_report_lines(
    scenario_text: str,
    assumptions: AssumptionReport,
    compatibility: dict,
    energy: Optional[EnergyReport],
) -> List[str]:
    """cmd_run 的文本报告"""
    lines = ["=" * 60, "memwave 运行报告", "=" * 60, "", "[场景]", scenario_text.rstrip(), ""]
    lines.append("[假设检验]")
    lines.extend(assumption_lines(assumptions))
    lines.append("")
    lines.append("[相容性]")
    lines.append(f"  {'✅' if compatibility['ok'] else '❌'} {compatibility['rule']}, "
                 f"‖xi1 − A·xi2K‖ = {compatibility['norm']:.3e}")
    lines.append("")

    if energy is None:
        lines.append("[能量诊断] 已关闭")
        return lines

    d = energy.dissipation
    lines.append("[能量诊断]")
    lines.append(f"  E(0) = {energy.E[0]:.10g}")
    lines.append(f"  E(T) = {energy.E[-1]:.10g}")
    if energy.fit is not None:
        lines.append(f"  λ_fit = {energy.fit.lambda_fit:.6g}")
        lines.append(f"  r2 = {energy.fit.r2:.6f}")
        if not math.isnan(energy.fit.power_r2):
            lines.append(f"  幂律 p = {energy.fit.power_exponent:.6g}, r2 = {energy.fit.power_r2:.6f}")
    else:
        lines.append("  λ_fit = n/a")
        lines.append("  r2 = n/a")
    lines.append(f"  衰减: {energy.fit_note}")
    lines.append(f"  {get_verdict_emoji('pass' if d.passed else 'fail')} 耗散预算: "
                 f"{'pass' if d.passed else 'fail'} (min residual = {d.min_residual:.3e}, RHS = {d.rhs:.6g})")
    if d.monotone is not None:
        lines.append(f"  E(tₙ) ≤ E(0): {'pass' if d.monotone else 'fail'}")

    if energy.constants is not None:
        c = energy.constants
        lines.append("")
        lines.append("[Lyapunov 常数]")
        lines.append(f"  N0 = {c.N0:g}, N1 = {c.N1:g}, c0 = {c.c0:.6g}")
        lines.append(f"  ε1 = {c.eps1:.6g}, ε2 = {c.eps2:.6g}, ε3 = {c.eps3:.6g}")
        sandwich = energy.sandwich_ok()
        lines.append(f"  (N0−c0)E ≤ L ≤ (N0+c0)E: {'pass' if sandwich else 'fail'}")
    if energy.lemma is not None:
        lines.append(f"  逐点界 K = {energy.lemma.constant:.6g}: 违反 {energy.lemma.violations} 次")
    for note in energy.notes:
        lines.append(f"注: {note}")
    return lines


def write_text(path: Path, lines: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
