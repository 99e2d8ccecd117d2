"""
工具函数模块
提供日志配置、调用规格解析、文本表格等工具函数
"""
import ast
import logging
import re
import sys
from typing import Any, Dict, List, Sequence, Tuple

from memwave.config import Config


def setup_logging(level: int = logging.INFO) -> logging.Logger:
    """
    配置日志系统

    Args:
        level: 日志级别

    Returns:
        根日志器
    """
    # 创建格式化器
    formatter = logging.Formatter(
        fmt="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )

    # 控制台处理器
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    console_handler.setLevel(level)

    # 文件处理器
    Config.ensure_dirs()
    log_file = Config.DATA_DIR / "memwave.log"
    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    file_handler.setFormatter(formatter)
    file_handler.setLevel(logging.DEBUG)

    # 配置根日志器
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)

    # 清除已有handler，避免重复
    root_logger.handlers.clear()
    root_logger.addHandler(console_handler)
    root_logger.addHandler(file_handler)

    return root_logger


_CALL_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*$", re.DOTALL)


def parse_call_spec(text: str) -> Tuple[str, Dict[str, Any]]:
    """
    解析 `name(key=value, ...)` 形式的规格字符串

    记忆核 (`exponential(beta=2.0)`) 与初值函数 (`sin_modes(k=1, amp=1.0)`)
    共用这一语法。参数值只接受字面量。

    Args:
        text: 规格字符串

    Returns:
        (名称, 参数字典)

    Raises:
        ValueError: 语法错误或参数不是字面量
    """
    match = _CALL_RE.match(text or "")
    if not match:
        raise ValueError(f"无法解析规格 '{text}'，期望形如 name(key=value, ...)")

    name, body = match.group(1), match.group(2).strip()
    params: Dict[str, Any] = {}
    if not body:
        return name, params

    try:
        call = ast.parse(f"_f({body})", mode="eval").body
    except SyntaxError as e:
        raise ValueError(f"规格 '{text}' 参数语法错误: {e.msg}") from e

    if call.args:
        raise ValueError(f"规格 '{text}' 只接受关键字参数")
    for kw in call.keywords:
        if kw.arg is None:
            raise ValueError(f"规格 '{text}' 不支持 ** 展开")
        try:
            params[kw.arg] = ast.literal_eval(kw.value)
        except ValueError as e:
            raise ValueError(f"规格 '{text}' 中参数 {kw.arg} 不是字面量") from e
    return name, params


def format_call_spec(name: str, params: Dict[str, Any]) -> str:
    """把名称与参数还原成规格字符串（parse_call_spec 的逆操作）"""
    inner = ", ".join(f"{k}={v!r}" for k, v in params.items())
    return f"{name}({inner})"


def format_table(headers: Sequence[str], rows: List[Sequence[Any]]) -> str:
    """
    生成等宽文本表格

    Args:
        headers: 表头
        rows: 行数据，浮点数统一用 .6g 格式

    Returns:
        多行字符串
    """
    def _cell(value: Any) -> str:
        if isinstance(value, float):
            return f"{value:.6g}"
        return str(value)

    cells = [[_cell(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        for i, c in enumerate(row):
            widths[i] = max(widths[i], len(c))

    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in cells:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)))
    return "\n".join(lines)


def get_verdict_emoji(verdict: str) -> str:
    """
    获取判定结果对应的emoji

    Args:
        verdict: pass / fail / inconclusive

    Returns:
        对应的emoji
    """
    emoji_map = {
        "pass": "✅",
        "fail": "❌",
        "inconclusive": "❓",
    }
    return emoji_map.get(verdict, "❓")
