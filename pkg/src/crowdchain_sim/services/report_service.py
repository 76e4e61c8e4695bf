"""
报告服务
把运行报告渲染为文本或 JSON，并写出轨迹文件
"""
from pathlib import Path
from typing import Optional

from jinja2 import Environment

from ..logger import logger
from .scenario_service import RunReport

TEMPLATE_FILE = Path(__file__).resolve().parent.parent / "templates" / "report.txt.j2"


def load_template() -> str:
    """读取报告模板"""
    return TEMPLATE_FILE.read_text(encoding="utf-8")


def _ljust(value, width: int) -> str:
    return str(value).ljust(width)


def _rjust(value, width: int) -> str:
    return str(value).rjust(width)


def render_text(report: RunReport) -> str:
    env = Environment(trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True)
    env.filters["ljust"] = _ljust
    env.filters["rjust"] = _rjust
    return env.from_string(load_template()).render(report=report)


def render_json(report: RunReport) -> str:
    return report.model_dump_json(indent=2)


def write_outputs(
    report: RunReport,
    trace_path: Optional[Path] = None,
    json_path: Optional[Path] = None,
    text_path: Optional[Path] = None,
):
    """按需写出轨迹、JSON 报告与文本报告"""
    outputs = (
        (trace_path, report.trace),
        (json_path, render_json(report) + "\n" if json_path else ""),
        (text_path, render_text(report) if text_path else ""),
    )
    for path, content in outputs:
        if path is None:
            continue
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
        logger.info(f"已写出 {path}")


def summary_line(report: RunReport) -> str:
    """suite 命令的一行摘要"""
    status = "PASS" if report.passed else "FAIL"
    failed = ", ".join(a.name for a in report.failures())
    tail = f"  [{failed}]" if failed else ""
    return f"{status}  {report.scenario:<28} blocks={report.blocks:<4} digest={report.trace_digest[:12]}{tail}"
