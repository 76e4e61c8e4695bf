"""
日志配置模块
统一的日志记录器，每条记录带上当前运行的场景与种子
"""
import logging
import os
import sys
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator, Optional

# 当前线程/任务正在运行的场景，格式 "名称#种子"
_current_run: ContextVar[str] = ContextVar("crowdchain_run", default="-")


class RunContextFilter(logging.Filter):
    """把当前场景写入记录的 run 字段"""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run = _current_run.get()
        return True


@contextmanager
def run_context(scenario: str, seed: int) -> Iterator[None]:
    """
    在上下文内的日志记录都标注场景名与种子

    suite --jobs 在线程池中并行运行场景，每个线程有各自的上下文。
    """
    token = _current_run.set(f"{scenario}#{seed}")
    try:
        yield
    finally:
        _current_run.reset(token)


def setup_logger(name: str = "crowdchain_sim", level: Optional[int] = None) -> logging.Logger:
    """
    设置并返回日志记录器

    Args:
        name: 日志记录器名称
        level: 日志级别（默认从环境变量 LOG_LEVEL 读取，或使用 INFO）

    Returns:
        配置好的日志记录器
    """
    logger = logging.getLogger(name)

    # 如果已经配置过，直接返回
    if logger.handlers:
        return logger

    if level is None:
        level_str = os.getenv("LOG_LEVEL", "INFO").upper()
        level = getattr(logging, level_str, logging.INFO)

    logger.setLevel(level)

    formatter = logging.Formatter(
        fmt='%(asctime)s - %(levelname)s - [%(run)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # 控制台输出到 stderr，stdout 留给 CLI 结果
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    console_handler.addFilter(RunContextFilter())
    logger.addHandler(console_handler)

    # 防止日志传播到父记录器
    logger.propagate = False

    return logger


def set_level(level_name: str):
    """运行时调整日志级别（CLI 的 --log-level 使用）"""
    level = getattr(logging, level_name.upper(), logging.INFO)
    logger.setLevel(level)
    for handler in logger.handlers:
        handler.setLevel(level)


# 创建默认日志记录器
logger = setup_logger()
