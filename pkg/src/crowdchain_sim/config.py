"""
全局配置管理器
支持从命令行参数、环境变量、配置文件或默认值获取配置
优先级：命令行参数 > 环境变量 > 配置文件 > 默认值
"""
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .logger import logger

DEFAULT_CONFIG_FILE = Path(__file__).parent / "config.yaml"


def _first_set(*values):
    """按优先级返回第一个显式给出的值（0 也算给出）"""
    return next(v for v in values if v is not None)


class Config:
    """全局配置管理器"""

    _instance = None
    _scenarios_dir: Optional[Path] = None
    _output_dir: Path = Path.cwd()
    _log_level: str = "INFO"
    _max_plaintext_bytes: int = 65536
    _default_delta: int = 1
    _max_blocks: int = 200
    _initialized: bool = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(Config, cls).__new__(cls)
        return cls._instance

    def initialize(
        self,
        config_file: Optional[str] = None,
        scenarios_dir: Optional[str] = None,
        output_dir: Optional[str] = None,
        log_level: Optional[str] = None,
        max_plaintext_bytes: Optional[int] = None,
    ):
        """
        初始化配置

        优先级：命令行参数 > 环境变量 > 配置文件 > 默认值

        Args:
            config_file: 配置文件路径（命令行参数）
            scenarios_dir: 额外的场景目录（命令行参数）
            output_dir: 轨迹与报告的默认输出目录（命令行参数）
            log_level: 日志级别（命令行参数）
            max_plaintext_bytes: 加密明文上限（命令行参数）
        """
        if self._initialized:
            return

        # 1. 环境变量
        env_config_file = os.environ.get("CROWDCHAIN_CONFIG_FILE")
        env_scenarios_dir = os.environ.get("CROWDCHAIN_SCENARIOS_DIR")
        env_output_dir = os.environ.get("CROWDCHAIN_OUTPUT_DIR")
        env_log_level = os.environ.get("LOG_LEVEL")
        env_max_plaintext = os.environ.get("CROWDCHAIN_MAX_PLAINTEXT")

        # 2. 配置文件（未指定时使用包内默认配置）
        config_file_path = config_file or env_config_file
        if config_file_path:
            config_file_path = Path(config_file_path).resolve()
        else:
            config_file_path = DEFAULT_CONFIG_FILE

        config_data: Dict[str, Any] = {}
        if config_file_path.exists():
            try:
                with open(config_file_path, 'r', encoding='utf-8') as f:
                    config_data = yaml.safe_load(f) or {}
            except Exception as e:
                logger.warning(f"加载配置文件失败: {e}")

        # 3. 场景目录（相对路径相对于配置文件所在目录）
        dir_value = scenarios_dir or env_scenarios_dir
        if dir_value:
            self._scenarios_dir = Path(dir_value).resolve()
        elif config_data.get("scenarios_dir"):
            path = Path(config_data["scenarios_dir"])
            if not path.is_absolute():
                path = config_file_path.parent / path
            self._scenarios_dir = path.resolve()

        out_value = output_dir or env_output_dir or config_data.get("output_dir")
        self._output_dir = Path(out_value).resolve() if out_value else Path.cwd()

        self._log_level = (log_level or env_log_level or config_data.get("log_level") or "INFO").upper()
        self._max_plaintext_bytes = int(_first_set(
            max_plaintext_bytes,
            int(env_max_plaintext) if env_max_plaintext else None,
            config_data.get("max_plaintext_bytes"),
            65536,
        ))
        self._default_delta = int(config_data.get("default_delta", 1))
        self._max_blocks = int(config_data.get("max_blocks", 200))

        self._initialized = True

        logger.debug("配置已初始化:")
        logger.debug(f"  场景目录: {self._scenarios_dir}")
        logger.debug(f"  输出目录: {self._output_dir}")
        logger.debug(f"  明文上限: {self._max_plaintext_bytes}")

    def _ensure(self):
        if not self._initialized:
            self.initialize()

    def get_scenarios_dir(self) -> Optional[Path]:
        """获取用户场景目录（可能为空）"""
        self._ensure()
        return self._scenarios_dir

    def get_output_dir(self) -> Path:
        """获取输出目录"""
        self._ensure()
        return self._output_dir

    def get_log_level(self) -> str:
        """获取日志级别"""
        self._ensure()
        return self._log_level

    def get_max_plaintext_bytes(self) -> int:
        """获取加密明文上限"""
        self._ensure()
        return self._max_plaintext_bytes

    def get_default_delta(self) -> int:
        """获取默认同步上界 Δ"""
        self._ensure()
        return self._default_delta

    def get_max_blocks(self) -> int:
        """获取单个场景的出块上限"""
        self._ensure()
        return self._max_blocks

    def is_initialized(self) -> bool:
        """检查配置是否已初始化"""
        return self._initialized

    def reset(self):
        """恢复未初始化状态（测试用）"""
        self._scenarios_dir = None
        self._output_dir = Path.cwd()
        self._log_level = "INFO"
        self._max_plaintext_bytes = 65536
        self._default_delta = 1
        self._max_blocks = 200
        self._initialized = False


# 全局单例
config = Config()
