"""
场景文件服务
发现、读取与保存场景 YAML 文件

搜索顺序：用户场景目录（配置项 scenarios_dir）优先，其次是包内置的 scenarios/。
"""
import re
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from ..config import config
from ..core.exceptions import ConfigError

BUNDLED_DIR = Path(__file__).resolve().parent.parent / "scenarios"

_NAME_PATTERN = re.compile(r"^[\w\-一-龥]+$")


class ScenarioDumper(yaml.SafeDumper):
    """保存场景文件时保持字段顺序，多行字符串使用块标量"""


def _represent_str(dumper, data):
    if "\n" in data:
        return dumper.represent_scalar("tag:yaml.org,2002:str", data, style="|")
    return dumper.represent_scalar("tag:yaml.org,2002:str", data)


ScenarioDumper.add_representer(str, _represent_str)


def validate_name(name: str) -> bool:
    """
    验证场景名：只允许字母、数字、下划线、连字符与中文，不含路径分隔符
    """
    if not name or ".." in name or "/" in name or "\\" in name:
        return False
    stem = name[:-5] if name.endswith(".yaml") else name[:-4] if name.endswith(".yml") else name
    return bool(stem) and bool(_NAME_PATTERN.match(stem))


def search_dirs() -> List[Path]:
    dirs = []
    user_dir = config.get_scenarios_dir()
    if user_dir is not None and user_dir.is_dir():
        dirs.append(user_dir)
    dirs.append(BUNDLED_DIR)
    return dirs


def list_scenarios() -> List[Dict[str, Any]]:
    """列出所有可用场景（同名时用户目录优先）"""
    seen: Dict[str, Dict[str, Any]] = {}
    for directory in search_dirs():
        for pattern in ("*.yaml", "*.yml"):
            for path in sorted(directory.glob(pattern)):
                if path.stem in seen or not path.is_file():
                    continue
                seen[path.stem] = {
                    "name": path.stem,
                    "path": str(path),
                    "bundled": directory == BUNDLED_DIR,
                }
    return [seen[name] for name in sorted(seen)]


def resolve_scenario(ref: str) -> Path:
    """
    把场景引用解析为文件路径：已存在的路径直接使用，否则按场景名查找

    Raises:
        ConfigError: 找不到场景
    """
    path = Path(ref)
    if path.is_file():
        return path
    if validate_name(ref):
        stem = path.stem if ref.endswith((".yaml", ".yml")) else ref
        for directory in search_dirs():
            for suffix in (".yaml", ".yml"):
                candidate = directory / f"{stem}{suffix}"
                if candidate.is_file():
                    return candidate
    raise ConfigError(f"找不到场景: {ref}")


def parse_yaml(text: str, source: str = "<string>") -> Dict[str, Any]:
    """
    解析场景 YAML 文本

    Raises:
        ConfigError: YAML 语法错误（附行号）或顶层不是映射
    """
    try:
        content = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(f"{source}: YAML 解析错误: {problem}", line=line)
    if content is None:
        content = {}
    if not isinstance(content, dict):
        raise ConfigError(f"{source}: 场景文件顶层必须是映射", line=1)
    return content


def field_line(text: str, loc: List[Any]) -> Optional[int]:
    """
    在 YAML 文本中查找 pydantic 错误位置对应的行号（找不到返回 None）
    """
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return None
    line = None
    for key in loc:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            node = next((value for k, value in node.value if k.value == str(key)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    if node is not None:
        line = node.start_mark.line + 1
    return line


def read_scenario_file(ref: str) -> str:
    path = resolve_scenario(ref)
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"读取场景文件失败: {e}")


def save_scenario_file(path: Path, content: Dict[str, Any], overwrite: bool = False) -> Path:
    """
    保存场景文件（CLI 导出规范化配置时使用）

    Raises:
        FileExistsError: 文件已存在且未允许覆盖
    """
    path = Path(path)
    if path.exists() and not overwrite:
        raise FileExistsError(f"文件已存在: {path}")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.dump(
            content,
            f,
            Dumper=ScenarioDumper,
            allow_unicode=True,
            default_flow_style=False,
            sort_keys=False,
            width=4096,
        )
    return path
