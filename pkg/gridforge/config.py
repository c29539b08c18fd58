"""
运行配置
优先级: _conf_schema.json 默认值 < TOML/JSON 配置文件 < 环境变量 < 命令行参数
"""

import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from .errors import InputError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger("gridforge.config")

SCHEMA_PATH = Path(__file__).resolve().parent.parent / "_conf_schema.json"

# 环境变量 -> 配置键
ENV_KEYS = {"GRIDFORGE_SOLVER": "solver"}

_CASTS = {"int": int, "float": float, "string": str, "bool": bool}


def load_schema(path: Path = SCHEMA_PATH) -> Dict[str, Dict[str, Any]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.warning(f"读取配置模式失败 {path}: {e}，使用空模式")
        return {}


def _coerce(key: str, value: Any, schema: Dict[str, Dict[str, Any]]) -> Any:
    if value is None or key not in schema:
        return value
    kind = schema[key].get("type")
    if kind == "bool" and isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    cast = _CASTS.get(kind)
    if cast is None:
        return value
    try:
        value = cast(value)
    except (TypeError, ValueError):
        raise InputError(f"config key {key!r} expects {kind}, got {value!r}")
    lower = schema[key].get("min")
    if lower is not None and value < lower:
        raise InputError(f"config key {key!r} must be >= {lower}, got {value!r}")
    return value


def _read_file(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    try:
        if path.suffix.lower() == ".toml":
            with open(path, "rb") as f:
                return tomllib.load(f)
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise InputError(f"config file {path} is malformed: {e}")


class Settings:
    """合并后的运行配置"""

    def __init__(self, values: Dict[str, Any], schema: Dict[str, Dict[str, Any]]):
        self._values = values
        self.schema = schema

    def get(self, key: str, default: Any = None) -> Any:
        """安全地读取配置值，缺失或为 None 时返回 default"""
        val = self._values.get(key)
        return default if val is None else val

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def __contains__(self, key: str) -> bool:
        return key in self._values


def load_settings(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> Settings:
    """
    加载运行配置

    Args:
        path: TOML 或 JSON 配置文件
        overrides: 命令行参数，值为 None 的项视为未指定
        environ: 环境变量，默认 os.environ

    Returns:
        Settings
    """
    schema = load_schema()
    values = {key: spec.get("default") for key, spec in schema.items()}

    if path:
        for key, value in _read_file(Path(path)).items():
            if key not in schema:
                logger.warning(f"配置文件中的未知键 {key!r} 已忽略")
                continue
            values[key] = _coerce(key, value, schema)

    environ = os.environ if environ is None else environ
    for env, key in ENV_KEYS.items():
        if environ.get(env):
            values[key] = _coerce(key, environ[env], schema)

    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value, schema)
    return Settings(values, schema)
