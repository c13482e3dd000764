#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
配置与日志模块

读取 .env 与环境变量，加载YAML配置文件，并统一日志格式。
命令行参数 > 环境变量 > 内置默认值。
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from attribution_types import InputValidationError

TOOL_NAME = "shap-multiplicity"
TOOL_VERSION = "0.1.0"

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# 程序配置
DEFAULT_SETTINGS = {
    "log_level": "INFO",
    "out_dir": "./results",
    "jobs": 1,
}

ENV_PREFIX = "SHAPMULT_"

logger = logging.getLogger(__name__)


def load_environment(dotenv_path: Optional[str] = None) -> Dict[str, Any]:
    """
    合并内置默认值与环境变量

    Args:
        dotenv_path: .env文件路径（默认在当前目录查找）

    Returns:
        配置字典
    """
    load_dotenv(dotenv_path=dotenv_path, override=False)
    settings = dict(DEFAULT_SETTINGS)
    for key in settings:
        raw = os.environ.get(f"{ENV_PREFIX}{key.upper()}")
        if raw is None or raw == "":
            continue
        if key == "jobs":
            try:
                settings[key] = int(raw)
            except ValueError:
                logger.warning(f"忽略无效的 {ENV_PREFIX}JOBS: {raw}")
        else:
            settings[key] = raw
    return settings


def configure_logging(level: str = "INFO") -> None:
    """配置根日志记录器"""
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
    logging.getLogger().setLevel(getattr(logging, str(level).upper(), logging.INFO))


def load_yaml_config(path: str) -> Dict[str, Any]:
    """
    加载YAML配置文件

    Args:
        path: 配置文件路径

    Returns:
        配置字典（顶层必须是映射）
    """
    config_path = Path(path)
    if not config_path.exists() or not config_path.is_file():
        raise FileNotFoundError(f"配置文件不存在: {path}")
    with open(config_path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise InputValidationError(f"配置文件不是有效的YAML: {path} - {e}") from e
    if not isinstance(data, dict):
        raise InputValidationError(f"配置文件顶层必须是映射: {path}")
    return data


def resolve_relative(path: str, base_dir: Path) -> str:
    """把配置中的相对路径解析为相对于配置文件所在目录的路径"""
    candidate = Path(path).expanduser()
    if candidate.is_absolute():
        return str(candidate)
    return str((base_dir / candidate).resolve())
