#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
种子随机流模块

所有随机性都从显式根种子派生：根种子加上通道号和位置键构成
SeedSequence，得到彼此独立、与调度顺序无关的子流。
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from attribution_types import InputValidationError

logger = logging.getLogger(__name__)

# 子流通道号，作为spawn_key的第一个元素
CHANNEL_FOLDS = 1
CHANNEL_INSTANCES = 2
CHANNEL_MODEL_INIT = 3
CHANNEL_MODEL_SHUFFLE = 4
CHANNEL_GRID_SPLIT = 5
CHANNEL_BACKGROUND = 6
CHANNEL_COALITIONS = 7
CHANNEL_DIRICHLET = 8
CHANNEL_MALLOWS = 9
CHANNEL_FOREST = 10

# 蒙特卡洛分区大小，与worker数量无关
DEFAULT_PARTITION_SIZE = 50_000


def require_seed(value: Optional[int], name: str = "seed") -> int:
    """
    校验显式种子

    Args:
        value: 调用方提供的种子
        name: 参数名，用于错误信息

    Returns:
        非负整数种子
    """
    if value is None:
        raise InputValidationError(f"必须显式提供 {name}，不允许使用环境熵")
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
        raise InputValidationError(f"{name} 必须是无符号整数: {value!r}")
    return int(value)


def seed_sequence(root_seed: int, *keys: int) -> np.random.SeedSequence:
    """由根种子和位置键构造SeedSequence"""
    root_seed = require_seed(root_seed, "root_seed")
    return np.random.SeedSequence(entropy=root_seed, spawn_key=tuple(int(k) for k in keys))


def derive_stream(root_seed: int, *keys: int) -> np.random.Generator:
    """
    派生独立的随机数生成器

    Args:
        root_seed: 根种子
        keys: 通道号及位置键，例如 (CHANNEL_COALITIONS, fold, instance)

    Returns:
        PCG64生成器
    """
    return np.random.default_rng(seed_sequence(root_seed, *keys))


def derive_int_seed(root_seed: int, *keys: int) -> int:
    """派生32位整数种子，供scikit-learn的random_state使用"""
    return int(seed_sequence(root_seed, *keys).generate_state(1, dtype=np.uint32)[0])


def partition_sizes(n_samples: int, partition_size: int = DEFAULT_PARTITION_SIZE) -> List[int]:
    """
    把蒙特卡洛样本数切分为固定大小的分区

    Args:
        n_samples: 总样本数
        partition_size: 每个分区的最大样本数

    Returns:
        各分区样本数，顺序固定
    """
    if n_samples < 1:
        raise InputValidationError(f"样本数必须 >= 1: {n_samples}")
    full, rest = divmod(n_samples, partition_size)
    sizes = [partition_size] * full
    if rest:
        sizes.append(rest)
    return sizes


def distinct(values: Sequence[int]) -> bool:
    return len(set(values)) == len(values)
