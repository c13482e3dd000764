#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
测试公共夹具

把 src/ 加入导入路径，并提供玩具数据集与可解析求解的线性替身模型。
"""

import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# 导入项目模块
ROOT = Path(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
sys.path.insert(0, str(ROOT / "src"))

from attribution_types import ModelClass  # noqa: E402
from pipeline_models import LinearHead, PipelineModel  # noqa: E402
from tabular_data import DatasetSchema, PreprocessTransform, dataset_from_frame, load_csv  # noqa: E402

TOY_CSV = ROOT / "data" / "toy_credit.csv"
TOY_SCHEMA = ROOT / "data" / "toy_credit.schema.yaml"
CONFIG_DIR = ROOT / "configs"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 验收规模的长时间测试")


@pytest.fixture(scope="session")
def toy_schema():
    return DatasetSchema.from_file(str(TOY_SCHEMA))


@pytest.fixture(scope="session")
def toy_dataset(toy_schema):
    return load_csv(str(TOY_CSV), toy_schema)


def numeric_schema(d: int, dataset_id: str = "synthetic") -> DatasetSchema:
    """d个数值特征 x0..x{d-1} 与标签 y"""
    return DatasetSchema.model_validate({
        "dataset_id": dataset_id,
        "features": [{"name": f"x{i}", "kind": "numeric"} for i in range(d)],
        "label": {"name": "y", "positive_label": "1"},
    })


def numeric_dataset(n: int, d: int, seed: int = 0):
    """线性可分倾向的合成数值数据集"""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    w = np.linspace(1.0, -0.5, d)
    y = (X @ w + 0.3 * rng.normal(size=n) > 0).astype(int)
    frame = pd.DataFrame(X, columns=[f"x{i}" for i in range(d)])
    frame["y"] = y.astype(str)
    return dataset_from_frame(frame, numeric_schema(d))


def linear_model(weights, bias: float = 0.0, link: str = "identity",
                 model_seed: int = 0) -> PipelineModel:
    """恒等标准化 + 线性头，f(x) = w·x + b"""
    d = len(weights)
    names = [f"x{i}" for i in range(d)]
    transform = PreprocessTransform(
        feature_names=names,
        kinds=["numeric"] * d,
        numeric_stats={name: (0.0, 1.0) for name in names},
        category_levels={},
    )
    return PipelineModel(transform, LinearHead(weights, bias, link), ModelClass.LOGREG, model_seed)


@pytest.fixture
def synthetic_dataset():
    return numeric_dataset(120, 5, seed=3)
