#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
表格数据模块

提供数据集模式、CSV读取、预处理变换 T（独热编码 + 标准化，
并记录语义特征到编码列的分组）以及分层交叉验证划分。
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator
from sklearn.model_selection import StratifiedKFold

from attribution_types import DataFormatError, InputValidationError
from seed_streams import CHANNEL_FOLDS, derive_int_seed, require_seed

logger = logging.getLogger(__name__)

# 所有列通用的缺失值标记
GLOBAL_MISSING_TOKENS = frozenset({"", "NA", "N/A", "NaN", "nan", "?"})

# 每折至少这么多行时才检查类别比例
STRATA_CHECK_MIN_ROWS = 50
STRATA_TOLERANCE = 0.02


class FeatureSpec(BaseModel):
    """单个语义特征的模式声明"""
    model_config = ConfigDict(frozen=True)

    name: str
    kind: Literal["numeric", "categorical"]
    levels: Optional[List[str]] = None
    missing_tokens: List[str] = Field(default_factory=list)


class LabelSpec(BaseModel):
    """二分类标签列声明"""
    model_config = ConfigDict(frozen=True)

    name: str
    positive_label: str


class DatasetSchema(BaseModel):
    """数据集模式：特征声明 + 标签列"""
    model_config = ConfigDict(frozen=True)

    dataset_id: str
    features: List[FeatureSpec] = Field(min_length=2)
    label: LabelSpec
    # 源文件中存在但不参与建模的列
    ignored_columns: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_names(self) -> "DatasetSchema":
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError(f"特征名重复: {names}")
        if self.label.name in names:
            raise ValueError(f"标签列 {self.label.name} 不能同时作为特征")
        overlap = sorted(set(self.ignored_columns) & set(self.column_names()))
        if overlap:
            raise ValueError(f"忽略列与特征或标签重名: {overlap}")
        return self

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def d(self) -> int:
        return len(self.features)

    def column_names(self) -> List[str]:
        return self.feature_names + [self.label.name]

    @classmethod
    def from_file(cls, path: str) -> "DatasetSchema":
        """从YAML/JSON模式文件加载"""
        schema_path = Path(path)
        if not schema_path.exists():
            raise FileNotFoundError(f"模式文件不存在: {path}")
        with open(schema_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
        if not isinstance(data, dict):
            raise InputValidationError(f"模式文件顶层必须是映射: {path}")
        return cls.model_validate(data)


class Dataset:
    """类型化的表格数据集（特征 + 二值标签），构造后视为只读"""

    def __init__(self, frame: pd.DataFrame, labels: np.ndarray, schema: DatasetSchema,
                 levels: Mapping[str, Tuple[str, ...]], source_rows: np.ndarray,
                 dropped_rows: int = 0):
        """
        初始化数据集

        Args:
            frame: 特征表，数值列为float64，类别列为str
            labels: 0/1 标签
            schema: 数据集模式
            levels: 每个类别特征在完整数据集中观察到的取值
            source_rows: 每行在原始来源中的行号
            dropped_rows: 读取时因缺失值丢弃的行数
        """
        self.frame = frame.reset_index(drop=True)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.labels.setflags(write=False)
        self.schema = schema
        self.levels = {name: tuple(values) for name, values in levels.items()}
        self.source_rows = np.asarray(source_rows, dtype=np.int64)
        self.dropped_rows = int(dropped_rows)

    @property
    def dataset_id(self) -> str:
        return self.schema.dataset_id

    @property
    def feature_names(self) -> List[str]:
        return self.schema.feature_names

    @property
    def d(self) -> int:
        return self.schema.d

    @property
    def n_rows(self) -> int:
        return int(self.frame.shape[0])

    def __len__(self) -> int:
        return self.n_rows

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """按行下标取子集，保留完整数据集的类别取值"""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            frame=self.frame.iloc[idx],
            labels=self.labels[idx],
            schema=self.schema,
            levels=self.levels,
            source_rows=self.source_rows[idx],
            dropped_rows=0,
        )

    def positions_of(self, source_rows: Sequence[int]) -> np.ndarray:
        """把原始来源行号映射回当前数据集中的行下标"""
        lookup = {int(r): i for i, r in enumerate(self.source_rows)}
        try:
            return np.asarray([lookup[int(r)] for r in source_rows], dtype=np.int64)
        except KeyError as e:
            raise InputValidationError(f"来源行号 {e} 不在数据集中") from e

    def row(self, index: int) -> pd.DataFrame:
        """取单行原始特征（保持DataFrame形式）"""
        if index < 0 or index >= self.n_rows:
            raise InputValidationError(f"行下标 {index} 超出范围 [0, {self.n_rows})")
        return self.frame.iloc[[index]].reset_index(drop=True)

    def class_counts(self) -> Dict[int, int]:
        return {0: int(np.sum(self.labels == 0)), 1: int(np.sum(self.labels == 1))}

    def summary(self) -> Dict[str, Any]:
        """数据集摘要"""
        counts = self.class_counts()
        return {
            "dataset_id": self.dataset_id,
            "n_rows": self.n_rows,
            "dropped_rows": self.dropped_rows,
            "d": self.d,
            "features": [
                {"name": f.name, "kind": f.kind,
                 "levels": list(self.levels.get(f.name, ())) if f.kind == "categorical" else None}
                for f in self.schema.features
            ],
            "class_counts": {"0": counts[0], "1": counts[1]},
            "positive_rate": counts[1] / self.n_rows if self.n_rows else None,
        }


def _cell_text(value: Any) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    return str(value).strip()


def _coerce(raw: pd.DataFrame, schema: DatasetSchema, line_offset: int) -> Dataset:
    """
    把原始表格转换为类型化数据集

    Args:
        raw: 原始表格（任意单元格类型）
        schema: 数据集模式
        line_offset: 行号偏移（CSV表头占1行，数据从第2行开始）

    Returns:
        Dataset对象
    """
    expected = schema.column_names()
    unknown = [c for c in raw.columns if c not in expected and c not in schema.ignored_columns]
    if unknown:
        raise DataFormatError(f"未知列: {unknown}")
    absent = [c for c in expected if c not in raw.columns]
    if absent:
        raise DataFormatError(f"缺少模式中声明的列: {absent}")

    text = pd.DataFrame({c: raw[c].map(_cell_text) for c in expected})
    missing = pd.DataFrame(False, index=text.index, columns=expected)
    for spec in schema.features:
        tokens = GLOBAL_MISSING_TOKENS | set(spec.missing_tokens)
        missing[spec.name] = text[spec.name].isin(tokens)
    missing[schema.label.name] = text[schema.label.name].isin(GLOBAL_MISSING_TOKENS)

    keep = ~missing.any(axis=1).to_numpy()
    dropped = int(np.sum(~keep))
    text = text.loc[keep]
    line_numbers = np.flatnonzero(keep) + line_offset

    columns: Dict[str, Any] = {}
    levels: Dict[str, Tuple[str, ...]] = {}
    for spec in schema.features:
        cells = text[spec.name]
        if spec.kind == "numeric":
            values = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=np.float64)
            bad = ~np.isfinite(values)
            if bad.any():
                first = int(np.flatnonzero(bad)[0])
                raise DataFormatError(
                    f"第 {line_numbers[first]} 行, 列 '{spec.name}': 无法解析为有限数值 "
                    f"'{cells.iloc[first]}'"
                )
            columns[spec.name] = values
        else:
            observed = set(cells.unique())
            declared = [lv for lv in (spec.levels or []) if lv in observed]
            extra = sorted(observed - set(declared))
            levels[spec.name] = tuple(declared + extra)
            columns[spec.name] = cells.to_numpy(dtype=object)

    label_cells = text[schema.label.name]
    distinct = sorted(label_cells.unique())
    if len(distinct) > 2:
        raise DataFormatError(f"标签列 '{schema.label.name}' 不是二值的: {distinct}")
    if len(label_cells) and schema.label.positive_label not in set(distinct):
        raise InputValidationError(
            f"标签列 '{schema.label.name}' 中没有取值等于正类 '{schema.label.positive_label}' 的行, "
            f"实际取值: {distinct}"
        )
    labels = (label_cells == schema.label.positive_label).to_numpy(dtype=np.int64)

    frame = pd.DataFrame(columns, columns=schema.feature_names)
    return Dataset(frame, labels, schema, levels, line_numbers, dropped_rows=dropped)


def load_csv(path: str, schema: DatasetSchema) -> Dataset:
    """
    读取CSV数据集

    Args:
        path: CSV文件路径（首行为表头）
        schema: 数据集模式

    Returns:
        类型化的Dataset，含缺失值的行被丢弃
    """
    csv_path = Path(path)
    if not csv_path.exists() or not csv_path.is_file():
        raise FileNotFoundError(f"数据文件不存在: {path}")
    raw = pd.read_csv(csv_path, dtype=str, keep_default_na=False, skipinitialspace=True)
    raw.columns = [str(c).strip() for c in raw.columns]
    dataset = _coerce(raw, schema, line_offset=2)
    logger.info(f"已加载数据集 {schema.dataset_id}: {dataset.n_rows} 行, "
                f"丢弃 {dataset.dropped_rows} 行含缺失值的记录, d={dataset.d}")
    return dataset


def dataset_from_frame(frame: pd.DataFrame, schema: DatasetSchema) -> Dataset:
    """从内存中的DataFrame构造数据集（行号从0开始）"""
    return _coerce(frame.reset_index(drop=True), schema, line_offset=0)


def as_feature_frame(x: Union[pd.DataFrame, pd.Series, Mapping[str, Any]],
                     feature_names: Sequence[str]) -> pd.DataFrame:
    """把单行或多行原始输入统一为按模式排列的DataFrame"""
    if isinstance(x, pd.DataFrame):
        frame = x
    elif isinstance(x, pd.Series):
        frame = x.to_frame().T
    elif isinstance(x, Mapping):
        frame = pd.DataFrame([dict(x)])
    else:
        raise InputValidationError(f"不支持的输入类型: {type(x).__name__}")
    absent = [name for name in feature_names if name not in frame.columns]
    if absent:
        raise InputValidationError(f"输入缺少特征列: {absent}")
    return frame[list(feature_names)].reset_index(drop=True)


class PreprocessTransform:
    """预处理变换 T：数值列标准化，类别列独热编码，记录语义分组"""

    def __init__(self, feature_names: Sequence[str], kinds: Sequence[str],
                 numeric_stats: Mapping[str, Tuple[float, float]],
                 category_levels: Mapping[str, Sequence[str]]):
        """
        初始化变换

        Args:
            feature_names: 语义特征名（模式顺序）
            kinds: 每个特征的类型 numeric / categorical
            numeric_stats: 数值特征的 (均值, 标准差)
            category_levels: 类别特征在训练划分中出现的取值
        """
        self.feature_names = tuple(feature_names)
        self.kinds = tuple(kinds)
        self.numeric_stats = {k: (float(m), float(s)) for k, m_s in numeric_stats.items()
                              for m, s in [m_s]}
        self.category_levels = {k: tuple(v) for k, v in category_levels.items()}

        groups: List[Tuple[int, ...]] = []
        encoded_names: List[str] = []
        for name, kind in zip(self.feature_names, self.kinds):
            start = len(encoded_names)
            if kind == "numeric":
                mean, std = self.numeric_stats[name]
                if not std > 0:
                    raise InputValidationError(f"特征 {name} 的标准差必须 > 0: {std}")
                encoded_names.append(name)
            else:
                encoded_names.extend(f"{name}={level}" for level in self.category_levels[name])
            groups.append(tuple(range(start, len(encoded_names))))
        self.group_map = tuple(groups)
        self.encoded_names = tuple(encoded_names)
        self._column_group = np.empty(len(encoded_names), dtype=np.int64)
        for g, cols in enumerate(groups):
            self._column_group[list(cols)] = g

    @property
    def d(self) -> int:
        return len(self.feature_names)

    @property
    def encoded_width(self) -> int:
        return len(self.encoded_names)

    @property
    def column_group(self) -> np.ndarray:
        """每个编码列所属的语义特征下标"""
        return self._column_group

    def transform(self, x: Union[pd.DataFrame, pd.Series, Mapping[str, Any]]) -> np.ndarray:
        """
        对原始特征行应用 T

        Args:
            x: 原始特征（一行或多行）

        Returns:
            编码矩阵 (n, encoded_width)
        """
        frame = as_feature_frame(x, self.feature_names)
        n = frame.shape[0]
        out = np.zeros((n, self.encoded_width), dtype=np.float64)
        for name, kind, cols in zip(self.feature_names, self.kinds, self.group_map):
            column = frame[name]
            if kind == "numeric":
                values = pd.to_numeric(column, errors="coerce").to_numpy(dtype=np.float64)
                if not np.all(np.isfinite(values)):
                    raise InputValidationError(f"数值特征 {name} 含无法解析或非有限的值")
                mean, std = self.numeric_stats[name]
                out[:, cols[0]] = (values - mean) / std
            else:
                codes = pd.Categorical(column.map(_cell_text),
                                       categories=self.category_levels[name]).codes
                # 训练时未见过的取值编码为全零
                seen = codes >= 0
                if cols:
                    out[np.flatnonzero(seen), cols[0] + codes[seen]] = 1.0
        return out

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典表示"""
        return {
            "feature_names": list(self.feature_names),
            "kinds": list(self.kinds),
            "numeric_stats": {k: [m, s] for k, (m, s) in self.numeric_stats.items()},
            "category_levels": {k: list(v) for k, v in self.category_levels.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PreprocessTransform":
        """从字典创建变换"""
        return cls(
            feature_names=data["feature_names"],
            kinds=data["kinds"],
            numeric_stats={k: tuple(v) for k, v in data["numeric_stats"].items()},
            category_levels=data["category_levels"],
        )


def fit_transform(train: Dataset) -> PreprocessTransform:
    """
    只在训练划分上拟合预处理变换

    Args:
        train: 训练划分

    Returns:
        拟合好的PreprocessTransform
    """
    if train.n_rows == 0:
        raise InputValidationError("训练划分为空，无法拟合预处理变换")
    numeric_stats: Dict[str, Tuple[float, float]] = {}
    category_levels: Dict[str, Tuple[str, ...]] = {}
    for spec in train.schema.features:
        column = train.frame[spec.name]
        if spec.kind == "numeric":
            values = column.to_numpy(dtype=np.float64)
            mean = float(np.mean(values))
            # 总体标准差；常数列记为1
            std = float(np.std(values, ddof=0))
            numeric_stats[spec.name] = (mean, std if std > 0 else 1.0)
        else:
            present = set(column.unique())
            category_levels[spec.name] = tuple(
                lv for lv in train.levels[spec.name] if lv in present
            )
    return PreprocessTransform(
        feature_names=train.feature_names,
        kinds=[f.kind for f in train.schema.features],
        numeric_stats=numeric_stats,
        category_levels=category_levels,
    )


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """交叉验证划分：每行所属的折"""
    n_folds: int
    assignments: np.ndarray
    stratified: bool
    seed: int

    def __post_init__(self):
        assignments = np.asarray(self.assignments, dtype=np.int64).copy()
        assignments.setflags(write=False)
        object.__setattr__(self, "assignments", assignments)

    def test_indices(self, fold: int) -> np.ndarray:
        self._check_fold(fold)
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        self._check_fold(fold)
        return np.flatnonzero(self.assignments != fold)

    def fold_sizes(self) -> List[int]:
        return [int(np.sum(self.assignments == f)) for f in range(self.n_folds)]

    def _check_fold(self, fold: int) -> None:
        if fold < 0 or fold >= self.n_folds:
            raise InputValidationError(f"折编号 {fold} 超出范围 [0, {self.n_folds})")

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典表示"""
        return {
            "n_folds": self.n_folds,
            "stratified": self.stratified,
            "seed": self.seed,
            "assignments": [int(a) for a in self.assignments],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FoldPlan":
        """从字典创建FoldPlan"""
        return cls(
            n_folds=int(data["n_folds"]),
            assignments=np.asarray(data["assignments"], dtype=np.int64),
            stratified=bool(data.get("stratified", True)),
            seed=int(data["seed"]),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)


def stratified_folds(ds: Dataset, n_folds: int, seed: int) -> FoldPlan:
    """
    构造分层K折划分

    Args:
        ds: 数据集
        n_folds: 折数（>= 2）
        seed: 划分种子

    Returns:
        FoldPlan，给定种子时结果确定
    """
    seed = require_seed(seed, "fold_seed")
    if n_folds < 2:
        raise InputValidationError(f"折数必须 >= 2: {n_folds}")
    counts = ds.class_counts()
    for cls_label, count in counts.items():
        if count < n_folds:
            raise InputValidationError(
                f"类别 {cls_label} 只有 {count} 行, 少于折数 {n_folds}"
            )

    splitter = StratifiedKFold(n_splits=n_folds, shuffle=True,
                               random_state=derive_int_seed(seed, CHANNEL_FOLDS))
    assignments = np.full(ds.n_rows, -1, dtype=np.int64)
    for fold, (_, test_idx) in enumerate(splitter.split(np.zeros((ds.n_rows, 1)), ds.labels)):
        assignments[test_idx] = fold

    plan = FoldPlan(n_folds=n_folds, assignments=assignments, stratified=True, seed=seed)
    global_rate = counts[1] / ds.n_rows
    for fold in range(n_folds):
        idx = plan.test_indices(fold)
        if idx.size >= STRATA_CHECK_MIN_ROWS:
            rate = float(np.mean(ds.labels[idx]))
            if abs(rate - global_rate) > STRATA_TOLERANCE:
                logger.warning(f"第 {fold} 折正类比例 {rate:.3f} 偏离全局比例 {global_rate:.3f}")
    logger.info(f"分层划分完成: {n_folds} 折, 每折大小 {plan.fold_sizes()}")
    return plan
