#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
解释多重性核心类型模块

提供解释向量、特征排序、种子对、解释查询和多重性设置等领域类型，
以及全部模块共用的异常层次。所有类型构造后不可变。
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)


# 异常层次
class MultiplicityError(Exception):
    """所有解释多重性相关错误的基类"""


class InputValidationError(MultiplicityError, ValueError):
    """输入不满足模式、范围或参数约束"""


class DataFormatError(InputValidationError):
    """CSV内容无法解析或列名不匹配"""


class TrainingError(MultiplicityError):
    """模型训练失败（单类别划分、非有限损失等）"""


class EstimationError(MultiplicityError):
    """Shapley估计失败（回归秩亏、枚举上限、效率残差超限）"""


class CampaignError(MultiplicityError):
    """审计活动中某个工作单元失败"""

    def __init__(self, message: str, fold: Optional[int] = None,
                 model_seed: Optional[int] = None, explainer_seed: Optional[int] = None):
        self.message = message
        self.fold = fold
        self.model_seed = model_seed
        self.explainer_seed = explainer_seed
        super().__init__(
            f"{message} (fold={fold}, model_seed={model_seed}, explainer_seed={explainer_seed})"
        )

    def __reduce__(self):
        # 以原始消息重建，后缀只追加一次
        return (type(self), (self.message, self.fold, self.model_seed, self.explainer_seed))


class ModelClass(str, Enum):
    """可训练的模型类别"""
    LOGREG = "logreg"
    DTREE = "dtree"
    RFOREST = "rforest"
    MLP = "mlp"


class ExplainerKind(str, Enum):
    """解释器类别"""
    EXACT = "exact"
    KERNEL = "kernel"


class MultiplicitySetting(str, Enum):
    """多重性设置：整体、模型诱导、解释器诱导"""
    OVERALL = "overall"
    MODEL_INDUCED = "model_induced"
    EXPLAINER_INDUCED = "explainer_induced"


@dataclass(frozen=True)
class SeedPair:
    """一次流水线执行的种子对 (s_m, s_e)"""
    model_seed: int
    explainer_seed: int

    def __post_init__(self):
        for name in ("model_seed", "explainer_seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
                raise InputValidationError(f"{name} 必须是无符号整数: {value!r}")
            object.__setattr__(self, name, int(value))

    def to_dict(self) -> Dict[str, int]:
        """转换为字典表示"""
        return {"model_seed": self.model_seed, "explainer_seed": self.explainer_seed}


@dataclass(frozen=True, eq=False)
class ExplanationVector:
    """单个实例、单次运行的Shapley归因向量 φ"""
    values: np.ndarray
    feature_names: Tuple[str, ...]
    instance_id: str
    seed_pair: SeedPair

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        names = tuple(str(name) for name in self.feature_names)
        if len(names) < 2:
            raise InputValidationError(f"解释向量至少需要2个特征, 实际为 {len(names)}")
        if values.shape[0] != len(names):
            raise InputValidationError(
                f"归因长度 {values.shape[0]} 与特征名数量 {len(names)} 不一致"
            )
        if not np.all(np.isfinite(values)):
            bad = [names[i] for i in np.flatnonzero(~np.isfinite(values))]
            raise InputValidationError(f"归因包含非有限值, 特征: {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "instance_id", str(self.instance_id))

    @property
    def d(self) -> int:
        return len(self.feature_names)

    def same_schema(self, other: "ExplanationVector") -> bool:
        return self.feature_names == other.feature_names

    def __eq__(self, other):
        if not isinstance(other, ExplanationVector):
            return False
        return (self.feature_names == other.feature_names
                and self.instance_id == other.instance_id
                and self.seed_pair == other.seed_pair
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.feature_names, self.instance_id, self.seed_pair, self.values.tobytes()))

    def to_dict(self) -> Dict[str, Any]:
        """转换为JSON对象 {instance_id, model_seed, explainer_seed, features, phi}"""
        return {
            "instance_id": self.instance_id,
            "model_seed": self.seed_pair.model_seed,
            "explainer_seed": self.seed_pair.explainer_seed,
            "features": list(self.feature_names),
            "phi": [float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExplanationVector":
        """从字典创建解释向量"""
        try:
            return cls(
                values=np.asarray(data["phi"], dtype=np.float64),
                feature_names=tuple(data["features"]),
                instance_id=data["instance_id"],
                seed_pair=SeedPair(data["model_seed"], data["explainer_seed"]),
            )
        except KeyError as e:
            raise InputValidationError(f"解释JSON缺少字段: {e}") from e


@dataclass(frozen=True)
class Ranking:
    """按 |φ| 降序的特征排列，相等幅值按特征下标升序"""
    order: Tuple[int, ...]
    tie_rule: str = "by-index"

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise InputValidationError(f"排序不是 0..{len(order) - 1} 的排列: {order}")
        if self.tie_rule != "by-index":
            raise InputValidationError(f"不支持的平局规则: {self.tie_rule}")
        object.__setattr__(self, "order", order)

    @property
    def d(self) -> int:
        return len(self.order)

    def top_k(self, k: int) -> frozenset:
        """前k位的特征下标集合"""
        return frozenset(self.order[:k])

    def positions(self) -> np.ndarray:
        """每个特征所在的名次（0为最重要）"""
        pos = np.empty(self.d, dtype=np.int64)
        pos[list(self.order)] = np.arange(self.d)
        return pos


RankingLike = Union[Ranking, ExplanationVector, Sequence[float], np.ndarray]


def ranking_of(phi: Union[ExplanationVector, Sequence[float], np.ndarray]) -> Ranking:
    """
    计算归因向量诱导的确定性排序

    Args:
        phi: 解释向量或实数序列

    Returns:
        按 |φ| 降序、下标升序破平局的Ranking
    """
    values = phi.values if isinstance(phi, ExplanationVector) else np.asarray(phi, dtype=np.float64)
    if values.ndim != 1:
        raise InputValidationError(f"归因必须是一维向量, 实际形状 {values.shape}")
    if not np.all(np.isfinite(values)):
        raise InputValidationError("归因包含非有限值, 无法排序")
    magnitude = np.abs(values)
    # lexsort以最后一个键为主键
    order = np.lexsort((np.arange(values.shape[0]), -magnitude))
    return Ranking(tuple(int(i) for i in order))


def as_ranking(item: RankingLike) -> Ranking:
    """把排序、解释向量或归因数组统一转换为Ranking"""
    if isinstance(item, Ranking):
        return item
    return ranking_of(item)


class ExplanationQuery(BaseModel):
    """审计单元：数据集 + 任务 + 目标实例 + 模型类别 + 解释器族"""
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    dataset_id: str
    fold_id: int = Field(ge=0)
    instance_index: int = Field(ge=0)
    model_class: ModelClass
    explainer_kind: ExplainerKind
    background_size: int = Field(ge=1)

    def check_against(self, test_fold_size: int, train_split_size: int) -> None:
        """检查实例下标和背景集大小是否落在对应划分内"""
        if self.instance_index >= test_fold_size:
            raise InputValidationError(
                f"实例下标 {self.instance_index} 超出测试折大小 {test_fold_size}"
            )
        if self.background_size > train_split_size:
            raise InputValidationError(
                f"背景集大小 {self.background_size} 超过训练划分大小 {train_split_size}"
            )


def explanation_matrix(runs: Sequence[ExplanationVector]) -> np.ndarray:
    """把同一模式下的多次解释堆叠为 (N, d) 矩阵"""
    if not runs:
        raise InputValidationError("解释列表为空")
    first = runs[0]
    for run in runs[1:]:
        if not first.same_schema(run):
            raise InputValidationError("解释向量的特征模式不一致")
    return np.vstack([run.values for run in runs])


def feature_names_of(runs: Sequence[ExplanationVector]) -> List[str]:
    return list(runs[0].feature_names)
