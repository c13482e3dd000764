#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Shapley解释器模块

在语义特征层面计算Shapley归因：
- 价值函数：缺席特征的全部编码列一起用背景行替换（边际/干预式），对K个背景行取平均
- exact_shapley：对全部 2^d 个联盟枚举的精确解（d <= 14）
- kernel_shap：Shapley核加权最小二乘，效率约束精确成立；
  背景抽样与联盟抽样都由解释器种子派生
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import binom

from attribution_types import (
    EstimationError,
    ExplainerKind,
    ExplanationVector,
    InputValidationError,
    SeedPair,
)
from pipeline_models import PipelineModel
from seed_streams import CHANNEL_BACKGROUND, CHANNEL_COALITIONS, derive_stream, require_seed
from tabular_data import Dataset, as_feature_frame

logger = logging.getLogger(__name__)

# 精确枚举上限
MAX_EXACT_FEATURES = 14

# 单次送入模型的混合行数上限
MAX_HYBRID_ROWS = 65_536

EXACT_EFFICIENCY_TOLERANCE = 1e-9
KERNEL_EFFICIENCY_TOLERANCE = 1e-7

RawRow = Union[pd.DataFrame, pd.Series, Mapping[str, Any]]


@dataclass(frozen=True, eq=False)
class BackgroundSet:
    """背景数据集 D_bg：从训练划分中抽取的原始特征行"""
    frame: pd.DataFrame
    explainer_seed: int
    source_rows: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.frame.shape[0] < 1:
            raise InputValidationError("背景集至少需要1行")
        object.__setattr__(self, "frame", self.frame.reset_index(drop=True))
        object.__setattr__(self, "explainer_seed", require_seed(self.explainer_seed, "explainer_seed"))

    @property
    def size(self) -> int:
        return int(self.frame.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "size": self.size,
            "explainer_seed": self.explainer_seed,
            "source_rows": None if self.source_rows is None else [int(r) for r in self.source_rows],
        }


def sample_background(train_split: Dataset, K: int, explainer_seed: int,
                      fold: int = 0) -> BackgroundSet:
    """
    从训练划分中均匀无放回抽取背景集

    Args:
        train_split: 训练划分
        K: 背景集大小
        explainer_seed: 解释器种子
        fold: 折编号，作为子流的位置键

    Returns:
        BackgroundSet，给定种子时结果确定
    """
    explainer_seed = require_seed(explainer_seed, "explainer_seed")
    if K < 1:
        raise InputValidationError(f"背景集大小必须 >= 1: {K}")
    if K > train_split.n_rows:
        raise InputValidationError(f"背景集大小 {K} 超过训练划分大小 {train_split.n_rows}")
    rng = derive_stream(explainer_seed, CHANNEL_BACKGROUND, fold)
    idx = rng.choice(train_split.n_rows, size=K, replace=False)
    return BackgroundSet(
        frame=train_split.frame.iloc[idx],
        explainer_seed=explainer_seed,
        source_rows=train_split.source_rows[idx],
    )


@dataclass(frozen=True)
class CoalitionSample:
    """单个联盟：mask[i] 为 True 表示特征 i 取自被解释实例"""
    mask: Tuple[bool, ...]
    kernel_weight: float


@dataclass(frozen=True, eq=False)
class CoalitionPlan:
    """回归设计：联盟矩阵 (n, d) 与核权重"""
    masks: np.ndarray
    weights: np.ndarray
    enumerated: bool

    @property
    def n_coalitions(self) -> int:
        return int(self.masks.shape[0])

    def samples(self) -> List[CoalitionSample]:
        return [CoalitionSample(tuple(bool(b) for b in m), float(w))
                for m, w in zip(self.masks, self.weights)]


@dataclass(frozen=True, eq=False)
class ShapleyResult:
    """一次解释的结果与元数据"""
    explanation: ExplanationVector
    prediction: float
    base_value: float
    n_coalitions: int
    enumerated: bool
    efficiency_residual: float
    explainer_kind: ExplainerKind

    def to_dict(self) -> Dict[str, Any]:
        data = self.explanation.to_dict()
        data.update({
            "explainer_kind": self.explainer_kind.value,
            "prediction": self.prediction,
            "base_value": self.base_value,
            "n_coalitions": self.n_coalitions,
            "enumerated": self.enumerated,
            "efficiency_residual": self.efficiency_residual,
        })
        return data


class CoalitionValues:
    """绑定 (模型, 实例, 背景集) 的联盟价值计算器"""

    def __init__(self, model: PipelineModel, x: RawRow, bg: BackgroundSet):
        frame = as_feature_frame(x, model.feature_names)
        if frame.shape[0] != 1:
            raise InputValidationError(f"只能解释单个实例, 实际 {frame.shape[0]} 行")
        self.model = model
        self.x_frame = frame
        self.x_encoded = model.transform.transform(frame)[0]
        self.bg_encoded = model.transform.transform(bg.frame)
        self.column_group = model.transform.column_group
        self.d = model.d
        self.prediction = float(model.predict_encoded(self.x_encoded[None, :])[0])
        self.base_value = float(np.mean(model.predict_encoded(self.bg_encoded)))

    def evaluate(self, masks: np.ndarray) -> np.ndarray:
        """
        批量计算联盟价值

        Args:
            masks: (n, d) 布尔矩阵

        Returns:
            (n,) 每个联盟在背景集上的平均预测
        """
        masks = np.asarray(masks, dtype=bool)
        if masks.ndim != 2 or masks.shape[1] != self.d:
            raise InputValidationError(f"联盟矩阵形状 {masks.shape} 与特征数 {self.d} 不匹配")
        out = np.empty(masks.shape[0], dtype=np.float64)
        full = masks.all(axis=1)
        empty = ~masks.any(axis=1)
        out[full] = self.prediction
        out[empty] = self.base_value
        todo = np.flatnonzero(~(full | empty))
        K, width = self.bg_encoded.shape
        chunk = max(1, MAX_HYBRID_ROWS // K)
        for start in range(0, todo.size, chunk):
            rows = todo[start:start + chunk]
            column_masks = masks[rows][:, self.column_group]
            hybrid = np.where(column_masks[:, None, :], self.x_encoded[None, None, :],
                              self.bg_encoded[None, :, :])
            preds = self.model.predict_encoded(hybrid.reshape(-1, width)).reshape(rows.size, K)
            out[rows] = np.mean(preds, axis=1)
        return out


def value_function(model: PipelineModel, x: RawRow, mask, bg: BackgroundSet) -> float:
    """
    联盟价值：缺席特征从背景行补齐后的平均正类概率

    Args:
        model: 流水线模型
        x: 被解释实例
        mask: 长度为d的0/1向量
        bg: 背景集

    Returns:
        背景平均预测值
    """
    mask = np.asarray(mask, dtype=bool).reshape(1, -1)
    return float(CoalitionValues(model, x, bg).evaluate(mask)[0])


def _all_masks(d: int) -> np.ndarray:
    codes = np.arange(2 ** d, dtype=np.int64)
    return ((codes[:, None] >> np.arange(d)) & 1).astype(bool)


def _make_result(values: CoalitionValues, phi: np.ndarray, explainer_seed: int,
                 instance_id: str, n_coalitions: int, enumerated: bool,
                 kind: ExplainerKind, tolerance: float) -> ShapleyResult:
    residual = float(math.fsum(phi) - (values.prediction - values.base_value))
    if abs(residual) > tolerance:
        raise EstimationError(f"效率残差 {residual:.3e} 超过容差 {tolerance:.0e}")
    explanation = ExplanationVector(
        values=phi,
        feature_names=values.model.feature_names,
        instance_id=instance_id,
        seed_pair=SeedPair(values.model.model_seed, explainer_seed),
    )
    return ShapleyResult(explanation, values.prediction, values.base_value,
                         n_coalitions, enumerated, residual, kind)


def exact_shapley_result(model: PipelineModel, x: RawRow, bg: BackgroundSet,
                         instance_id: str = "x",
                         explainer_seed: Optional[int] = None) -> ShapleyResult:
    """精确枚举，返回带元数据的结果（种子缺省取背景集的解释器种子）"""
    d = model.d
    if d > MAX_EXACT_FEATURES:
        raise EstimationError(
            f"精确枚举需要 2^{d} 次联盟评估, 超过上限 d <= {MAX_EXACT_FEATURES}; 请改用 kernel 解释器"
        )
    values = CoalitionValues(model, x, bg)
    masks = _all_masks(d)
    v = values.evaluate(masks)
    sizes = masks.sum(axis=1)
    # |S|!(d-|S|-1)!/d! = 1 / (d * C(d-1, |S|))
    size_weights = 1.0 / (d * binom(d - 1, np.arange(d)))
    codes = np.arange(2 ** d, dtype=np.int64)
    phi = np.empty(d, dtype=np.float64)
    for i in range(d):
        without = codes[~masks[:, i]]
        phi[i] = math.fsum(size_weights[sizes[without]] * (v[without | (1 << i)] - v[without]))
    seed = bg.explainer_seed if explainer_seed is None else require_seed(explainer_seed, "explainer_seed")
    return _make_result(values, phi, seed, instance_id, 2 ** d, True,
                        ExplainerKind.EXACT, EXACT_EFFICIENCY_TOLERANCE)


def exact_shapley(model: PipelineModel, x: RawRow, bg: BackgroundSet) -> ExplanationVector:
    """
    按Shapley公式对全部联盟枚举

    Args:
        model: 流水线模型
        x: 被解释实例
        bg: 背景集

    Returns:
        精确的ExplanationVector（给定背景集时确定）
    """
    return exact_shapley_result(model, x, bg).explanation


def default_coalition_budget(d: int) -> int:
    """默认联盟预算 2d + 2048，上限为 2^d - 2"""
    return int(min(2 * d + 2048, 2 ** d - 2))


def shapley_kernel_weight(d: int, size: int) -> float:
    """Shapley核权重 (d-1) / (C(d,s) s (d-s))"""
    return float((d - 1) / (binom(d, size) * size * (d - size)))


def enumerate_coalitions(d: int) -> CoalitionPlan:
    """枚举全部 2^d - 2 个真联盟"""
    masks = _all_masks(d)[1:-1]
    sizes = masks.sum(axis=1)
    weights = np.array([shapley_kernel_weight(d, int(s)) for s in sizes])
    return CoalitionPlan(masks=masks, weights=weights, enumerated=True)


def sample_coalitions(d: int, n_coalitions: int, rng: np.random.Generator) -> CoalitionPlan:
    """
    按Shapley核分配联盟预算：从两端向中间完整枚举能负担的联盟大小，
    剩余预算按核权重抽样（成对加入补集，重复样本累加权重）

    Args:
        d: 特征数
        n_coalitions: 联盟预算
        rng: 联盟抽样随机流

    Returns:
        CoalitionPlan
    """
    num_subset_sizes = int(np.ceil((d - 1) / 2.0))
    num_paired_subset_sizes = int(np.floor((d - 1) / 2.0))
    weight_vector = np.array([(d - 1.0) / (s * (d - s)) for s in range(1, num_subset_sizes + 1)])
    weight_vector[:num_paired_subset_sizes] *= 2
    weight_vector /= np.sum(weight_vector)

    masks: List[np.ndarray] = []
    weights: List[float] = []
    samples_left = n_coalitions
    num_full_subsets = 0
    remaining = weight_vector.copy()
    for size in range(1, num_subset_sizes + 1):
        paired = size <= num_paired_subset_sizes
        nsubsets = binom(d, size) * (2 if paired else 1)
        if samples_left * remaining[size - 1] / nsubsets < 1.0 - 1e-8:
            break
        num_full_subsets += 1
        samples_left -= int(nsubsets)
        if remaining[size - 1] < 1.0:
            remaining /= 1 - remaining[size - 1]
        w = weight_vector[size - 1] / binom(d, size)
        if paired:
            w /= 2.0
        for inds in itertools.combinations(range(d), size):
            mask = np.zeros(d, dtype=bool)
            mask[list(inds)] = True
            masks.append(mask)
            weights.append(w)
            if paired:
                masks.append(~mask)
                weights.append(w)
    logger.debug(f"联盟分配: d={d}, 完整枚举的大小层数={num_full_subsets}, 剩余预算={samples_left}")

    n_fixed = len(masks)
    if num_full_subsets != num_subset_sizes and samples_left > 0:
        sample_weights = weight_vector.copy()
        # 每次抽样成对加入补集
        sample_weights[:num_paired_subset_sizes] /= 2
        sample_weights = sample_weights[num_full_subsets:]
        sample_weights /= np.sum(sample_weights)
        size_draws = rng.choice(len(sample_weights), 4 * samples_left, p=sample_weights)
        used: Dict[bytes, int] = {}
        for draw in size_draws:
            if samples_left <= 0:
                break
            size = int(draw) + num_full_subsets + 1
            mask = np.zeros(d, dtype=bool)
            mask[rng.permutation(d)[:size]] = True
            key = mask.tobytes()
            new_sample = key not in used
            if new_sample:
                used[key] = len(masks)
                masks.append(mask)
                weights.append(1.0)
                samples_left -= 1
            else:
                weights[used[key]] += 1.0
            if samples_left > 0 and size <= num_paired_subset_sizes:
                if new_sample:
                    masks.append(~mask)
                    weights.append(1.0)
                    samples_left -= 1
                else:
                    weights[used[key] + 1] += 1.0
        weight_left = float(np.sum(weight_vector[num_full_subsets:]))
        sampled = np.asarray(weights[n_fixed:], dtype=np.float64)
        weights[n_fixed:] = list(sampled * (weight_left / sampled.sum()))

    return CoalitionPlan(masks=np.vstack(masks), weights=np.asarray(weights, dtype=np.float64),
                         enumerated=False)


def solve_constrained(masks: np.ndarray, weights: np.ndarray, ey: np.ndarray,
                      total: float) -> np.ndarray:
    """
    带效率约束的加权最小二乘：消去最后一个变量使系数之和恰为 total

    Args:
        masks: (n, d) 联盟矩阵
        weights: (n,) 核权重
        ey: (n,) 联盟价值减去空联盟价值
        total: f(x) - 空联盟价值

    Returns:
        (d,) 归因向量
    """
    masks = np.asarray(masks, dtype=np.float64)
    d = masks.shape[1]
    y = ey - masks[:, -1] * total
    X = masks[:, :-1] - masks[:, [-1]]
    sqrt_w = np.sqrt(weights)
    coef, _, rank, _ = np.linalg.lstsq(sqrt_w[:, None] * X, sqrt_w * y, rcond=None)
    if rank < d - 1:
        raise EstimationError(f"联盟设计矩阵秩亏: 秩 {rank} < {d - 1}, 请增大联盟预算")
    return np.append(coef, total - math.fsum(coef))


def kernel_shap_result(model: PipelineModel, x: RawRow, bg: BackgroundSet, n_coalitions: int,
                       explainer_seed: int, fold: int = 0, instance: int = 0,
                       instance_id: str = "x") -> ShapleyResult:
    """KernelSHAP估计，返回带元数据的结果"""
    explainer_seed = require_seed(explainer_seed, "explainer_seed")
    d = model.d
    if n_coalitions < d + 2:
        raise InputValidationError(f"联盟预算 {n_coalitions} 小于 d+2 = {d + 2}")
    values = CoalitionValues(model, x, bg)
    if 2 ** d - 2 <= n_coalitions:
        plan = enumerate_coalitions(d)
    else:
        rng = derive_stream(explainer_seed, CHANNEL_COALITIONS, fold, instance)
        plan = sample_coalitions(d, n_coalitions, rng)
    v = values.evaluate(plan.masks)
    phi = solve_constrained(plan.masks, plan.weights, v - values.base_value,
                            values.prediction - values.base_value)
    return _make_result(values, phi, explainer_seed, instance_id, plan.n_coalitions,
                        plan.enumerated, ExplainerKind.KERNEL, KERNEL_EFFICIENCY_TOLERANCE)


def kernel_shap(model: PipelineModel, x: RawRow, bg: BackgroundSet, n_coalitions: int,
                explainer_seed: int) -> ExplanationVector:
    """
    KernelSHAP：Shapley核加权最小二乘，截距与效率约束精确成立

    Args:
        model: 流水线模型
        x: 被解释实例
        bg: 背景集
        n_coalitions: 联盟预算（>= d+2；不少于 2^d-2 时改为完整枚举）
        explainer_seed: 解释器种子

    Returns:
        ExplanationVector
    """
    return kernel_shap_result(model, x, bg, n_coalitions, explainer_seed).explanation


def explain(model: PipelineModel, x: RawRow, bg: BackgroundSet, kind: Union[ExplainerKind, str],
            explainer_seed: int, n_coalitions: Optional[int] = None, fold: int = 0,
            instance: int = 0, instance_id: str = "x") -> ShapleyResult:
    """
    按解释器类别计算一次解释

    Args:
        model: 流水线模型
        x: 被解释实例
        bg: 背景集
        kind: exact 或 kernel
        explainer_seed: 解释器种子
        n_coalitions: 联盟预算（缺省为默认预算）
        fold: 折编号（联盟子流位置键）
        instance: 实例编号（联盟子流位置键）
        instance_id: 实例标识

    Returns:
        ShapleyResult
    """
    kind = ExplainerKind(kind)
    if kind == ExplainerKind.EXACT:
        return exact_shapley_result(model, x, bg, instance_id=instance_id,
                                    explainer_seed=explainer_seed)
    # d 很小时默认预算低于 d+2，此时完整枚举已覆盖全部联盟
    budget = (max(default_coalition_budget(model.d), model.d + 2)
              if n_coalitions is None else n_coalitions)
    return kernel_shap_result(model, x, bg, budget, explainer_seed, fold=fold,
                              instance=instance, instance_id=instance_id)
