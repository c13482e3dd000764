#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
解释分歧度量模块

两两解释之间的分歧：ℓ2距离、top-k Jaccard距离、RBO敏感度（1 - RBO）、
Kendall-Tau逆序数，以及逐特征的平均两两绝对差（脆弱性图的基础）。
所有聚合在排序后进行，结果与运行顺序无关。
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from attribution_types import (
    ExplanationVector,
    InputValidationError,
    Ranking,
    RankingLike,
    as_ranking,
    explanation_matrix,
)

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 3


class MetricKind(str, Enum):
    """两两分歧度量类别"""
    L2 = "l2"
    JACCARD_TOPK = "jaccard_topk"
    RBO = "rbo"
    KENDALL_TAU = "kendall_tau"


@dataclass(frozen=True)
class PairwiseDisagreement:
    """一对解释之间的单个度量值"""
    metric_kind: MetricKind
    value: float
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"metric": self.metric_kind.value, "value": self.value, "params": dict(self.params)}


def _check_same_length(a: Ranking, b: Ranking) -> None:
    if a.d != b.d:
        raise InputValidationError(f"两个排序的长度不一致: {a.d} != {b.d}")


def default_rbo_p(d: int) -> float:
    """RBO默认持续参数 p = 1 - 1/d"""
    return 1.0 - 1.0 / d


def l2_distance(a: ExplanationVector, b: ExplanationVector) -> float:
    """
    解释向量间的欧氏距离

    Args:
        a: 解释向量
        b: 解释向量（与a同一特征模式）

    Returns:
        ‖a - b‖₂
    """
    if not a.same_schema(b):
        raise InputValidationError("解释向量的特征模式不一致, 无法计算ℓ2距离")
    return float(np.linalg.norm(a.values - b.values))


def topk_jaccard(a: RankingLike, b: RankingLike, k: int = DEFAULT_TOP_K) -> float:
    """
    top-k 集合的Jaccard距离

    Args:
        a: 排序（或可转换为排序的归因）
        b: 排序
        k: 深度，1 <= k <= d

    Returns:
        1 - |交集| / |并集|
    """
    a, b = as_ranking(a), as_ranking(b)
    _check_same_length(a, b)
    if isinstance(k, bool) or not 1 <= k <= a.d:
        raise InputValidationError(f"k 必须位于 [1, {a.d}]: {k}")
    top_a, top_b = a.top_k(k), b.top_k(k)
    return 1.0 - len(top_a & top_b) / len(top_a | top_b)


def prefix_agreements(a: Ranking, b: Ranking) -> np.ndarray:
    """各深度的前缀重合比例 A_ℓ = |前缀交集| / ℓ，ℓ = 1..d"""
    seen_a, seen_b = set(), set()
    overlap = 0
    agreements = np.empty(a.d, dtype=np.float64)
    for depth, (x, y) in enumerate(zip(a.order, b.order), start=1):
        if x == y:
            overlap += 1
        else:
            overlap += (x in seen_b) + (y in seen_a)
            seen_a.add(x)
            seen_b.add(y)
        agreements[depth - 1] = overlap / depth
    return agreements


def rbo_sensitivity(a: RankingLike, b: RankingLike, p: Optional[float] = None) -> float:
    """
    外推形式的RBO敏感度 1 - [(1-p) Σ p^(ℓ-1) A_ℓ + p^d A_d]，计算到完整深度d

    Args:
        a: 排序
        b: 排序
        p: 持续参数，0 < p < 1（缺省为 1 - 1/d）

    Returns:
        [0, 1] 内的敏感度，相同排序为0
    """
    a, b = as_ranking(a), as_ranking(b)
    _check_same_length(a, b)
    d = a.d
    p = default_rbo_p(d) if p is None else float(p)
    if not 0.0 < p < 1.0:
        raise InputValidationError(f"RBO参数 p 必须位于 (0, 1): {p}")
    if a.order == b.order:
        return 0.0
    agreements = prefix_agreements(a, b)
    powers = p ** np.arange(d)
    similarity = (1.0 - p) * math.fsum(powers * agreements) + p ** d * agreements[-1]
    return float(min(1.0, max(0.0, 1.0 - similarity)))


def kendall_tau(a: RankingLike, b: RankingLike) -> int:
    """
    两个排列之间的逆序对数

    Args:
        a: 排序
        b: 排序

    Returns:
        不一致对的数量，位于 [0, d(d-1)/2]
    """
    a, b = as_ranking(a), as_ranking(b)
    _check_same_length(a, b)
    seq = b.positions()[list(a.order)]
    return int(np.sum(np.triu(seq[:, None] > seq[None, :], k=1)))


def metric_value(metric: Union[MetricKind, str], a: ExplanationVector, b: ExplanationVector,
                 k: int = DEFAULT_TOP_K, p: Optional[float] = None) -> float:
    """按度量类别计算一对解释的分歧"""
    metric = MetricKind(metric)
    if metric == MetricKind.L2:
        return l2_distance(a, b)
    if not a.same_schema(b):
        raise InputValidationError("解释向量的特征模式不一致")
    if metric == MetricKind.JACCARD_TOPK:
        return topk_jaccard(a, b, k)
    if metric == MetricKind.RBO:
        return rbo_sensitivity(a, b, p)
    return float(kendall_tau(a, b))


def metric_params(metric: Union[MetricKind, str], d: int, k: int = DEFAULT_TOP_K,
                  p: Optional[float] = None) -> Dict[str, Any]:
    """度量参数（写入报告）"""
    metric = MetricKind(metric)
    if metric == MetricKind.JACCARD_TOPK:
        return {"k": k}
    if metric == MetricKind.RBO:
        return {"p": default_rbo_p(d) if p is None else float(p)}
    return {}


@dataclass(frozen=True, eq=False)
class FeatureSensitivityProfile:
    """逐特征敏感度：平均两两绝对差与平均 |φ|"""
    feature_names: Tuple[str, ...]
    sensitivity: np.ndarray
    mean_abs: np.ndarray
    n_runs: int

    @property
    def d(self) -> int:
        return len(self.feature_names)

    def most_unstable(self, n: int = 5) -> List[Dict[str, Any]]:
        """敏感度最大的n个特征（相等时按特征下标）"""
        order = np.lexsort((np.arange(self.d), -self.sensitivity))[:n]
        return [
            {"feature": self.feature_names[i], "sensitivity": float(self.sensitivity[i]),
             "mean_abs_phi": float(self.mean_abs[i])}
            for i in order
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_runs": self.n_runs,
            "features": list(self.feature_names),
            "sensitivity": [float(v) for v in self.sensitivity],
            "mean_abs_phi": [float(v) for v in self.mean_abs],
        }


def _require_runs(runs: Sequence[ExplanationVector]) -> None:
    if len(runs) < 2:
        raise InputValidationError(f"至少需要2次运行, 实际为 {len(runs)}")


def feature_sensitivity(runs: Sequence[ExplanationVector]) -> FeatureSensitivityProfile:
    """
    逐特征平均两两距离 S[m] = (1/(N(N-1))) Σ_{i≠j} |φ_i[m] - φ_j[m]|

    Args:
        runs: 同一实例的N次解释（N >= 2）

    Returns:
        FeatureSensitivityProfile
    """
    _require_runs(runs)
    matrix = explanation_matrix(runs)
    n = matrix.shape[0]
    upper_i, upper_j = np.triu_indices(n, k=1)
    sensitivity = np.empty(matrix.shape[1], dtype=np.float64)
    mean_abs = np.empty(matrix.shape[1], dtype=np.float64)
    for m in range(matrix.shape[1]):
        column = np.sort(matrix[:, m])
        diffs = np.abs(column[upper_j] - column[upper_i])
        sensitivity[m] = 2.0 * math.fsum(diffs) / (n * (n - 1))
        mean_abs[m] = math.fsum(np.abs(column)) / n
    sensitivity.setflags(write=False)
    mean_abs.setflags(write=False)
    return FeatureSensitivityProfile(tuple(runs[0].feature_names), sensitivity, mean_abs, n)


def pairwise_values(runs: Sequence[ExplanationVector], metric: Union[MetricKind, str],
                    k: int = DEFAULT_TOP_K, p: Optional[float] = None) -> List[Tuple[int, int, float]]:
    """
    全部无序对的度量值

    Returns:
        按 (i, j) 升序的 (i, j, value) 列表，i < j
    """
    _require_runs(runs)
    explanation_matrix(runs)
    return [(i, j, metric_value(metric, runs[i], runs[j], k, p))
            for i in range(len(runs)) for j in range(i + 1, len(runs))]


@dataclass(frozen=True)
class PairwiseSummary:
    """一种度量在全部无序对上的分布摘要"""
    metric_kind: MetricKind
    params: Dict[str, Any]
    mean: float
    median: float
    values: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metric": self.metric_kind.value,
            "params": dict(self.params),
            "mean": self.mean,
            "median": self.median,
            "n_pairs": len(self.values),
            "values": list(self.values),
        }


def summarize_values(metric: Union[MetricKind, str], values: Sequence[float],
                     params: Optional[Dict[str, Any]] = None) -> PairwiseSummary:
    """对一组度量值做与顺序无关的汇总（排序后求和）"""
    if not values:
        raise InputValidationError("没有可汇总的度量值")
    ordered = tuple(sorted(float(v) for v in values))
    return PairwiseSummary(
        metric_kind=MetricKind(metric),
        params=dict(params or {}),
        mean=math.fsum(ordered) / len(ordered),
        median=float(np.median(ordered)),
        values=ordered,
    )


def pairwise_aggregate(runs: Sequence[ExplanationVector], metric: Union[MetricKind, str],
                       k: int = DEFAULT_TOP_K, p: Optional[float] = None) -> PairwiseSummary:
    """
    两两分歧的汇总

    Args:
        runs: 同一实例的N次解释（N >= 2）
        metric: 度量类别
        k: Jaccard深度
        p: RBO参数

    Returns:
        PairwiseSummary（均值、中位数、全部 N(N-1)/2 个值）
    """
    values = [value for _, _, value in pairwise_values(runs, metric, k, p)]
    return summarize_values(metric, values, metric_params(metric, runs[0].d, k, p))
