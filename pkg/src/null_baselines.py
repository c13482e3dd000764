#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
随机零模型基线模块

- Dirichlet零模型：ℓ2 距离平方期望的闭式解，以及用Gamma归一化抽样的蒙特卡洛验证
- Mallows零模型：重复插入法精确抽样，估计 top-k Jaccard 与 RBO 的基线
- 基线带：在一组超参数上取基线的 [最小, 最大] 包络

蒙特卡洛循环按固定大小分区，每个分区使用独立子流，并按分区顺序归约。
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, model_validator

from attribution_types import EstimationError, InputValidationError
from disagreement_metrics import DEFAULT_TOP_K, MetricKind, default_rbo_p
from seed_streams import (
    CHANNEL_DIRICHLET,
    CHANNEL_MALLOWS,
    DEFAULT_PARTITION_SIZE,
    derive_stream,
    partition_sizes,
    require_seed,
)

logger = logging.getLogger(__name__)

DEFAULT_MALLOWS_SAMPLES = 20_000
DEFAULT_RHO_SWEEP = (0.6, 0.7, 0.8)
DEFAULT_KAPPA_SWEEP = tuple(range(5, 16))
DEFAULT_Q_SWEEP = (0.3, 0.4, 0.5)


class DirichletNullConfig(BaseModel):
    """Dirichlet零模型：总质量T中比例ρ分配给前k个特征，浓度κ"""
    model_config = ConfigDict(frozen=True)

    d: int = Field(ge=2)
    k: int = Field(ge=1)
    T: float = Field(gt=0)
    rho: float = Field(ge=0, le=1)
    kappa: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_k(self) -> "DirichletNullConfig":
        if self.k >= self.d:
            raise ValueError(f"需要 1 <= k < d, 实际 k={self.k}, d={self.d}")
        return self

    def mean_shares(self) -> np.ndarray:
        """期望份额 m：前k个为 ρ/k，其余为 (1-ρ)/(d-k)"""
        m = np.empty(self.d, dtype=np.float64)
        m[:self.k] = self.rho / self.k
        m[self.k:] = (1.0 - self.rho) / (self.d - self.k)
        return m

    def alphas(self) -> np.ndarray:
        return self.kappa * self.mean_shares()

    def label(self) -> Dict[str, Any]:
        return {"d": self.d, "k": self.k, "T": self.T, "rho": self.rho, "kappa": self.kappa}


class MallowsNullConfig(BaseModel):
    """以单位排列为中心的Mallows零模型"""
    model_config = ConfigDict(frozen=True)

    d: int = Field(ge=2)
    q: float = Field(ge=0, lt=1)
    k: int = Field(default=DEFAULT_TOP_K, ge=1)
    p: Optional[float] = Field(default=None, gt=0, lt=1)
    n_samples: int = Field(default=DEFAULT_MALLOWS_SAMPLES, ge=1)

    @model_validator(mode="after")
    def _check_k(self) -> "MallowsNullConfig":
        if self.k > self.d:
            raise ValueError(f"需要 k <= d, 实际 k={self.k}, d={self.d}")
        return self

    @property
    def rbo_p(self) -> float:
        return default_rbo_p(self.d) if self.p is None else self.p

    def label(self) -> Dict[str, Any]:
        return {"d": self.d, "q": self.q, "k": self.k, "p": self.rbo_p, "n_samples": self.n_samples}


@dataclass(frozen=True)
class MonteCarloEstimate:
    """蒙特卡洛估计：均值、标准误与样本数"""
    mean: float
    std_error: float
    n: int

    def __float__(self) -> float:
        return self.mean

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean, "std_error": self.std_error, "n": self.n}


def _summarize(values: np.ndarray) -> MonteCarloEstimate:
    n = int(values.shape[0])
    mean = math.fsum(values) / n
    std_error = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return MonteCarloEstimate(mean=mean, std_error=std_error, n=n)


def _run_partitions(worker, seed: int, channel: int, n_samples: int, n_jobs: int,
                    *args) -> np.ndarray:
    """按固定分区执行蒙特卡洛，并按分区顺序拼接结果"""
    sizes = partition_sizes(n_samples, DEFAULT_PARTITION_SIZE)
    if n_jobs == 1 or len(sizes) == 1:
        parts = [worker(derive_stream(seed, channel, i), size, *args)
                 for i, size in enumerate(sizes)]
    else:
        parts = Parallel(n_jobs=n_jobs)(
            delayed(worker)(derive_stream(seed, channel, i), size, *args)
            for i, size in enumerate(sizes)
        )
    return np.concatenate(parts)


# Dirichlet零模型
def dirichlet_l2_expectation(cfg: DirichletNullConfig) -> float:
    """
    i.i.d. 抽取 X, Y 时 E‖X-Y‖² 的闭式解 (2T²/(κ+1))(1 - ρ²/k - (1-ρ)²/(d-k))

    Args:
        cfg: Dirichlet零模型配置

    Returns:
        ℓ2 距离平方的期望
    """
    if cfg.k >= cfg.d:
        raise InputValidationError(f"闭式解要求 k < d: k={cfg.k}, d={cfg.d}")
    concentration = 1.0 - cfg.rho ** 2 / cfg.k - (1.0 - cfg.rho) ** 2 / (cfg.d - cfg.k)
    return 2.0 * cfg.T ** 2 / (cfg.kappa + 1.0) * concentration


def dirichlet_l2_rms(cfg: DirichletNullConfig) -> float:
    """两两距离的均方根 sqrt(E‖X-Y‖²)"""
    return math.sqrt(max(0.0, dirichlet_l2_expectation(cfg)))


def sample_dirichlet(alpha: Sequence[float], n: int, rng: np.random.Generator) -> np.ndarray:
    """
    用独立Gamma变量归一化抽取Dirichlet样本

    Args:
        alpha: 浓度参数（全部 > 0）
        n: 样本数
        rng: 随机流

    Returns:
        (n, d) 每行位于单纯形上
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(~(alpha > 0)):
        raise InputValidationError(f"Dirichlet参数必须全部 > 0: {alpha}")
    gammas = rng.standard_gamma(alpha, size=(n, alpha.shape[0]))
    return gammas / gammas.sum(axis=1, keepdims=True)


def _dirichlet_partition(rng: np.random.Generator, n: int, alpha: np.ndarray,
                         total: float) -> np.ndarray:
    X = total * sample_dirichlet(alpha, n, rng)
    Y = total * sample_dirichlet(alpha, n, rng)
    return np.sum((X - Y) ** 2, axis=1)


def dirichlet_l2_monte_carlo(cfg: DirichletNullConfig, n_samples: int, seed: int,
                             n_jobs: int = 1) -> MonteCarloEstimate:
    """
    闭式解的蒙特卡洛验证：X = T·M，M ~ Dirichlet(κ·m)

    Args:
        cfg: Dirichlet零模型配置
        n_samples: 样本对数
        seed: 根种子
        n_jobs: 并行分区数（不影响结果）

    Returns:
        E‖X-Y‖² 的蒙特卡洛估计
    """
    seed = require_seed(seed)
    alpha = cfg.alphas()
    if np.any(~(alpha > 0)):
        raise EstimationError(f"Dirichlet参数存在非正值 (ρ={cfg.rho}), 无法抽样")
    values = _run_partitions(_dirichlet_partition, seed, CHANNEL_DIRICHLET, n_samples, n_jobs,
                             alpha, cfg.T)
    return _summarize(values)


# Mallows零模型
def mallows_normalizer(d: int, q: float) -> float:
    """闭式归一化常数 Z_d(q) = Π_{i=1..d} (1 - q^i)/(1 - q)"""
    return math.prod(sum(q ** s for s in range(i)) for i in range(1, d + 1))


def inversions(order: Sequence[int]) -> int:
    """相对单位排列的逆序数"""
    seq = np.asarray(order)
    return int(np.sum(np.triu(seq[:, None] > seq[None, :], k=1)))


def mallows_distribution_exact(d: int, q: float) -> Dict[Tuple[int, ...], float]:
    """
    枚举全部 d! 个排列得到 Mallows(e, q) 的精确分布（归一化常数为显式求和）

    Args:
        d: 排列长度
        q: 离散参数

    Returns:
        排列 -> 概率
    """
    _check_q(q)
    weights = {perm: q ** inversions(perm) for perm in itertools.permutations(range(d))}
    Z = math.fsum(weights.values())
    return {perm: w / Z for perm, w in weights.items()}


def _check_q(q: float) -> None:
    if not 0.0 <= q < 1.0:
        raise InputValidationError(f"Mallows离散参数 q 必须位于 [0, 1): {q}")


def sample_mallows(d: int, q: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    重复插入法：第j个元素以概率 q^r / Σ_{s<=j} q^s 插入到距末尾r的位置

    Args:
        d: 排列长度
        q: 离散参数，0 <= q < 1
        n: 样本数
        rng: 随机流

    Returns:
        (n, d) 每行一个排列
    """
    _check_q(q)
    perms = np.zeros((n, 1), dtype=np.int64)
    for j in range(1, d):
        weights = q ** np.arange(j + 1, dtype=np.float64)
        cdf = np.cumsum(weights / weights.sum())
        displacement = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), j)
        position = j - displacement
        grown = np.empty((n, j + 1), dtype=np.int64)
        for c in range(j + 1):
            before = perms[:, c] if c < j else perms[:, j - 1]
            after = perms[:, c - 1] if c > 0 else perms[:, 0]
            grown[:, c] = np.where(c < position, before, np.where(c == position, j, after))
        perms = grown
    return perms


def mallows_sample(d: int, q: float, seed: int) -> Tuple[int, ...]:
    """抽取单个 Mallows(e, q) 排列"""
    rng = derive_stream(require_seed(seed), CHANNEL_MALLOWS)
    return tuple(int(i) for i in sample_mallows(d, q, 1, rng)[0])


def jaccard_rows(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    """逐行 top-k Jaccard 距离"""
    n, d = a.shape
    rows = np.arange(n)[:, None]
    in_a = np.zeros((n, d), dtype=bool)
    in_b = np.zeros((n, d), dtype=bool)
    in_a[rows, a[:, :k]] = True
    in_b[rows, b[:, :k]] = True
    inter = np.sum(in_a & in_b, axis=1)
    return 1.0 - inter / (2 * k - inter)


def rbo_rows(a: np.ndarray, b: np.ndarray, p: float) -> np.ndarray:
    """逐行外推RBO敏感度"""
    n, d = a.shape
    rows = np.arange(n)[:, None]
    pos_a = np.empty((n, d), dtype=np.int64)
    pos_b = np.empty((n, d), dtype=np.int64)
    pos_a[rows, a] = np.arange(d)
    pos_b[rows, b] = np.arange(d)
    # 特征在深度ℓ同时出现在两个前缀中，当且仅当两个名次都 < ℓ
    deepest = np.maximum(pos_a, pos_b)
    depths = np.arange(1, d + 1)
    agreements = np.stack([np.sum(deepest < l, axis=1) / l for l in depths], axis=1)
    similarity = (1.0 - p) * (agreements @ (p ** np.arange(d))) + p ** d * agreements[:, -1]
    sensitivity = np.clip(1.0 - similarity, 0.0, 1.0)
    sensitivity[np.all(a == b, axis=1)] = 0.0
    return sensitivity


def _mallows_partition(rng: np.random.Generator, n: int, cfg: MallowsNullConfig,
                       functional: MetricKind, center: Optional[np.ndarray]) -> np.ndarray:
    first = sample_mallows(cfg.d, cfg.q, n, rng)
    second = sample_mallows(cfg.d, cfg.q, n, rng)
    if center is not None:
        first, second = center[first], center[second]
    if functional == MetricKind.JACCARD_TOPK:
        return jaccard_rows(first, second, cfg.k)
    return rbo_rows(first, second, cfg.rbo_p)


def mallows_baseline(cfg: MallowsNullConfig, functional: Union[MetricKind, str], seed: int,
                     center: Optional[Sequence[int]] = None, n_jobs: int = 1) -> MonteCarloEstimate:
    """
    Mallows零模型下排序度量的期望：对N对 i.i.d. 排列取平均

    Args:
        cfg: Mallows零模型配置
        functional: jaccard_topk 或 rbo
        seed: 根种子
        center: 共享中心排列（缺省为单位排列；度量对中心不变）
        n_jobs: 并行分区数（不影响结果）

    Returns:
        MonteCarloEstimate
    """
    seed = require_seed(seed)
    functional = MetricKind(functional)
    if functional not in (MetricKind.JACCARD_TOPK, MetricKind.RBO):
        raise InputValidationError(f"Mallows基线只支持 jaccard_topk / rbo: {functional.value}")
    center_arr = None
    if center is not None:
        center_arr = np.asarray(center, dtype=np.int64)
        if sorted(center_arr.tolist()) != list(range(cfg.d)):
            raise InputValidationError(f"中心不是 0..{cfg.d - 1} 的排列: {center}")
    values = _run_partitions(_mallows_partition, seed, CHANNEL_MALLOWS, cfg.n_samples, n_jobs,
                             cfg, functional, center_arr)
    return _summarize(values)


# 基线带
@dataclass(frozen=True)
class BaselineBand:
    """零模型期望在参数扫描上的 [最小, 最大] 包络"""
    metric_kind: MetricKind
    lower: float
    upper: float
    points: List[Dict[str, Any]] = field(default_factory=list)
    lower_squared: Optional[float] = None
    upper_squared: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.lower > self.upper:
            raise InputValidationError(f"基线带下界 {self.lower} 大于上界 {self.upper}")

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "metric": self.metric_kind.value,
            "lower": self.lower,
            "upper": self.upper,
            "seed": self.seed,
            "points": [dict(p) for p in self.points],
        }
        if self.metric_kind == MetricKind.L2:
            data["value_kind"] = "rms"
            data["lower_squared"] = self.lower_squared
            data["upper_squared"] = self.upper_squared
        return data


def default_l2_sweep(d: int, k: int, T: float, rhos: Iterable[float] = DEFAULT_RHO_SWEEP,
                     kappas: Iterable[float] = DEFAULT_KAPPA_SWEEP) -> List[DirichletNullConfig]:
    """ℓ2 基线的默认扫描 ρ × κ"""
    return [DirichletNullConfig(d=d, k=k, T=T, rho=rho, kappa=kappa)
            for rho in rhos for kappa in kappas]


def default_rank_sweep(d: int, qs: Iterable[float] = DEFAULT_Q_SWEEP, k: int = DEFAULT_TOP_K,
                       p: Optional[float] = None,
                       n_samples: int = DEFAULT_MALLOWS_SAMPLES) -> List[MallowsNullConfig]:
    """排序基线的默认扫描 q"""
    return [MallowsNullConfig(d=d, q=q, k=k, p=p, n_samples=n_samples) for q in qs]


def baseline_band(metric_kind: Union[MetricKind, str],
                  sweep: Sequence[Union[DirichletNullConfig, MallowsNullConfig]],
                  seed: Optional[int] = None, n_jobs: int = 1) -> BaselineBand:
    """
    在参数扫描的每个点上计算基线并取包络

    Args:
        metric_kind: l2 / jaccard_topk / rbo
        sweep: 扫描配置（l2 用 DirichletNullConfig，其余用 MallowsNullConfig）
        seed: 蒙特卡洛种子（排序基线必需，每个扫描点使用同一种子）
        n_jobs: 并行分区数

    Returns:
        BaselineBand，附每个扫描点的取值
    """
    metric_kind = MetricKind(metric_kind)
    if not sweep:
        raise InputValidationError("基线扫描为空")
    points: List[Dict[str, Any]] = []
    if metric_kind == MetricKind.L2:
        for cfg in sweep:
            if not isinstance(cfg, DirichletNullConfig):
                raise InputValidationError("ℓ2 基线扫描需要 DirichletNullConfig")
            squared = dirichlet_l2_expectation(cfg)
            points.append({**cfg.label(), "value": math.sqrt(max(0.0, squared)),
                           "value_squared": squared})
        squares = [p["value_squared"] for p in points]
        band = BaselineBand(metric_kind, min(p["value"] for p in points),
                            max(p["value"] for p in points), points,
                            lower_squared=min(squares), upper_squared=max(squares), seed=seed)
    elif metric_kind in (MetricKind.JACCARD_TOPK, MetricKind.RBO):
        seed = require_seed(seed, "baseline_seed")
        for cfg in sweep:
            if not isinstance(cfg, MallowsNullConfig):
                raise InputValidationError(f"{metric_kind.value} 基线扫描需要 MallowsNullConfig")
            estimate = mallows_baseline(cfg, metric_kind, seed, n_jobs=n_jobs)
            points.append({**cfg.label(), "value": estimate.mean,
                           "std_error": estimate.std_error})
        band = BaselineBand(metric_kind, min(p["value"] for p in points),
                            max(p["value"] for p in points), points, seed=seed)
    else:
        raise InputValidationError(f"没有 {metric_kind.value} 的零模型基线")
    logger.info(f"{metric_kind.value} 基线带: [{band.lower:.6f}, {band.upper:.6f}] "
                f"({len(points)} 个扫描点)")
    return band
