#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
解释多重性审计协议模块

按双种子协议 (s_m, s_e) 重复运行"训练-解释"流水线：
- overall：两个种子同时变化
- model_induced：只变化模型种子
- explainer_induced：只变化解释器种子
对每个测试实例计算两两分歧、按置信度与预测结果分层，并附上零模型基线带。
工作单元彼此独立，可并行执行，最终按 (fold, run, instance) 顺序确定性合并。
"""

import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, model_validator

from attribution_types import (
    CampaignError,
    ExplainerKind,
    ExplanationQuery,
    ExplanationVector,
    InputValidationError,
    ModelClass,
    MultiplicityError,
    MultiplicitySetting,
    SeedPair,
)
from disagreement_metrics import (
    DEFAULT_TOP_K,
    FeatureSensitivityProfile,
    MetricKind,
    PairwiseSummary,
    feature_sensitivity,
    metric_params,
    pairwise_values,
    summarize_values,
)
from null_baselines import (
    DEFAULT_KAPPA_SWEEP,
    DEFAULT_MALLOWS_SAMPLES,
    DEFAULT_Q_SWEEP,
    DEFAULT_RHO_SWEEP,
    BaselineBand,
    baseline_band,
    default_l2_sweep,
    default_rank_sweep,
)
from pipeline_models import DEFAULT_GRIDS, PipelineModel, grid_search, roc_auc, train
from seed_streams import CHANNEL_INSTANCES, derive_stream, distinct
from settings import TOOL_NAME, TOOL_VERSION, load_yaml_config, resolve_relative
from shap_explainer import (
    MAX_EXACT_FEATURES,
    ShapleyResult,
    default_coalition_budget,
    explain,
    sample_background,
)
from tabular_data import Dataset, DatasetSchema, FoldPlan, load_csv, stratified_folds

logger = logging.getLogger(__name__)

DEFAULT_RUNS = 10
DEFAULT_FOLDS = 5
DEFAULT_BACKGROUND_SIZE = 100

# 置信度分层边界
CERTAIN_HIGH = 0.9
CERTAIN_LOW = 0.1
UNCERTAIN_LOW = 0.4
UNCERTAIN_HIGH = 0.6

OUTCOME_THRESHOLD = 0.5


class ConfidenceStratum(str, Enum):
    """置信度分层"""
    CERTAIN = "certain"
    UNCERTAIN = "uncertain"
    OTHER = "other"


class PredictionOutcome(str, Enum):
    """阈值0.5下的预测结果子组"""
    TP = "TP"
    TN = "TN"
    FP = "FP"
    FN = "FN"


def classify_confidence(probability: float) -> ConfidenceStratum:
    """
    按预测概率划分置信度层

    Args:
        probability: 正类概率

    Returns:
        certain (P > 0.9 或 P < 0.1) / uncertain (0.4 <= P <= 0.6) / other
    """
    if probability > CERTAIN_HIGH or probability < CERTAIN_LOW:
        return ConfidenceStratum.CERTAIN
    if UNCERTAIN_LOW <= probability <= UNCERTAIN_HIGH:
        return ConfidenceStratum.UNCERTAIN
    return ConfidenceStratum.OTHER


def classify_outcome(probability: float, label: int) -> PredictionOutcome:
    predicted = probability >= OUTCOME_THRESHOLD
    if predicted:
        return PredictionOutcome.TP if label == 1 else PredictionOutcome.FP
    return PredictionOutcome.FN if label == 1 else PredictionOutcome.TN


# 配置模型
class DatasetSource(BaseModel):
    """数据来源：CSV文件 + 模式文件"""
    model_config = ConfigDict(frozen=True)

    csv: str
    schema_file: str

    def resolved(self, base_dir: Path) -> "DatasetSource":
        return DatasetSource(csv=resolve_relative(self.csv, base_dir),
                             schema_file=resolve_relative(self.schema_file, base_dir))


class ExplainerSettings(BaseModel):
    """解释器设置"""
    model_config = ConfigDict(frozen=True)

    kind: ExplainerKind = ExplainerKind.KERNEL
    background_size: int = Field(default=DEFAULT_BACKGROUND_SIZE, ge=1)
    n_coalitions: Optional[int] = Field(default=None, ge=4)

    def budget(self, d: int) -> int:
        if self.n_coalitions is not None:
            return self.n_coalitions
        return max(default_coalition_budget(d), d + 2)


class MetricSettings(BaseModel):
    """分歧度量设置"""
    model_config = ConfigDict(frozen=True)

    metrics: List[MetricKind] = Field(default_factory=lambda: list(MetricKind), min_length=1)
    top_k: int = Field(default=DEFAULT_TOP_K, ge=1)
    rbo_p: Optional[float] = Field(default=None, gt=0, lt=1)


class TrainingSettings(BaseModel):
    """训练与超参数搜索设置"""
    model_config = ConfigDict(frozen=True)

    hyperparams: Dict[str, Any] = Field(default_factory=dict)
    tune: bool = True
    grid: Optional[List[Dict[str, Any]]] = None

    def candidate_grid(self, model_class: ModelClass) -> List[Dict[str, Any]]:
        grid = self.grid if self.grid is not None else DEFAULT_GRIDS[model_class]
        return [{**self.hyperparams, **config} for config in grid]


class BaselineSettings(BaseModel):
    """零模型基线设置"""
    model_config = ConfigDict(frozen=True)

    enabled: bool = True
    seed: Optional[NonNegativeInt] = None
    total_mass: Optional[float] = Field(default=None, gt=0)
    rhos: List[float] = Field(default_factory=lambda: list(DEFAULT_RHO_SWEEP), min_length=1)
    kappas: List[float] = Field(default_factory=lambda: list(DEFAULT_KAPPA_SWEEP), min_length=1)
    qs: List[float] = Field(default_factory=lambda: list(DEFAULT_Q_SWEEP), min_length=1)
    n_samples: int = Field(default=DEFAULT_MALLOWS_SAMPLES, ge=1)

    @model_validator(mode="after")
    def _check_seed(self) -> "BaselineSettings":
        if self.enabled and self.seed is None:
            raise ValueError("启用基线时必须显式提供 baseline.seed")
        return self


class AuditCampaign(BaseModel):
    """一次审计活动：固定数据集、模型类别与解释器族，按设置变化种子"""
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    dataset: DatasetSource
    dataset_id: Optional[str] = None
    model_class: ModelClass
    setting: MultiplicitySetting
    n_runs: int = Field(default=DEFAULT_RUNS, ge=2)
    model_seeds: List[NonNegativeInt] = Field(min_length=1)
    explainer_seeds: List[NonNegativeInt] = Field(min_length=1)
    fold_seed: NonNegativeInt
    n_folds: int = Field(default=DEFAULT_FOLDS, ge=2)
    folds: Optional[List[NonNegativeInt]] = None
    instances_per_fold: Optional[int] = Field(default=None, ge=1)
    explainer: ExplainerSettings = Field(default_factory=ExplainerSettings)
    metrics: MetricSettings = Field(default_factory=MetricSettings)
    training: TrainingSettings = Field(default_factory=TrainingSettings)
    baseline: BaselineSettings = Field(default_factory=lambda: BaselineSettings(enabled=False))

    @model_validator(mode="after")
    def _check_seeds(self) -> "AuditCampaign":
        R = self.n_runs
        ms, es = self.model_seeds, self.explainer_seeds
        if self.setting == MultiplicitySetting.OVERALL:
            if len(ms) != R or len(es) != R:
                raise ValueError(f"overall 需要 {R} 个模型种子和 {R} 个解释器种子")
            if not (distinct(ms) and distinct(es)):
                raise ValueError("overall 的模型种子与解释器种子必须各自互不相同")
        elif self.setting == MultiplicitySetting.MODEL_INDUCED:
            if len(ms) != R or not distinct(ms):
                raise ValueError(f"model_induced 需要 {R} 个互不相同的模型种子")
            if len(es) != 1:
                raise ValueError("model_induced 只能有一个固定的解释器种子")
        else:
            if len(ms) != 1:
                raise ValueError("explainer_induced 只能有一个固定的模型种子")
            if len(es) != R or not distinct(es):
                raise ValueError(f"explainer_induced 需要 {R} 个互不相同的解释器种子")
        if self.folds is not None:
            if not self.folds or not distinct(self.folds):
                raise ValueError(f"folds 必须非空且不重复: {self.folds}")
            if max(self.folds) >= self.n_folds:
                raise ValueError(f"folds {self.folds} 超出折数 {self.n_folds}")
        return self

    def seed_pairs(self) -> List[SeedPair]:
        """每次运行的种子对"""
        R = self.n_runs
        ms = self.model_seeds if len(self.model_seeds) == R else self.model_seeds * R
        es = self.explainer_seeds if len(self.explainer_seeds) == R else self.explainer_seeds * R
        return [SeedPair(m, e) for m, e in zip(ms, es)]

    def active_folds(self) -> List[int]:
        return sorted(self.folds) if self.folds is not None else list(range(self.n_folds))

    def check_against_schema(self, schema: DatasetSchema) -> None:
        """训练之前按数据集模式检查设置"""
        d = schema.d
        if self.dataset_id is not None and self.dataset_id != schema.dataset_id:
            raise InputValidationError(
                f"配置的 dataset_id {self.dataset_id} 与模式 {schema.dataset_id} 不一致"
            )
        if self.metrics.top_k > d:
            raise InputValidationError(f"top_k={self.metrics.top_k} 超过特征数 d={d}")
        if self.baseline.enabled and MetricKind.L2 in self.metrics.metrics and self.metrics.top_k >= d:
            raise InputValidationError(f"ℓ2 基线要求 top_k < d: top_k={self.metrics.top_k}, d={d}")
        if self.explainer.kind == ExplainerKind.EXACT and d > MAX_EXACT_FEATURES:
            raise InputValidationError(f"精确解释器要求 d <= {MAX_EXACT_FEATURES}, 实际 d={d}")
        if self.explainer.n_coalitions is not None and self.explainer.n_coalitions < d + 2:
            raise InputValidationError(f"联盟预算 {self.explainer.n_coalitions} 小于 d+2 = {d + 2}")


class DissectionPlan(BaseModel):
    """分解：同一折划分上并排运行 model_induced 与 explainer_induced（可选 overall）"""
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    dataset: DatasetSource
    model_class: ModelClass
    n_runs: int = Field(default=DEFAULT_RUNS, ge=2)
    model_seed_root: NonNegativeInt
    explainer_seed_root: NonNegativeInt
    fold_seed: NonNegativeInt
    n_folds: int = Field(default=DEFAULT_FOLDS, ge=2)
    folds: Optional[List[NonNegativeInt]] = None
    instances_per_fold: Optional[int] = Field(default=None, ge=1)
    include_overall: bool = False
    explainer: ExplainerSettings = Field(default_factory=ExplainerSettings)
    metrics: MetricSettings = Field(default_factory=MetricSettings)
    training: TrainingSettings = Field(default_factory=TrainingSettings)
    baseline: BaselineSettings = Field(default_factory=lambda: BaselineSettings(enabled=False))

    def campaigns(self) -> List[AuditCampaign]:
        """由种子根构造各设置的审计活动（第i次运行使用 根 + i）"""
        R = self.n_runs
        shared = {
            "dataset": self.dataset, "model_class": self.model_class, "n_runs": R,
            "fold_seed": self.fold_seed, "n_folds": self.n_folds, "folds": self.folds,
            "instances_per_fold": self.instances_per_fold, "explainer": self.explainer,
            "metrics": self.metrics, "training": self.training, "baseline": self.baseline,
        }
        varied_m = [self.model_seed_root + i for i in range(R)]
        varied_e = [self.explainer_seed_root + i for i in range(R)]
        campaigns = [
            AuditCampaign(setting=MultiplicitySetting.MODEL_INDUCED, model_seeds=varied_m,
                          explainer_seeds=[self.explainer_seed_root], **shared),
            AuditCampaign(setting=MultiplicitySetting.EXPLAINER_INDUCED,
                          model_seeds=[self.model_seed_root], explainer_seeds=varied_e, **shared),
        ]
        if self.include_overall:
            campaigns.append(AuditCampaign(setting=MultiplicitySetting.OVERALL,
                                           model_seeds=varied_m, explainer_seeds=varied_e,
                                           **shared))
        return campaigns


def _load_config_mapping(path: str) -> Tuple[Dict[str, Any], Path]:
    data = load_yaml_config(path)
    return data, Path(path).resolve().parent


def load_campaign(path: str) -> AuditCampaign:
    """加载审计配置，数据路径相对于配置文件所在目录"""
    data, base_dir = _load_config_mapping(path)
    campaign = AuditCampaign.model_validate(data)
    return campaign.model_copy(update={"dataset": campaign.dataset.resolved(base_dir)})


def load_dissection(path: str) -> DissectionPlan:
    """加载分解配置"""
    data, base_dir = _load_config_mapping(path)
    plan = DissectionPlan.model_validate(data)
    return plan.model_copy(update={"dataset": plan.dataset.resolved(base_dir)})


def load_dataset(source: DatasetSource) -> Dataset:
    schema = DatasetSchema.from_file(source.schema_file)
    return load_csv(source.csv, schema)


# 结果类型
@dataclass
class UnitResult:
    """一个 (fold, run) 工作单元的输出"""
    fold: int
    run: int
    seed_pair: SeedPair
    hyperparams: Dict[str, Any]
    training_accuracy: Optional[float]
    test_accuracy: float
    test_auc: Optional[float]
    background_size: int
    n_coalitions: int
    explanations: List[ShapleyResult]

    def summary(self) -> Dict[str, Any]:
        return {
            "fold": self.fold,
            "run": self.run,
            "model_seed": self.seed_pair.model_seed,
            "explainer_seed": self.seed_pair.explainer_seed,
            "hyperparams": self.hyperparams,
            "training_accuracy": self.training_accuracy,
            "test_accuracy": self.test_accuracy,
            "test_auc": self.test_auc,
            "background_size": self.background_size,
            "n_coalitions": self.n_coalitions,
        }


@dataclass
class InstanceResult:
    """单个测试实例在R次运行上的结果"""
    fold: int
    instance_index: int
    source_row: int
    label: int
    seed_pairs: List[SeedPair]
    predictions: List[float]
    base_values: List[float]
    explanations: List[ExplanationVector]
    summaries: Dict[MetricKind, PairwiseSummary]
    pair_values: Dict[MetricKind, List[Tuple[int, int, float]]]
    profile: FeatureSensitivityProfile
    query: ExplanationQuery

    @property
    def mean_prediction(self) -> float:
        return math.fsum(self.predictions) / len(self.predictions)

    @property
    def stratum(self) -> ConfidenceStratum:
        return classify_confidence(self.mean_prediction)

    @property
    def outcome(self) -> PredictionOutcome:
        return classify_outcome(self.mean_prediction, self.label)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fold": self.fold,
            "instance_index": self.instance_index,
            "source_row": self.source_row,
            "label": self.label,
            "predictions": list(self.predictions),
            "mean_prediction": self.mean_prediction,
            "stratum": self.stratum.value,
            "outcome": self.outcome.value,
            "metrics": {m.value: s.to_dict() for m, s in self.summaries.items()},
            "feature_sensitivity": self.profile.to_dict(),
        }


# 工作单元
def _select_instances(campaign: AuditCampaign, fold: int, n_test: int) -> np.ndarray:
    cap = campaign.instances_per_fold
    if cap is None or cap >= n_test:
        return np.arange(n_test)
    rng = derive_stream(campaign.fold_seed, CHANNEL_INSTANCES, fold)
    return np.sort(rng.choice(n_test, size=cap, replace=False))


def _fit_model(campaign: AuditCampaign, train_split: Dataset, model_seed: int) -> PipelineModel:
    """按设置选择超参数（网格搜索种子由模型种子派生）并训练"""
    training = campaign.training
    if training.tune:
        hyperparams = grid_search(campaign.model_class, train_split,
                                  training.candidate_grid(campaign.model_class), model_seed)
    else:
        hyperparams = dict(training.hyperparams)
    return train(campaign.model_class, train_split, hyperparams, model_seed)


def _train_unit(campaign: AuditCampaign, dataset: Dataset, plan: FoldPlan, fold: int,
                model_seed: int) -> PipelineModel:
    try:
        model = _fit_model(campaign, dataset.subset(plan.train_indices(fold)), model_seed)
    except MultiplicityError as e:
        raise CampaignError(f"训练失败: {e}", fold=fold, model_seed=model_seed) from e
    logger.info(f"[fold {fold}] {campaign.model_class.value} 训练完成: model_seed={model_seed}, "
                f"超参数={model.hyperparams}, 训练准确率={model.training_accuracy:.4f}")
    return model


def _explain_unit(campaign: AuditCampaign, dataset: Dataset, plan: FoldPlan, fold: int, run: int,
                  seed_pair: SeedPair, model: PipelineModel,
                  positions: np.ndarray) -> UnitResult:
    try:
        train_split = dataset.subset(plan.train_indices(fold))
        test_split = dataset.subset(plan.test_indices(fold))
        bg = sample_background(train_split, campaign.explainer.background_size,
                               seed_pair.explainer_seed, fold)
        budget = campaign.explainer.budget(dataset.d)
        results = []
        for position in positions:
            position = int(position)
            instance_id = f"{dataset.dataset_id}/fold{fold}/row{int(test_split.source_rows[position])}"
            results.append(explain(model, test_split.row(position), bg, campaign.explainer.kind,
                                   seed_pair.explainer_seed, n_coalitions=budget, fold=fold,
                                   instance=position, instance_id=instance_id))
        proba = model.predict_proba(test_split.frame)
        test_accuracy = float(np.mean((proba >= OUTCOME_THRESHOLD) == (test_split.labels == 1)))
        counts = test_split.class_counts()
        test_auc = roc_auc(proba, test_split.labels) if min(counts.values()) > 0 else None
    except MultiplicityError as e:
        raise CampaignError(f"解释失败: {e}", fold=fold, model_seed=seed_pair.model_seed,
                            explainer_seed=seed_pair.explainer_seed) from e
    logger.info(f"[fold {fold}] run {run} 完成: {len(results)} 个实例, "
                f"测试准确率={test_accuracy:.4f}")
    return UnitResult(
        fold=fold, run=run, seed_pair=seed_pair, hyperparams=model.hyperparams,
        training_accuracy=model.training_accuracy, test_accuracy=test_accuracy,
        test_auc=test_auc, background_size=bg.size,
        n_coalitions=results[0].n_coalitions if results else budget,
        explanations=results,
    )


def _run_parallel(tasks: Sequence[Tuple[Any, ...]], worker, n_jobs: int) -> List[Any]:
    if n_jobs == 1 or len(tasks) <= 1:
        return [worker(*task) for task in tasks]
    return Parallel(n_jobs=n_jobs)(delayed(worker)(*task) for task in tasks)


def _build_instances(campaign: AuditCampaign, dataset: Dataset, plan: FoldPlan,
                     units: Sequence[UnitResult], fold_positions: Dict[int, np.ndarray]
                     ) -> List[InstanceResult]:
    metrics = campaign.metrics
    instances: List[InstanceResult] = []
    by_fold: Dict[int, List[UnitResult]] = {}
    for unit in units:
        by_fold.setdefault(unit.fold, []).append(unit)
    for fold in sorted(by_fold):
        fold_units = sorted(by_fold[fold], key=lambda u: u.run)
        test_split = dataset.subset(plan.test_indices(fold))
        train_size = len(plan.train_indices(fold))
        for slot, position in enumerate(fold_positions[fold]):
            position = int(position)
            results = [unit.explanations[slot] for unit in fold_units]
            predictions = [r.prediction for r in results]
            explanations = [r.explanation for r in results]
            if campaign.setting == MultiplicitySetting.EXPLAINER_INDUCED and len(set(predictions)) != 1:
                raise CampaignError(f"模型固定时实例 {position} 的预测概率在各次运行间不一致",
                                    fold=fold, model_seed=campaign.model_seeds[0])
            summaries: Dict[MetricKind, PairwiseSummary] = {}
            pair_values: Dict[MetricKind, List[Tuple[int, int, float]]] = {}
            for metric in metrics.metrics:
                values = pairwise_values(explanations, metric, metrics.top_k, metrics.rbo_p)
                pair_values[metric] = values
                summaries[metric] = summarize_values(
                    metric, [v for _, _, v in values],
                    metric_params(metric, dataset.d, metrics.top_k, metrics.rbo_p),
                )
            query = ExplanationQuery(
                dataset_id=dataset.dataset_id, fold_id=fold, instance_index=position,
                model_class=campaign.model_class, explainer_kind=campaign.explainer.kind,
                background_size=campaign.explainer.background_size,
            )
            query.check_against(test_split.n_rows, train_size)
            instances.append(InstanceResult(
                fold=fold, instance_index=position,
                source_row=int(test_split.source_rows[position]),
                label=int(test_split.labels[position]),
                seed_pairs=[u.seed_pair for u in fold_units],
                predictions=predictions,
                base_values=[r.base_value for r in results],
                explanations=explanations,
                summaries=summaries,
                pair_values=pair_values,
                profile=feature_sensitivity(explanations),
                query=query,
            ))
    return instances


# 汇总
def _metric_distributions(instances: Sequence[InstanceResult],
                          metrics: MetricSettings, d: int) -> Dict[str, Any]:
    """每种度量：全部两两值的汇总 + 实例均值的分布"""
    out: Dict[str, Any] = {}
    for metric in metrics.metrics:
        params = metric_params(metric, d, metrics.top_k, metrics.rbo_p)
        pooled = [v for inst in instances for v in inst.summaries[metric].values]
        means = [inst.summaries[metric].mean for inst in instances]
        out[metric.value] = {
            "pooled": summarize_values(metric, pooled, params).to_dict(),
            "instance_means": summarize_values(metric, means, params).to_dict(),
        }
    return out


def _vulnerability_map(instances: Sequence[InstanceResult]) -> List[Dict[str, Any]]:
    """逐特征：实例平均敏感度与平均 |φ|，按敏感度降序"""
    names = instances[0].profile.feature_names
    rows = []
    for m, name in enumerate(names):
        sens = sorted(float(inst.profile.sensitivity[m]) for inst in instances)
        mags = sorted(float(inst.profile.mean_abs[m]) for inst in instances)
        rows.append({"feature": name, "sensitivity": math.fsum(sens) / len(sens),
                     "mean_abs_phi": math.fsum(mags) / len(mags)})
    return sorted(rows, key=lambda r: (-r["sensitivity"], names.index(r["feature"])))


def _grouped_summaries(instances: Sequence[InstanceResult], groups: Sequence[Enum], key,
                       metrics: MetricSettings) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for group in groups:
        members = [inst for inst in instances if key(inst) == group]
        if not members:
            logger.warning(f"分组 {group.value} 为空")
            out[group.value] = {"n_instances": 0, "metrics": {}, "vulnerability": []}
            continue
        out[group.value] = {
            "n_instances": len(members),
            "metrics": _metric_distributions(members, metrics, members[0].profile.d),
            "vulnerability": _vulnerability_map(members),
        }
    return out


def stratify_confidence(results: Sequence[InstanceResult],
                        metrics: Optional[MetricSettings] = None) -> Dict[str, Any]:
    """
    按预测置信度分层汇总

    Args:
        results: 实例结果（模型固定的 explainer_induced 活动）
        metrics: 度量设置（缺省为全部度量）

    Returns:
        certain / uncertain / other 各层的度量分布与特征敏感度，空层报告为空
    """
    metrics = metrics or MetricSettings(metrics=list(results[0].summaries) if results else [MetricKind.L2])
    return _grouped_summaries(results, list(ConfidenceStratum), lambda inst: inst.stratum, metrics)


def stratify_outcome(results: Sequence[InstanceResult],
                     metrics: Optional[MetricSettings] = None) -> Dict[str, Any]:
    """按预测结果 (TP/TN/FP/FN) 分组汇总"""
    metrics = metrics or MetricSettings(metrics=list(results[0].summaries) if results else [MetricKind.L2])
    return _grouped_summaries(results, list(PredictionOutcome), lambda inst: inst.outcome, metrics)


def empirical_total_mass(instances: Sequence[InstanceResult]) -> float:
    """全部解释的平均总绝对归因 Σ|φ|"""
    totals = sorted(math.fsum(np.abs(e.values)) for inst in instances for e in inst.explanations)
    return math.fsum(totals) / len(totals)


def campaign_baselines(campaign: AuditCampaign, d: int, instances: Sequence[InstanceResult],
                       n_jobs: int = 1) -> Dict[str, Any]:
    """为活动中的度量计算零模型基线带"""
    settings = campaign.baseline
    if not settings.enabled:
        return {}
    bands: Dict[str, Any] = {}
    k = campaign.metrics.top_k
    for metric in campaign.metrics.metrics:
        band: Optional[BaselineBand] = None
        if metric == MetricKind.L2:
            total = settings.total_mass
            source = "config"
            if total is None:
                total = empirical_total_mass(instances)
                source = "empirical_mean_abs_sum"
            if not total > 0:
                logger.warning("平均总归因为0, 跳过 ℓ2 基线")
                continue
            band = baseline_band(metric, default_l2_sweep(d, k, total, settings.rhos, settings.kappas))
            bands[metric.value] = {**band.to_dict(), "total_mass": total, "total_mass_source": source}
        elif metric in (MetricKind.JACCARD_TOPK, MetricKind.RBO):
            sweep = default_rank_sweep(d, settings.qs, k, campaign.metrics.rbo_p, settings.n_samples)
            band = baseline_band(metric, sweep, settings.seed, n_jobs=n_jobs)
            bands[metric.value] = band.to_dict()
    return bands


@dataclass
class CampaignReport:
    """审计活动报告"""
    campaign: AuditCampaign
    dataset_summary: Dict[str, Any]
    fold_plan: FoldPlan
    units: List[UnitResult]
    instances: List[InstanceResult]
    aggregates: Dict[str, Any]
    vulnerability: List[Dict[str, Any]]
    strata: Optional[Dict[str, Any]]
    outcomes: Dict[str, Any]
    baselines: Dict[str, Any]
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def setting(self) -> MultiplicitySetting:
        return self.campaign.setting

    def to_dict(self) -> Dict[str, Any]:
        """转换为JSON报告文档"""
        return {
            "tool": {"name": TOOL_NAME, "version": TOOL_VERSION},
            "campaign": self.campaign.model_dump(mode="json"),
            "dataset": self.dataset_summary,
            "fold_plan": self.fold_plan.to_dict(),
            "runs": [unit.summary() for unit in self.units],
            "instances": [inst.to_dict() for inst in self.instances],
            "aggregates": self.aggregates,
            "vulnerability": self.vulnerability,
            "confidence_strata": self.strata,
            "outcome_groups": self.outcomes,
            "baselines": self.baselines,
            "provenance": self.provenance,
        }

    def _ident(self) -> Dict[str, Any]:
        return {"dataset_id": self.dataset_summary["dataset_id"],
                "model_class": self.campaign.model_class.value,
                "setting": self.campaign.setting.value}

    def pairwise_table(self) -> pd.DataFrame:
        """每行一个 实例-运行对-度量"""
        rows = []
        ident = self._ident()
        for inst in self.instances:
            for metric, values in inst.pair_values.items():
                params = inst.summaries[metric].params
                for i, j, value in values:
                    rows.append({
                        **ident, "fold": inst.fold, "instance_index": inst.instance_index,
                        "source_row": inst.source_row, "run_i": i, "run_j": j,
                        "model_seed_i": inst.seed_pairs[i].model_seed,
                        "explainer_seed_i": inst.seed_pairs[i].explainer_seed,
                        "model_seed_j": inst.seed_pairs[j].model_seed,
                        "explainer_seed_j": inst.seed_pairs[j].explainer_seed,
                        "metric": metric.value, "k": params.get("k"), "p": params.get("p"),
                        "value": value,
                    })
        return pd.DataFrame(rows, columns=PAIRWISE_COLUMNS)

    def features_table(self) -> pd.DataFrame:
        """每行一个 实例-特征"""
        rows = []
        ident = self._ident()
        for inst in self.instances:
            for m, name in enumerate(inst.profile.feature_names):
                rows.append({
                    **ident, "fold": inst.fold, "instance_index": inst.instance_index,
                    "source_row": inst.source_row, "feature": name,
                    "sensitivity": float(inst.profile.sensitivity[m]),
                    "mean_abs_phi": float(inst.profile.mean_abs[m]),
                    "mean_prediction": inst.mean_prediction,
                    "stratum": inst.stratum.value, "outcome": inst.outcome.value,
                })
        return pd.DataFrame(rows, columns=FEATURES_COLUMNS)

    def explanations_table(self) -> pd.DataFrame:
        """每行一个 实例-运行-特征"""
        rows = []
        ident = self._ident()
        for inst in self.instances:
            for run, explanation in enumerate(inst.explanations):
                for name, phi in zip(explanation.feature_names, explanation.values):
                    rows.append({
                        **ident, "fold": inst.fold, "instance_index": inst.instance_index,
                        "source_row": inst.source_row, "run": run,
                        "model_seed": explanation.seed_pair.model_seed,
                        "explainer_seed": explanation.seed_pair.explainer_seed,
                        "prediction": inst.predictions[run],
                        "base_value": inst.base_values[run],
                        "feature": name, "phi": float(phi),
                    })
        return pd.DataFrame(rows, columns=EXPLANATIONS_COLUMNS)


# CSV表的规范列顺序
_IDENT_COLUMNS = ["dataset_id", "model_class", "setting", "fold", "instance_index", "source_row"]
PAIRWISE_COLUMNS = _IDENT_COLUMNS + [
    "run_i", "run_j", "model_seed_i", "explainer_seed_i", "model_seed_j", "explainer_seed_j",
    "metric", "k", "p", "value",
]
FEATURES_COLUMNS = _IDENT_COLUMNS + [
    "feature", "sensitivity", "mean_abs_phi", "mean_prediction", "stratum", "outcome",
]
EXPLANATIONS_COLUMNS = _IDENT_COLUMNS + [
    "run", "model_seed", "explainer_seed", "prediction", "base_value", "feature", "phi",
]


def run_campaign(campaign: AuditCampaign, dataset: Dataset, n_jobs: int = 1,
                 fold_plan: Optional[FoldPlan] = None) -> CampaignReport:
    """
    执行审计活动

    Args:
        campaign: 审计配置
        dataset: 已加载的数据集
        n_jobs: 并行工作单元数（不影响结果）
        fold_plan: 共享的折划分（缺省由 fold_seed 构造）

    Returns:
        CampaignReport，给定配置与种子时结果确定
    """
    started = time.perf_counter()
    campaign.check_against_schema(dataset.schema)
    plan = fold_plan or stratified_folds(dataset, campaign.n_folds, campaign.fold_seed)
    if plan.n_folds != campaign.n_folds:
        raise InputValidationError(f"折划分有 {plan.n_folds} 折, 配置要求 {campaign.n_folds} 折")
    folds = campaign.active_folds()
    seed_pairs = campaign.seed_pairs()
    logger.info(f"开始审计: {dataset.dataset_id} / {campaign.model_class.value} / "
                f"{campaign.setting.value}, R={campaign.n_runs}, 折={folds}")

    model_keys = sorted({(fold, pair.model_seed) for fold in folds for pair in seed_pairs})
    models = _run_parallel([(campaign, dataset, plan, fold, seed) for fold, seed in model_keys],
                           _train_unit, n_jobs)
    model_of = dict(zip(model_keys, models))

    fold_positions = {fold: _select_instances(campaign, fold, len(plan.test_indices(fold)))
                      for fold in folds}
    tasks = [(campaign, dataset, plan, fold, run, pair, model_of[(fold, pair.model_seed)],
              fold_positions[fold])
             for fold in folds for run, pair in enumerate(seed_pairs)]
    units = _run_parallel(tasks, _explain_unit, n_jobs)

    instances = _build_instances(campaign, dataset, plan, units, fold_positions)
    if not instances:
        raise CampaignError("没有可解释的测试实例")
    aggregates = _metric_distributions(instances, campaign.metrics, dataset.d)
    strata = None
    if campaign.setting == MultiplicitySetting.EXPLAINER_INDUCED:
        strata = stratify_confidence(instances, campaign.metrics)
    outcomes = stratify_outcome(instances, campaign.metrics)
    baselines = campaign_baselines(campaign, dataset.d, instances, n_jobs)

    provenance = {
        "created_at": datetime.now().isoformat(timespec="seconds"),
        "elapsed_seconds": round(time.perf_counter() - started, 3),
        "fold_seed": campaign.fold_seed,
        "seed_pairs": [p.to_dict() for p in seed_pairs],
        "baseline_seed": campaign.baseline.seed,
        "explainer_kind": campaign.explainer.kind.value,
        "background_size": campaign.explainer.background_size,
        "n_coalitions": campaign.explainer.budget(dataset.d)
        if campaign.explainer.kind == ExplainerKind.KERNEL else 2 ** dataset.d,
        "n_instances": len(instances),
    }
    logger.info(f"审计完成: {len(instances)} 个实例, 用时 {provenance['elapsed_seconds']} 秒")
    return CampaignReport(
        campaign=campaign, dataset_summary=dataset.summary(), fold_plan=plan, units=list(units),
        instances=instances, aggregates=aggregates, vulnerability=_vulnerability_map(instances),
        strata=strata, outcomes=outcomes, baselines=baselines, provenance=provenance,
    )


@dataclass
class DissectionReport:
    """并排的各设置报告"""
    plan: DissectionPlan
    reports: List[CampaignReport]

    def side_by_side(self) -> Dict[str, Any]:
        """每种度量：各设置下实例均值的分布（小提琴图数据）"""
        out: Dict[str, Any] = {}
        for metric in self.plan.metrics.metrics:
            out[metric.value] = {
                report.setting.value: report.aggregates[metric.value]["instance_means"]
                for report in self.reports
            }
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tool": {"name": TOOL_NAME, "version": TOOL_VERSION},
            "plan": self.plan.model_dump(mode="json"),
            "side_by_side": self.side_by_side(),
            "baselines": {report.setting.value: report.baselines for report in self.reports},
            "campaigns": {report.setting.value: report.to_dict() for report in self.reports},
        }


def dissect(plan: DissectionPlan, dataset: Dataset, n_jobs: int = 1) -> DissectionReport:
    """
    把多重性分解为模型诱导与解释器诱导两部分（共享同一折划分）

    Args:
        plan: 分解配置
        dataset: 已加载的数据集
        n_jobs: 并行工作单元数

    Returns:
        DissectionReport
    """
    campaigns = plan.campaigns()
    campaigns[0].check_against_schema(dataset.schema)
    fold_plan = stratified_folds(dataset, plan.n_folds, plan.fold_seed)
    reports = [run_campaign(c, dataset, n_jobs=n_jobs, fold_plan=fold_plan) for c in campaigns]
    return DissectionReport(plan=plan, reports=reports)
