#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
流水线模型模块

预测器 f(x) = g(T(x))：T 是预处理变换，g 是可设种子训练的二分类概率头。
训练由 scikit-learn 完成，拟合后的参数被提取为纯 numpy 的头对象，
预测只依赖这些参数，可以序列化为带版本号的JSON文档并原样重新加载。
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit
from sklearn.ensemble import RandomForestClassifier
from sklearn.linear_model import SGDClassifier
from sklearn.metrics import log_loss, roc_auc_score
from sklearn.model_selection import ShuffleSplit
from sklearn.neural_network import MLPClassifier
from sklearn.tree import DecisionTreeClassifier

from attribution_types import InputValidationError, ModelClass, TrainingError
from seed_streams import (
    CHANNEL_FOREST,
    CHANNEL_GRID_SPLIT,
    CHANNEL_MODEL_INIT,
    CHANNEL_MODEL_SHUFFLE,
    derive_int_seed,
    derive_stream,
    require_seed,
)
from tabular_data import Dataset, PreprocessTransform, fit_transform

logger = logging.getLogger(__name__)

MODEL_FORMAT = "shap-multiplicity/model"
MODEL_FORMAT_VERSION = 1

# 决策树列扫描顺序与逻辑回归初始化使用的固定随机状态
FIXED_RANDOM_STATE = 0


# 超参数
class LogregParams(BaseModel):
    """逻辑回归：逐样本SGD（批大小固定为1）"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(default=0.01, gt=0)
    epochs: int = Field(default=100, ge=1)
    l2: float = Field(default=1e-4, ge=0)


class TreeParams(BaseModel):
    """CART决策树"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_depth: Optional[int] = Field(default=None, ge=1)
    min_samples_leaf: int = Field(default=1, ge=1)


class ForestParams(BaseModel):
    """随机森林"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_trees: int = Field(default=200, ge=1)
    max_depth: Optional[int] = Field(default=None, ge=1)
    min_samples_leaf: int = Field(default=1, ge=1)


class MlpParams(BaseModel):
    """多层感知机：ReLU隐藏层 + sigmoid输出，带动量的小批量SGD"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden_dims: Tuple[int, ...] = (64,)
    learning_rate: float = Field(default=0.01, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    epochs: int = Field(default=100, ge=1)
    batch_size: int = Field(default=256, ge=1)
    momentum: float = Field(default=0.9, ge=0, lt=1)


HYPERPARAM_MODELS: Dict[ModelClass, Type[BaseModel]] = {
    ModelClass.LOGREG: LogregParams,
    ModelClass.DTREE: TreeParams,
    ModelClass.RFOREST: ForestParams,
    ModelClass.MLP: MlpParams,
}

# 默认搜索网格（MLP 省略 dropout 维度）
DEFAULT_GRIDS: Dict[ModelClass, List[Dict[str, Any]]] = {
    ModelClass.LOGREG: [
        {"learning_rate": lr, "l2": l2} for lr in (0.01, 0.1) for l2 in (1e-4, 1e-3)
    ],
    ModelClass.DTREE: [
        {"max_depth": depth, "min_samples_leaf": leaf}
        for depth in (3, 5, None) for leaf in (1, 5, 10)
    ],
    ModelClass.RFOREST: [
        {"max_depth": depth, "min_samples_leaf": leaf}
        for depth in (None, 7, 15) for leaf in (1, 5)
    ],
    ModelClass.MLP: [
        {"hidden_dims": hidden, "learning_rate": lr, "weight_decay": wd}
        for hidden in ((64,), (128,), (128, 64)) for lr in (1e-3, 3e-4)
        for wd in (1e-4, 1e-3)
    ],
}


def resolve_hyperparams(model_class: Union[ModelClass, str],
                        overrides: Optional[Mapping[str, Any]] = None) -> BaseModel:
    """
    合并默认超参数与覆盖值

    Args:
        model_class: 模型类别
        overrides: 覆盖值（未知键报错）

    Returns:
        对应类别的超参数模型
    """
    params_cls = HYPERPARAM_MODELS[ModelClass(model_class)]
    try:
        return params_cls.model_validate(dict(overrides or {}))
    except ValueError as e:
        raise InputValidationError(f"{ModelClass(model_class).value} 超参数无效: {e}") from e


# 分类头
class LinearHead:
    """线性头：logistic链接得到概率；identity链接只用作可加性的替身模型"""
    kind = "linear"

    def __init__(self, weights: Sequence[float], bias: float, link: str = "logistic"):
        self.weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        self.bias = float(bias)
        if link not in ("logistic", "identity"):
            raise InputValidationError(f"不支持的链接函数: {link}")
        self.link = link
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise TrainingError("线性头的参数包含非有限值")

    def decision(self, Z: np.ndarray) -> np.ndarray:
        return Z @ self.weights + self.bias

    def predict_encoded(self, Z: np.ndarray) -> np.ndarray:
        score = self.decision(Z)
        return expit(score) if self.link == "logistic" else score

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "link": self.link, "bias": self.bias,
                "weights": [float(w) for w in self.weights]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LinearHead":
        return cls(data["weights"], data["bias"], data.get("link", "logistic"))


class TreeHead:
    """CART树：叶节点保存正类概率，内部节点满足 x <= 阈值 时走左子树"""
    kind = "tree"

    def __init__(self, feature: Sequence[int], threshold: Sequence[float],
                 left: Sequence[int], right: Sequence[int], value: Sequence[float]):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        n_nodes = self.feature.shape[0]
        for name in ("threshold", "left", "right", "value"):
            if getattr(self, name).shape[0] != n_nodes:
                raise InputValidationError(f"树节点数组 {name} 长度与节点数 {n_nodes} 不一致")
        if np.any((self.value < 0) | (self.value > 1)):
            raise InputValidationError("叶节点概率必须位于 [0, 1]")

    @classmethod
    def leaf(cls, probability: float) -> "TreeHead":
        """只有一个叶节点的树"""
        return cls([-1], [0.0], [-1], [-1], [probability])

    @classmethod
    def from_sklearn(cls, estimator: DecisionTreeClassifier) -> "TreeHead":
        tree = estimator.tree_
        counts = tree.value[:, 0, :]
        totals = counts.sum(axis=1, keepdims=True)
        proba = counts / np.where(totals > 0, totals, 1.0)
        positive = int(np.flatnonzero(estimator.classes_ == 1)[0])
        feature = np.where(tree.children_left < 0, -1, tree.feature)
        return cls(feature, tree.threshold, tree.children_left, tree.children_right,
                   proba[:, positive])

    def check_width(self, width: int) -> None:
        internal = self.feature >= 0
        if np.any(self.feature[internal] >= width):
            raise InputValidationError(f"树节点引用了超出编码宽度 {width} 的列")

    def predict_encoded(self, Z: np.ndarray) -> np.ndarray:
        # 与scikit-learn一致，先把输入转换为float32再与阈值比较
        Z32 = np.asarray(Z, dtype=np.float32)
        node = np.zeros(Z32.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            current = node[active]
            go_left = Z32[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "feature": [int(v) for v in self.feature],
            "threshold": [float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "value": [float(v) for v in self.value],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TreeHead":
        return cls(data["feature"], data["threshold"], data["left"], data["right"], data["value"])


class ForestHead:
    """随机森林：概率为成员树概率的算术平均"""
    kind = "forest"

    def __init__(self, trees: Sequence[TreeHead]):
        if not trees:
            raise InputValidationError("森林至少需要一棵树")
        self.trees = list(trees)

    def predict_encoded(self, Z: np.ndarray) -> np.ndarray:
        return np.mean(np.vstack([tree.predict_encoded(Z) for tree in self.trees]), axis=0)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "trees": [tree.to_dict() for tree in self.trees]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ForestHead":
        return cls([TreeHead.from_dict(t) for t in data["trees"]])


class MlpHead:
    """多层感知机：隐藏层ReLU，输出层sigmoid"""
    kind = "mlp"

    def __init__(self, coefs: Sequence[np.ndarray], intercepts: Sequence[np.ndarray]):
        self.coefs = [np.asarray(c, dtype=np.float64) for c in coefs]
        self.intercepts = [np.asarray(b, dtype=np.float64).reshape(-1) for b in intercepts]
        if len(self.coefs) != len(self.intercepts) or len(self.coefs) < 2:
            raise InputValidationError("MLP至少需要一个隐藏层, 且权重与偏置层数一致")
        for c in self.coefs + self.intercepts:
            if not np.all(np.isfinite(c)):
                raise TrainingError("MLP参数包含非有限值")

    def predict_encoded(self, Z: np.ndarray) -> np.ndarray:
        hidden = np.asarray(Z, dtype=np.float64)
        for W, b in zip(self.coefs[:-1], self.intercepts[:-1]):
            hidden = np.maximum(hidden @ W + b, 0.0)
        return expit(hidden @ self.coefs[-1] + self.intercepts[-1])[:, 0]

    def parameter_vector(self) -> np.ndarray:
        """全部参数拼接为一个向量"""
        return np.concatenate([a.ravel() for pair in zip(self.coefs, self.intercepts) for a in pair])

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind,
                "coefs": [c.tolist() for c in self.coefs],
                "intercepts": [b.tolist() for b in self.intercepts]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MlpHead":
        return cls(data["coefs"], data["intercepts"])


HEAD_TYPES = {cls.kind: cls for cls in (LinearHead, TreeHead, ForestHead, MlpHead)}

Head = Union[LinearHead, TreeHead, ForestHead, MlpHead]


class PipelineModel:
    """流水线预测器 f(x) = g(T(x))，拟合后不可变"""

    def __init__(self, transform: PreprocessTransform, head: Head, model_class: ModelClass,
                 model_seed: int, hyperparams: Optional[Mapping[str, Any]] = None,
                 training_accuracy: Optional[float] = None,
                 loss_curve: Sequence[float] = (),
                 training_rows: Optional[Sequence[int]] = None,
                 dataset_id: Optional[str] = None):
        self.transform = transform
        self.head = head
        self.model_class = ModelClass(model_class)
        self.model_seed = require_seed(model_seed, "model_seed")
        self.hyperparams = dict(hyperparams or {})
        self.training_accuracy = training_accuracy
        self.loss_curve = [float(v) for v in loss_curve]
        self.training_rows = None if training_rows is None else [int(r) for r in training_rows]
        self.dataset_id = dataset_id
        if isinstance(head, TreeHead):
            head.check_width(transform.encoded_width)
        elif isinstance(head, ForestHead):
            for tree in head.trees:
                tree.check_width(transform.encoded_width)

    @property
    def feature_names(self) -> Tuple[str, ...]:
        return self.transform.feature_names

    @property
    def d(self) -> int:
        return self.transform.d

    def predict_encoded(self, Z: np.ndarray) -> np.ndarray:
        """对已编码的行求正类概率"""
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[1] != self.transform.encoded_width:
            raise InputValidationError(
                f"编码输入形状 {Z.shape} 与编码宽度 {self.transform.encoded_width} 不匹配"
            )
        return self.head.predict_encoded(Z)

    def predict_proba(self, x: Union[pd.DataFrame, pd.Series, Mapping[str, Any]]) -> np.ndarray:
        """对原始特征行求正类概率"""
        return self.predict_encoded(self.transform.transform(x))

    def to_dict(self) -> Dict[str, Any]:
        """转换为带版本号的字典表示"""
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "dataset_id": self.dataset_id,
            "model_class": self.model_class.value,
            "model_seed": self.model_seed,
            "hyperparams": self.hyperparams,
            "transform": self.transform.to_dict(),
            "head": self.head.to_dict(),
            "training": {
                "accuracy": self.training_accuracy,
                "loss_curve": self.loss_curve,
                "rows": self.training_rows,
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineModel":
        """从字典创建模型"""
        if data.get("format") != MODEL_FORMAT:
            raise InputValidationError(f"不是模型文件: format={data.get('format')!r}")
        if data.get("version") != MODEL_FORMAT_VERSION:
            raise InputValidationError(f"不支持的模型文件版本: {data.get('version')}")
        head_data = data["head"]
        head_cls = HEAD_TYPES.get(head_data.get("kind"))
        if head_cls is None:
            raise InputValidationError(f"未知的分类头类型: {head_data.get('kind')}")
        training = data.get("training", {})
        return cls(
            transform=PreprocessTransform.from_dict(data["transform"]),
            head=head_cls.from_dict(head_data),
            model_class=data["model_class"],
            model_seed=data["model_seed"],
            hyperparams=data.get("hyperparams"),
            training_accuracy=training.get("accuracy"),
            loss_curve=training.get("loss_curve") or (),
            training_rows=training.get("rows"),
            dataset_id=data.get("dataset_id"),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
        logger.info(f"模型已保存: {path}")

    @classmethod
    def load(cls, path: str) -> "PipelineModel":
        model_path = Path(path)
        if not model_path.exists():
            raise FileNotFoundError(f"模型文件不存在: {path}")
        with open(model_path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise InputValidationError(f"模型文件不是有效的JSON: {path} - {e}") from e
        return cls.from_dict(data)


def predict_proba(model: PipelineModel,
                  x: Union[pd.DataFrame, pd.Series, Mapping[str, Any]]) -> Union[float, np.ndarray]:
    """
    预测正类概率

    Args:
        model: 流水线模型
        x: 单行（Series/映射）或多行（DataFrame）原始特征

    Returns:
        单行输入返回float，多行输入返回数组
    """
    proba = model.predict_proba(x)
    if isinstance(x, (pd.Series, Mapping)):
        return float(proba[0])
    return proba


def _check_loss(loss: float, epoch: int, model_class: ModelClass) -> None:
    if not np.isfinite(loss):
        raise TrainingError(f"{model_class.value} 训练在第 {epoch} 轮出现非有限损失: {loss}")


def _warn_unsettled(loss_curve: Sequence[float], model_class: ModelClass, seed: int) -> None:
    tail = max(2, len(loss_curve) // 10)
    if len(loss_curve) >= 2 * tail and loss_curve[-1] > loss_curve[-tail]:
        logger.warning(f"{model_class.value} (seed={seed}) 最后 {tail} 轮损失未下降: "
                       f"{loss_curve[-tail]:.6f} -> {loss_curve[-1]:.6f}")


def _train_logreg(Z: np.ndarray, y: np.ndarray, params: LogregParams,
                  seed: int) -> Tuple[Head, List[float]]:
    clf = SGDClassifier(loss="log_loss", penalty="l2", alpha=params.l2,
                        learning_rate="constant", eta0=params.learning_rate,
                        shuffle=False, random_state=FIXED_RANDOM_STATE)
    rng = derive_stream(seed, CHANNEL_MODEL_SHUFFLE)
    classes = np.array([0, 1])
    loss_curve: List[float] = []
    for epoch in range(1, params.epochs + 1):
        order = rng.permutation(Z.shape[0])
        clf.partial_fit(Z[order], y[order], classes=classes)
        if not (np.all(np.isfinite(clf.coef_)) and np.all(np.isfinite(clf.intercept_))):
            raise TrainingError(f"logreg 训练在第 {epoch} 轮出现非有限权重")
        loss = float(log_loss(y, expit(clf.decision_function(Z)), labels=classes))
        _check_loss(loss, epoch, ModelClass.LOGREG)
        loss_curve.append(loss)
    return LinearHead(clf.coef_[0], clf.intercept_[0]), loss_curve


def _train_dtree(Z: np.ndarray, y: np.ndarray, params: TreeParams,
                 seed: int) -> Tuple[Head, List[float]]:
    clf = DecisionTreeClassifier(criterion="gini", max_depth=params.max_depth,
                                 min_samples_leaf=params.min_samples_leaf,
                                 random_state=FIXED_RANDOM_STATE)
    clf.fit(Z, y)
    return TreeHead.from_sklearn(clf), []


def _train_rforest(Z: np.ndarray, y: np.ndarray, params: ForestParams,
                   seed: int) -> Tuple[Head, List[float]]:
    clf = RandomForestClassifier(n_estimators=params.n_trees, criterion="gini",
                                 max_depth=params.max_depth,
                                 min_samples_leaf=params.min_samples_leaf,
                                 max_features="sqrt", bootstrap=True, n_jobs=1,
                                 random_state=derive_int_seed(seed, CHANNEL_FOREST))
    clf.fit(Z, y)
    return ForestHead([TreeHead.from_sklearn(est) for est in clf.estimators_]), []


def _train_mlp(Z: np.ndarray, y: np.ndarray, params: MlpParams,
               seed: int) -> Tuple[Head, List[float]]:
    clf = MLPClassifier(hidden_layer_sizes=tuple(params.hidden_dims), activation="relu",
                        solver="sgd", alpha=params.weight_decay,
                        batch_size=min(params.batch_size, Z.shape[0]),
                        learning_rate="constant", learning_rate_init=params.learning_rate,
                        momentum=params.momentum, nesterovs_momentum=True, shuffle=False,
                        random_state=derive_int_seed(seed, CHANNEL_MODEL_INIT))
    rng = derive_stream(seed, CHANNEL_MODEL_SHUFFLE)
    classes = np.array([0, 1])
    loss_curve: List[float] = []
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, params.epochs + 1):
            order = rng.permutation(Z.shape[0])
            clf.partial_fit(Z[order], y[order], classes=classes)
            loss = float(clf.loss_)
            _check_loss(loss, epoch, ModelClass.MLP)
            loss_curve.append(loss)
    return MlpHead(clf.coefs_, clf.intercepts_), loss_curve


_TRAINERS = {
    ModelClass.LOGREG: _train_logreg,
    ModelClass.DTREE: _train_dtree,
    ModelClass.RFOREST: _train_rforest,
    ModelClass.MLP: _train_mlp,
}


def train(model_class: Union[ModelClass, str], train_split: Dataset,
          hyperparams: Optional[Mapping[str, Any]], model_seed: int) -> PipelineModel:
    """
    训练流水线模型

    Args:
        model_class: 模型类别
        train_split: 训练划分
        hyperparams: 超参数（缺省项取默认值）
        model_seed: 模型种子，初始化、打乱和自助采样都由它派生

    Returns:
        拟合好的PipelineModel，给定 (数据, 超参数, 种子) 时结果确定
    """
    model_class = ModelClass(model_class)
    model_seed = require_seed(model_seed, "model_seed")
    params = resolve_hyperparams(model_class, hyperparams)
    if train_split.n_rows == 0:
        raise TrainingError("训练划分为空")
    counts = train_split.class_counts()
    if counts[0] == 0 or counts[1] == 0:
        raise TrainingError(f"训练划分只包含一个类别: {counts}")

    transform = fit_transform(train_split)
    Z = transform.transform(train_split.frame)
    y = np.asarray(train_split.labels, dtype=np.int64)
    head, loss_curve = _TRAINERS[model_class](Z, y, params, model_seed)
    if loss_curve:
        _warn_unsettled(loss_curve, model_class, model_seed)

    accuracy = float(np.mean((head.predict_encoded(Z) >= 0.5).astype(np.int64) == y))
    model = PipelineModel(
        transform=transform,
        head=head,
        model_class=model_class,
        model_seed=model_seed,
        hyperparams=params.model_dump(mode="json"),
        training_accuracy=accuracy,
        loss_curve=loss_curve,
        training_rows=train_split.source_rows,
        dataset_id=train_split.dataset_id,
    )
    logger.debug(f"{model_class.value} 训练完成: seed={model_seed}, "
                 f"accuracy={accuracy:.4f}, 超参数={model.hyperparams}")
    return model


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    计算ROC-AUC（Mann-Whitney U 统计量除以 n_pos * n_neg，平局计 1/2）

    Args:
        scores: 正类概率
        labels: 0/1 标签

    Returns:
        [0, 1] 内的AUC
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise InputValidationError(f"分数长度 {scores.shape} 与标签长度 {labels.shape} 不一致")
    if not np.all(np.isin(labels, (0, 1))):
        raise InputValidationError("标签必须是 0/1")
    if labels.min(initial=1) == labels.max(initial=0):
        raise InputValidationError("ROC-AUC 需要同时包含两个类别")
    return float(roc_auc_score(labels, scores))


def grid_search(model_class: Union[ModelClass, str], train_split: Dataset,
                grid: Sequence[Mapping[str, Any]], seed: int) -> Dict[str, Any]:
    """
    在单次 80/20 洗牌划分上按验证AUC选择超参数

    Args:
        model_class: 模型类别
        train_split: 训练划分
        grid: 候选配置（声明顺序即平局顺序）
        seed: 搜索种子（由模型种子派生）

    Returns:
        最优配置
    """
    model_class = ModelClass(model_class)
    seed = require_seed(seed, "grid_seed")
    if not grid:
        raise InputValidationError("超参数网格为空")
    for config in grid:
        resolve_hyperparams(model_class, config)
    if len(grid) == 1:
        return dict(grid[0])

    splitter = ShuffleSplit(n_splits=1, test_size=0.2,
                            random_state=derive_int_seed(seed, CHANNEL_GRID_SPLIT))
    fit_idx, val_idx = next(splitter.split(np.zeros((train_split.n_rows, 1))))
    fit_idx, val_idx = np.sort(fit_idx), np.sort(val_idx)
    validation = train_split.subset(val_idx)
    val_counts = validation.class_counts()
    if val_counts[0] == 0 or val_counts[1] == 0:
        raise TrainingError(f"验证划分只包含一个类别: {val_counts}")
    fit_split = train_split.subset(fit_idx)

    best_config: Optional[Dict[str, Any]] = None
    best_auc = -np.inf
    for config in grid:
        model = train(model_class, fit_split, config, seed)
        auc = roc_auc(model.predict_proba(validation.frame), validation.labels)
        logger.debug(f"网格搜索 {model_class.value} {dict(config)}: AUC={auc:.6f}")
        # 严格大于才替换，平局保留声明顺序靠前的配置
        if auc > best_auc:
            best_auc = auc
            best_config = dict(config)
    logger.debug(f"网格搜索选中 {best_config} (AUC={best_auc:.6f})")
    return best_config
