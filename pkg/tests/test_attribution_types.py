#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
核心类型测试：解释向量、排序、种子对与解释查询
"""

import pickle

import numpy as np
import pytest
from pydantic import ValidationError

from attribution_types import (
    CampaignError,
    ExplainerKind,
    ExplanationQuery,
    ExplanationVector,
    InputValidationError,
    ModelClass,
    MultiplicityError,
    Ranking,
    SeedPair,
    explanation_matrix,
    ranking_of,
)
from seed_streams import derive_int_seed, derive_stream, partition_sizes, require_seed


def _vector(values, instance_id="x", seeds=(1, 2)):
    names = tuple(f"f{i}" for i in range(len(values)))
    return ExplanationVector(np.asarray(values, dtype=float), names, instance_id, SeedPair(*seeds))


def test_ranking_orders_by_magnitude():
    """按 |φ| 降序排列"""
    assert ranking_of([0.1, -0.5, 0.3]).order == (1, 2, 0)


def test_ranking_ties_broken_by_index():
    """幅值相等时按特征下标升序"""
    assert ranking_of([0.2, -0.2, 0.2]).order == (0, 1, 2)
    assert ranking_of([0.0, 0.0, 0.0, 0.0]).order == (0, 1, 2, 3)


def test_ranking_rejects_non_permutation():
    """非排列的顺序被拒绝"""
    with pytest.raises(InputValidationError):
        Ranking((0, 0, 1))


def test_ranking_positions_and_top_k():
    """名次与top-k集合"""
    r = Ranking((2, 0, 1))
    assert list(r.positions()) == [1, 2, 0]
    assert r.top_k(2) == frozenset({2, 0})


def test_explanation_vector_rejects_non_finite():
    """归因含NaN时报错并指出特征"""
    with pytest.raises(InputValidationError, match="f1"):
        _vector([0.1, float("nan"), 0.2])


def test_explanation_vector_requires_two_features():
    """至少两个特征"""
    with pytest.raises(InputValidationError):
        _vector([0.1])


def test_explanation_vector_is_read_only():
    """构造后不可修改"""
    v = _vector([0.1, 0.2])
    with pytest.raises(ValueError):
        v.values[0] = 1.0


def test_explanation_vector_dict_fields():
    """JSON表示包含种子与特征名"""
    v = _vector([0.25, -0.5], instance_id="row7", seeds=(3, 9))
    data = v.to_dict()
    assert data == {"instance_id": "row7", "model_seed": 3, "explainer_seed": 9,
                    "features": ["f0", "f1"], "phi": [0.25, -0.5]}
    assert ExplanationVector.from_dict(data) == v


def test_explanation_vector_from_dict_missing_field():
    """缺少字段时报输入错误"""
    with pytest.raises(InputValidationError):
        ExplanationVector.from_dict({"phi": [0.1, 0.2]})


def test_seed_pair_requires_unsigned():
    """种子必须是非负整数"""
    with pytest.raises(InputValidationError):
        SeedPair(-1, 0)
    with pytest.raises(InputValidationError):
        SeedPair(True, 0)
    assert SeedPair(np.int64(4), 5).model_seed == 4


def test_explanation_matrix_checks_schema():
    """特征模式不一致时无法堆叠"""
    a = _vector([0.1, 0.2])
    b = ExplanationVector(np.array([0.1, 0.2]), ("g0", "g1"), "x", SeedPair(1, 2))
    with pytest.raises(InputValidationError):
        explanation_matrix([a, b])
    assert explanation_matrix([a, a]).shape == (2, 2)


def test_explanation_query_bounds():
    """实例下标与背景集大小必须落在划分内"""
    query = ExplanationQuery(dataset_id="toy", fold_id=0, instance_index=5,
                             model_class=ModelClass.MLP, explainer_kind=ExplainerKind.KERNEL,
                             background_size=100)
    query.check_against(test_fold_size=6, train_split_size=100)
    with pytest.raises(InputValidationError):
        query.check_against(test_fold_size=5, train_split_size=100)
    with pytest.raises(InputValidationError):
        query.check_against(test_fold_size=6, train_split_size=99)
    with pytest.raises(ValidationError):
        ExplanationQuery(dataset_id="toy", fold_id=0, instance_index=0, model_class="svm",
                         explainer_kind="kernel", background_size=1)


def test_error_hierarchy():
    """输入错误同时是 ValueError；活动错误携带种子上下文"""
    assert issubclass(InputValidationError, ValueError)
    err = CampaignError("失败", fold=2, model_seed=3, explainer_seed=4)
    assert isinstance(err, MultiplicityError)
    assert "fold=2" in str(err) and err.explainer_seed == 4


def test_campaign_error_survives_pickling():
    """跨进程传递后消息与种子上下文保持不变"""
    err = CampaignError("解释失败", fold=1, model_seed=5, explainer_seed=9)
    restored = pickle.loads(pickle.dumps(err))
    assert isinstance(restored, CampaignError)
    assert str(restored) == str(err)
    assert str(restored).count("fold=") == 1
    assert (restored.fold, restored.model_seed, restored.explainer_seed) == (1, 5, 9)
    assert restored.message == "解释失败"


def test_seed_streams_are_keyed():
    """同一根种子与键得到相同流，不同键得到不同流"""
    a = derive_stream(42, 6, 0).random(5)
    b = derive_stream(42, 6, 0).random(5)
    c = derive_stream(42, 6, 1).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert derive_int_seed(42, 1) == derive_int_seed(42, 1)
    assert 0 <= derive_int_seed(42, 1) < 2 ** 32


def test_require_seed_refuses_none():
    """不允许隐式种子"""
    with pytest.raises(InputValidationError):
        require_seed(None, "explainer_seed")


def test_partition_sizes():
    """蒙特卡洛分区大小固定"""
    assert partition_sizes(120_000, 50_000) == [50_000, 50_000, 20_000]
    assert partition_sizes(10, 50_000) == [10]
