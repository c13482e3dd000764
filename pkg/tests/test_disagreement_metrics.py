#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
分歧度量测试：ℓ2、top-k Jaccard、RBO敏感度、Kendall-Tau 与逐特征敏感度
"""

import itertools
import math

import numpy as np
import pytest

from attribution_types import ExplanationVector, InputValidationError, Ranking, SeedPair
from disagreement_metrics import (
    MetricKind,
    default_rbo_p,
    feature_sensitivity,
    kendall_tau,
    l2_distance,
    metric_params,
    pairwise_aggregate,
    pairwise_values,
    prefix_agreements,
    rbo_sensitivity,
    summarize_values,
    topk_jaccard,
)


def _vec(values, explainer_seed=0):
    names = tuple(f"f{i}" for i in range(len(values)))
    return ExplanationVector(np.asarray(values, dtype=float), names, "x", SeedPair(0, explainer_seed))


def test_l2_distance():
    """欧氏距离"""
    assert l2_distance(_vec([0.0, 3.0]), _vec([4.0, 0.0])) == pytest.approx(5.0)
    assert l2_distance(_vec([0.1, 0.2]), _vec([0.1, 0.2])) == 0.0


def test_l2_requires_same_schema():
    """特征名不一致时报错"""
    other = ExplanationVector(np.array([1.0, 2.0]), ("a", "b"), "x", SeedPair(0, 0))
    with pytest.raises(InputValidationError):
        l2_distance(_vec([1.0, 2.0]), other)


def test_topk_jaccard_values():
    """Jaccard 距离的典型取值"""
    a = Ranking((0, 1, 2, 3, 4))
    assert topk_jaccard(a, a, 3) == 0.0
    assert topk_jaccard(a, Ranking((3, 4, 0, 1, 2)), 2) == 1.0
    assert topk_jaccard(a, Ranking((0, 1, 3, 2, 4)), 3) == pytest.approx(0.5)


def test_topk_jaccard_full_depth_is_zero():
    """k = d 时任意两个排序的距离为0"""
    assert topk_jaccard(Ranking((0, 1, 2)), Ranking((2, 1, 0)), 3) == 0.0


def test_topk_jaccard_invalid_k():
    """k 超出 [1, d] 报错"""
    with pytest.raises(InputValidationError):
        topk_jaccard(Ranking((0, 1, 2)), Ranking((0, 1, 2)), 4)
    with pytest.raises(InputValidationError):
        topk_jaccard(Ranking((0, 1, 2)), Ranking((0, 1, 2)), 0)


def test_topk_jaccard_uses_magnitudes():
    """由归因向量诱导排序时按 |φ|"""
    assert topk_jaccard(_vec([0.9, -0.8, 0.1]), _vec([-0.9, 0.8, 0.05]), 2) == 0.0


def test_prefix_agreements():
    """各深度前缀重合比例"""
    agreements = prefix_agreements(Ranking((0, 1, 2)), Ranking((1, 0, 2)))
    assert list(agreements) == [0.0, 1.0, 1.0]


def test_rbo_identical_is_zero():
    """相同排序的敏感度为0"""
    r = Ranking((3, 1, 0, 2))
    assert rbo_sensitivity(r, r) == 0.0


def test_rbo_reversed_pair_closed_form():
    """d=2 的反序：1 - [(1-p)(0 + p) + p^2]"""
    p = 0.5
    expected = 1.0 - ((1 - p) * (0.0 + p * 1.0) + p ** 2 * 1.0)
    assert rbo_sensitivity(Ranking((0, 1)), Ranking((1, 0)), p) == pytest.approx(expected)


def test_rbo_default_p():
    """缺省 p = 1 - 1/d"""
    assert default_rbo_p(4) == 0.75
    a, b = Ranking((0, 1, 2, 3)), Ranking((1, 0, 3, 2))
    assert rbo_sensitivity(a, b) == rbo_sensitivity(a, b, 0.75)


def test_rbo_in_unit_interval_and_symmetric():
    """全部 d=4 排列对上位于 [0,1] 且对称"""
    perms = [Ranking(p) for p in itertools.permutations(range(4))]
    for a, b in itertools.combinations(perms, 2):
        value = rbo_sensitivity(a, b, 0.6)
        assert 0.0 <= value <= 1.0
        assert value == pytest.approx(rbo_sensitivity(b, a, 0.6), abs=1e-15)


def test_rbo_top_disagreement_weighs_more():
    """顶部的交换比底部的交换更敏感"""
    base = Ranking((0, 1, 2, 3, 4))
    top_swap = Ranking((1, 0, 2, 3, 4))
    bottom_swap = Ranking((0, 1, 2, 4, 3))
    assert rbo_sensitivity(base, top_swap, 0.8) > rbo_sensitivity(base, bottom_swap, 0.8)


def test_rbo_invalid_p():
    """p 必须位于 (0, 1)"""
    with pytest.raises(InputValidationError):
        rbo_sensitivity(Ranking((0, 1)), Ranking((1, 0)), 1.0)


def test_kendall_tau():
    """逆序对数"""
    assert kendall_tau(Ranking((0, 1, 2, 3)), Ranking((0, 1, 2, 3))) == 0
    assert kendall_tau(Ranking((0, 1, 2, 3)), Ranking((3, 2, 1, 0))) == 6
    assert kendall_tau(Ranking((0, 1, 2)), Ranking((1, 0, 2))) == 1


def test_feature_sensitivity_formula():
    """逐特征平均两两绝对差与平均 |φ|"""
    runs = [_vec([1.0, 0.0]), _vec([3.0, 0.0]), _vec([2.0, -1.0])]
    profile = feature_sensitivity(runs)
    # 特征0：|1-3| + |1-2| + |3-2| = 4，除以 N(N-1)/2 = 3
    assert profile.sensitivity[0] == pytest.approx(4.0 / 3.0)
    assert profile.sensitivity[1] == pytest.approx(2.0 / 3.0)
    assert profile.mean_abs[1] == pytest.approx(1.0 / 3.0)
    assert profile.most_unstable(1)[0]["feature"] == "f0"


def test_feature_sensitivity_constant_runs_zero():
    """各次运行相同时敏感度为0"""
    profile = feature_sensitivity([_vec([0.2, -0.4, 0.1])] * 4)
    assert np.all(profile.sensitivity == 0.0)


def test_feature_sensitivity_needs_two_runs():
    """少于两次运行报错"""
    with pytest.raises(InputValidationError):
        feature_sensitivity([_vec([0.1, 0.2])])


def test_pairwise_values_cover_all_pairs():
    """N次运行有 N(N-1)/2 个无序对"""
    runs = [_vec([float(i), 1.0, 0.5]) for i in range(5)]
    values = pairwise_values(runs, MetricKind.L2)
    assert [(i, j) for i, j, _ in values] == list(itertools.combinations(range(5), 2))


def test_pairwise_aggregate_is_order_invariant():
    """汇总结果与运行顺序无关（逐位相同）"""
    rng = np.random.default_rng(0)
    runs = [_vec(rng.normal(size=6) * 0.1, seed) for seed in range(7)]
    shuffled = [runs[i] for i in rng.permutation(7)]
    for metric in MetricKind:
        a = pairwise_aggregate(runs, metric)
        b = pairwise_aggregate(shuffled, metric)
        assert a.mean == b.mean
        assert a.values == b.values
    fa, fb = feature_sensitivity(runs), feature_sensitivity(shuffled)
    assert np.array_equal(fa.sensitivity, fb.sensitivity)


def test_l2_scale_equivariance():
    """归因乘以2的幂时 ℓ2 精确按比例缩放，排序度量不变"""
    rng = np.random.default_rng(1)
    runs = [_vec(rng.normal(size=5), seed) for seed in range(4)]
    scaled = [_vec(r.values * 4.0, r.seed_pair.explainer_seed) for r in runs]
    assert pairwise_aggregate(scaled, "l2").mean == pytest.approx(
        4.0 * pairwise_aggregate(runs, "l2").mean, rel=1e-12)
    assert pairwise_aggregate(scaled, "rbo").values == pairwise_aggregate(runs, "rbo").values


def test_summaries_and_params():
    """均值、中位数与度量参数"""
    summary = summarize_values(MetricKind.JACCARD_TOPK, [0.5, 0.0, 1.0, 0.5], {"k": 3})
    assert summary.mean == 0.5 and summary.median == 0.5
    assert summary.to_dict()["n_pairs"] == 4
    assert metric_params("rbo", 4) == {"p": 0.75}
    assert metric_params("jaccard_topk", 4, k=2) == {"k": 2}
    assert metric_params("l2", 4) == {}
    assert math.isclose(summarize_values("l2", [1.0, 2.0]).mean, 1.5)
