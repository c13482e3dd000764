#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
零模型基线测试：Dirichlet闭式解、Mallows抽样与基线带
"""

import itertools
import math

import numpy as np
import pytest

from attribution_types import EstimationError, InputValidationError, Ranking
from disagreement_metrics import MetricKind, rbo_sensitivity, topk_jaccard
from null_baselines import (
    DirichletNullConfig,
    MallowsNullConfig,
    baseline_band,
    default_l2_sweep,
    default_rank_sweep,
    dirichlet_l2_expectation,
    dirichlet_l2_monte_carlo,
    dirichlet_l2_rms,
    inversions,
    jaccard_rows,
    mallows_baseline,
    mallows_distribution_exact,
    mallows_normalizer,
    mallows_sample,
    rbo_rows,
    sample_dirichlet,
    sample_mallows,
)
from seed_streams import derive_stream


def test_dirichlet_closed_form_value():
    """闭式解的手算值"""
    cfg = DirichletNullConfig(d=4, k=2, T=1.0, rho=0.5, kappa=1.0)
    # 2/(1+1) * (1 - 0.25/2 - 0.25/2) = 0.75
    assert dirichlet_l2_expectation(cfg) == pytest.approx(0.75)
    assert dirichlet_l2_rms(cfg) == pytest.approx(math.sqrt(0.75))


def test_dirichlet_closed_form_matches_monte_carlo():
    """蒙特卡洛估计落在闭式解的几个标准误之内"""
    cfg = DirichletNullConfig(d=16, k=3, T=0.4, rho=0.7, kappa=10)
    estimate = dirichlet_l2_monte_carlo(cfg, n_samples=100_000, seed=123)
    assert estimate.n == 100_000
    assert abs(estimate.mean - dirichlet_l2_expectation(cfg)) < 5 * estimate.std_error


def _random_dirichlet_configs(n: int, seed: int):
    rng = np.random.default_rng(seed)
    configs = []
    for _ in range(n):
        d = int(rng.integers(4, 21))
        configs.append(DirichletNullConfig(
            d=d, k=int(rng.integers(1, d)), T=float(rng.uniform(0.1, 2.0)),
            rho=float(rng.uniform(0.2, 0.9)), kappa=float(rng.uniform(2.0, 50.0)),
        ))
    return configs


@pytest.mark.slow
@pytest.mark.parametrize(
    "cfg",
    [DirichletNullConfig(d=16, k=3, T=0.4, rho=0.7, kappa=10)] + _random_dirichlet_configs(20, 2024),
    ids=lambda cfg: "d{d}-k{k}-rho{rho:.2f}-kappa{kappa:.1f}".format(**cfg.label()),
)
def test_dirichlet_closed_form_relative_error(cfg):
    """10⁶ 对样本下蒙特卡洛估计与闭式解的相对误差小于1%"""
    closed = dirichlet_l2_expectation(cfg)
    estimate = dirichlet_l2_monte_carlo(cfg, n_samples=1_000_000, seed=31, n_jobs=2)
    assert abs(estimate.mean - closed) / closed < 0.01


def test_dirichlet_monte_carlo_deterministic():
    """相同种子得到逐位相同的估计"""
    cfg = DirichletNullConfig(d=8, k=3, T=1.0, rho=0.6, kappa=5)
    a = dirichlet_l2_monte_carlo(cfg, n_samples=2000, seed=1)
    b = dirichlet_l2_monte_carlo(cfg, n_samples=2000, seed=1)
    assert a == b


def test_dirichlet_requires_k_below_d():
    """k >= d 的配置无效"""
    with pytest.raises(ValueError):
        DirichletNullConfig(d=3, k=3, T=1.0, rho=0.5, kappa=1.0)


def test_dirichlet_degenerate_shares_cannot_be_sampled():
    """ρ=1 时尾部浓度为0，抽样报估计错误"""
    cfg = DirichletNullConfig(d=4, k=2, T=1.0, rho=1.0, kappa=5)
    with pytest.raises(EstimationError):
        dirichlet_l2_monte_carlo(cfg, n_samples=10, seed=0)
    with pytest.raises(InputValidationError):
        sample_dirichlet([1.0, 0.0], 3, derive_stream(0, 8))


def test_sample_dirichlet_on_simplex():
    """样本位于单纯形上"""
    samples = sample_dirichlet([0.5, 1.0, 2.0], 500, derive_stream(3, 8))
    assert np.allclose(samples.sum(axis=1), 1.0)
    assert np.all(samples >= 0.0)


def test_mallows_normalizer_matches_enumeration():
    """闭式归一化常数等于显式求和"""
    for d, q in [(3, 0.4), (4, 0.7), (5, 0.2)]:
        explicit = math.fsum(q ** inversions(p) for p in itertools.permutations(range(d)))
        assert mallows_normalizer(d, q) == pytest.approx(explicit, rel=1e-12)


def test_mallows_exact_distribution_sums_to_one():
    """精确分布之和为1，单位排列概率最大"""
    dist = mallows_distribution_exact(4, 0.5)
    assert math.fsum(dist.values()) == pytest.approx(1.0)
    assert max(dist, key=dist.get) == (0, 1, 2, 3)


def test_mallows_sampler_matches_exact_distribution():
    """重复插入法的经验频率与精确分布一致"""
    d, q, n = 3, 0.5, 120_000
    samples = sample_mallows(d, q, n, derive_stream(5, 9))
    exact = mallows_distribution_exact(d, q)
    keys, counts = np.unique(samples, axis=0, return_counts=True)
    observed = {tuple(int(v) for v in k): c / n for k, c in zip(keys, counts)}
    for perm, prob in exact.items():
        assert observed.get(perm, 0.0) == pytest.approx(prob, abs=0.01)


@pytest.mark.slow
@pytest.mark.parametrize("d", [3, 4, 5])
@pytest.mark.parametrize("q", [0.3, 0.4, 0.5])
def test_mallows_sampler_total_variation(d, q):
    """20万个样本的经验分布与精确分布的总变差距离小于0.01"""
    n = 200_000
    samples = sample_mallows(d, q, n, derive_stream(17, 9, d))
    exact = mallows_distribution_exact(d, q)
    keys, counts = np.unique(samples, axis=0, return_counts=True)
    observed = {tuple(int(v) for v in k): c / n for k, c in zip(keys, counts)}
    assert set(observed) <= set(exact)
    tv = 0.5 * math.fsum(abs(observed.get(perm, 0.0) - prob) for perm, prob in exact.items())
    assert tv < 0.01


def test_mallows_zero_dispersion_is_identity():
    """q=0 时总是单位排列"""
    samples = sample_mallows(5, 0.0, 100, derive_stream(0, 9))
    assert np.all(samples == np.arange(5))
    assert mallows_sample(5, 0.0, seed=3) == (0, 1, 2, 3, 4)


def test_mallows_rejects_invalid_q():
    """q 必须位于 [0, 1)"""
    with pytest.raises(InputValidationError):
        sample_mallows(3, 1.0, 5, derive_stream(0, 9))


def test_vectorised_rows_match_pairwise_metrics():
    """逐行向量化度量与两两度量一致"""
    rng = derive_stream(11, 9)
    a = np.vstack([rng.permutation(6) for _ in range(50)])
    b = np.vstack([rng.permutation(6) for _ in range(50)])
    b[0] = a[0]
    jac = jaccard_rows(a, b, 3)
    rbo = rbo_rows(a, b, 0.7)
    for i in range(50):
        ra, rb = Ranking(tuple(a[i])), Ranking(tuple(b[i]))
        assert jac[i] == pytest.approx(topk_jaccard(ra, rb, 3), abs=1e-12)
        assert rbo[i] == pytest.approx(rbo_sensitivity(ra, rb, 0.7), abs=1e-12)
    assert rbo[0] == 0.0


def test_mallows_baseline_center_invariance():
    """共享中心重标号不改变基线"""
    cfg = MallowsNullConfig(d=6, q=0.6, k=3, n_samples=3000)
    for functional in ("jaccard_topk", "rbo"):
        plain = mallows_baseline(cfg, functional, seed=4)
        centred = mallows_baseline(cfg, functional, seed=4, center=[5, 3, 1, 0, 2, 4])
        assert plain.mean == pytest.approx(centred.mean, abs=1e-12)


def test_mallows_baseline_grows_with_dispersion():
    """离散参数越大，排序分歧越大"""
    low = mallows_baseline(MallowsNullConfig(d=8, q=0.2, n_samples=5000), "rbo", seed=2)
    high = mallows_baseline(MallowsNullConfig(d=8, q=0.8, n_samples=5000), "rbo", seed=2)
    assert low.mean < high.mean


def test_mallows_baseline_rejects_l2():
    """Mallows基线不支持 ℓ2"""
    with pytest.raises(InputValidationError):
        mallows_baseline(MallowsNullConfig(d=4, q=0.5, n_samples=10), "l2", seed=0)


def test_mallows_baseline_independent_of_jobs():
    """并行分区数不影响结果"""
    cfg = MallowsNullConfig(d=6, q=0.5, n_samples=60_000)
    serial = mallows_baseline(cfg, "jaccard_topk", seed=9, n_jobs=1)
    parallel = mallows_baseline(cfg, "jaccard_topk", seed=9, n_jobs=2)
    assert serial == parallel


def test_l2_band_over_default_sweep():
    """默认 ρ×κ 扫描上的 ℓ2 基线带"""
    band = baseline_band(MetricKind.L2, default_l2_sweep(16, 3, 0.4))
    assert len(band.points) == 3 * 11
    assert 0.0 < band.lower <= band.upper
    assert band.upper == pytest.approx(math.sqrt(band.upper_squared))
    data = band.to_dict()
    assert data["value_kind"] == "rms"


def test_jaccard_band_zero_dispersion():
    """q=0 时 Jaccard 基线带为 [0, 0]"""
    band = baseline_band("jaccard_topk", default_rank_sweep(10, [0.0], n_samples=500), seed=1)
    assert band.lower == 0.0 and band.upper == 0.0


def test_rank_band_reproducible_and_needs_seed():
    """排序基线带需要显式种子，相同种子结果相同"""
    sweep = default_rank_sweep(8, [0.3, 0.5], n_samples=2000)
    assert baseline_band("rbo", sweep, seed=5).to_dict() == baseline_band("rbo", sweep, seed=5).to_dict()
    with pytest.raises(InputValidationError):
        baseline_band("rbo", sweep)


def test_band_rejects_empty_sweep():
    """空扫描报错"""
    with pytest.raises(InputValidationError):
        baseline_band("l2", [])
