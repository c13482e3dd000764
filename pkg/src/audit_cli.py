#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
解释多重性审计命令行工具

子命令：
  audit     按配置文件执行一次审计活动
  dissect   并排运行 model_induced / explainer_induced（可选 overall）
  baseline  打印零模型基线带
  explain   对单个实例计算一次解释
  train     训练并保存一个流水线模型

所有随机性都必须来自显式种子；退出码 0 成功，1 运行失败，2 配置或参数错误。
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from attribution_types import (
    ExplainerKind,
    InputValidationError,
    ModelClass,
    MultiplicityError,
    ranking_of,
)
from disagreement_metrics import DEFAULT_TOP_K, MetricKind
from multiplicity_protocol import dissect, load_campaign, load_dissection, run_campaign
from null_baselines import (
    DEFAULT_KAPPA_SWEEP,
    DEFAULT_MALLOWS_SAMPLES,
    DEFAULT_Q_SWEEP,
    DEFAULT_RHO_SWEEP,
    DirichletNullConfig,
    baseline_band,
    default_l2_sweep,
    default_rank_sweep,
    dirichlet_l2_monte_carlo,
)
from pipeline_models import DEFAULT_GRIDS, PipelineModel, grid_search, train
from report_writer import dumps_json, write_campaign_report, write_dissection_report, write_json
from settings import TOOL_NAME, TOOL_VERSION, configure_logging, load_environment
from shap_explainer import explain, sample_background
from tabular_data import DatasetSchema, load_csv, stratified_folds

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2

BASELINE_METRICS = {"l2": MetricKind.L2, "jaccard": MetricKind.JACCARD_TOPK, "rbo": MetricKind.RBO}


def _require(value: Optional[int], flag: str) -> int:
    if value is None:
        raise InputValidationError(f"必须显式提供 {flag}（不使用隐式随机种子）")
    return value


def _load_data(csv_path: str, schema_path: str):
    return load_csv(csv_path, DatasetSchema.from_file(schema_path))


def cmd_audit(args: argparse.Namespace) -> int:
    """执行审计活动"""
    campaign = load_campaign(args.config)
    if args.dry_run:
        print(dumps_json(campaign.model_dump(mode="json")))
        return EXIT_OK
    schema = DatasetSchema.from_file(campaign.dataset.schema_file)
    campaign.check_against_schema(schema)
    dataset = load_csv(campaign.dataset.csv, schema)
    report = run_campaign(campaign, dataset, n_jobs=args.jobs)
    out_dir = Path(args.out_dir) / (f"audit-{dataset.dataset_id}-{campaign.model_class.value}-"
                                    f"{campaign.setting.value}")
    for name, path in write_campaign_report(report, str(out_dir)).items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_dissect(args: argparse.Namespace) -> int:
    """执行分解"""
    plan = load_dissection(args.config)
    if args.dry_run:
        print(dumps_json(plan.model_dump(mode="json")))
        return EXIT_OK
    schema = DatasetSchema.from_file(plan.dataset.schema_file)
    for campaign in plan.campaigns():
        campaign.check_against_schema(schema)
    dataset = load_csv(plan.dataset.csv, schema)
    report = dissect(plan, dataset, n_jobs=args.jobs)
    out_dir = Path(args.out_dir) / f"dissect-{dataset.dataset_id}-{plan.model_class.value}"
    for name, path in write_dissection_report(report, str(out_dir)).items():
        print(f"{name}: {path}")
    return EXIT_OK


def build_baseline_document(args: argparse.Namespace) -> Dict[str, Any]:
    """计算基线带，返回不含时间戳的JSON文档"""
    metric = BASELINE_METRICS[args.metric]
    if metric == MetricKind.L2:
        sweep = default_l2_sweep(args.d, args.k, args.total_mass, args.rho, args.kappa)
        band = baseline_band(metric, sweep)
        document = band.to_dict()
        if args.monte_carlo:
            seed = _require(args.seed, "--seed")
            for point, cfg in zip(document["points"], sweep):
                estimate = dirichlet_l2_monte_carlo(cfg, args.monte_carlo, seed, n_jobs=args.jobs)
                point["monte_carlo_squared"] = estimate.to_dict()
            document["seed"] = seed
    else:
        seed = _require(args.seed, "--seed")
        sweep = default_rank_sweep(args.d, args.q, args.k, args.p, args.n_samples)
        document = baseline_band(metric, sweep, seed, n_jobs=args.jobs).to_dict()
    return {"tool": {"name": TOOL_NAME, "version": TOOL_VERSION}, "band": document}


def cmd_baseline(args: argparse.Namespace) -> int:
    """打印基线带"""
    document = build_baseline_document(args)
    band = document["band"]
    print(f"{band['metric']} 基线带: [{band['lower']:.6f}, {band['upper']:.6f}]")
    for point in band["points"]:
        params = ", ".join(f"{k}={v}" for k, v in point.items() if k not in ("value", "monte_carlo_squared"))
        print(f"  {params}: {point['value']:.6f}")
    if args.output:
        write_json(Path(args.output), document)
        print(f"JSON已写入: {args.output}")
    else:
        print(dumps_json(document))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """训练并保存模型"""
    model_seed = _require(args.model_seed, "--model-seed")
    dataset = _load_data(args.data, args.schema)
    split = dataset
    if args.fold is not None:
        plan = stratified_folds(dataset, args.n_folds, _require(args.fold_seed, "--fold-seed"))
        split = dataset.subset(plan.train_indices(args.fold))
    hyperparams = json.loads(args.hyperparams) if args.hyperparams else {}
    if not isinstance(hyperparams, dict):
        raise InputValidationError("--hyperparams 必须是JSON对象")
    model_class = ModelClass(args.model_class)
    if args.tune:
        grid = [{**hyperparams, **config} for config in DEFAULT_GRIDS[model_class]]
        hyperparams = grid_search(model_class, split, grid, model_seed)
    model = train(model_class, split, hyperparams, model_seed)
    output = Path(args.output or Path(args.out_dir) / f"model-{model_class.value}-{model_seed}.json")
    output.parent.mkdir(parents=True, exist_ok=True)
    model.save(str(output))
    print(f"模型已保存: {output} (训练准确率 {model.training_accuracy:.4f})")
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    """对单个实例计算解释"""
    explainer_seed = _require(args.explainer_seed, "--explainer-seed")
    model = PipelineModel.load(args.model)
    if args.model_seed is not None and model.model_seed != args.model_seed:
        raise InputValidationError(
            f"模型文件的种子为 {model.model_seed}, 与 --model-seed {args.model_seed} 不一致"
        )
    dataset = _load_data(args.data, args.schema)
    if tuple(dataset.feature_names) != tuple(model.feature_names):
        raise InputValidationError("数据集特征与模型特征不一致")

    fold = 0
    pool = dataset
    if args.fold is not None:
        plan = stratified_folds(dataset, args.n_folds, _require(args.fold_seed, "--fold-seed"))
        fold = args.fold
        pool = dataset.subset(plan.test_indices(fold))
    row = pool.row(args.instance)

    if model.training_rows:
        train_split = dataset.subset(dataset.positions_of(model.training_rows))
    else:
        logger.warning("模型文件没有记录训练行, 背景集将从整个数据集抽取")
        train_split = dataset
    bg = sample_background(train_split, args.background_size, explainer_seed, fold)
    kind = ExplainerKind.EXACT if args.exact else ExplainerKind.KERNEL
    instance_id = f"{dataset.dataset_id}/row{int(pool.source_rows[args.instance])}"
    result = explain(model, row, bg, kind, explainer_seed, n_coalitions=args.n_coalitions,
                     fold=fold, instance=args.instance, instance_id=instance_id)

    order = ranking_of(result.explanation).order
    document = {
        "tool": {"name": TOOL_NAME, "version": TOOL_VERSION},
        "explanation": result.to_dict(),
        "top_k": [model.feature_names[i] for i in order[:args.top_k]],
        "background": bg.to_dict(),
    }
    if args.output:
        write_json(Path(args.output), document)
        print(f"解释已写入: {args.output}")
    else:
        print(dumps_json(document))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="Shapley解释多重性审计工具")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")
    parser.add_argument("--log-level", help="日志级别 (DEBUG/INFO/WARNING/ERROR)")
    parser.add_argument("--jobs", type=int, help="并行工作单元数")
    parser.add_argument("--out-dir", help="输出根目录")
    subparsers = parser.add_subparsers(dest="command", help="子命令")

    # audit命令
    audit_parser = subparsers.add_parser("audit", help="执行审计活动")
    audit_parser.add_argument("--config", required=True, help="审计配置文件 (YAML)")
    audit_parser.add_argument("--dry-run", action="store_true", help="只回显配置, 不计算")
    audit_parser.set_defaults(handler=cmd_audit)

    # dissect命令
    dissect_parser = subparsers.add_parser("dissect", help="分解模型诱导与解释器诱导的多重性")
    dissect_parser.add_argument("--config", required=True, help="分解配置文件 (YAML)")
    dissect_parser.add_argument("--dry-run", action="store_true", help="只回显配置, 不计算")
    dissect_parser.set_defaults(handler=cmd_dissect)

    # baseline命令
    baseline_parser = subparsers.add_parser("baseline", help="零模型基线带")
    baseline_parser.add_argument("metric", choices=sorted(BASELINE_METRICS), help="度量")
    baseline_parser.add_argument("--d", type=int, default=16, help="特征数")
    baseline_parser.add_argument("--k", type=int, default=DEFAULT_TOP_K, help="top-k 深度")
    baseline_parser.add_argument("--total-mass", type=float, default=0.4, help="ℓ2 零模型的总质量 T")
    baseline_parser.add_argument("--rho", type=float, nargs="+", default=list(DEFAULT_RHO_SWEEP))
    baseline_parser.add_argument("--kappa", type=float, nargs="+", default=list(DEFAULT_KAPPA_SWEEP))
    baseline_parser.add_argument("--q", type=float, nargs="+", default=list(DEFAULT_Q_SWEEP))
    baseline_parser.add_argument("--p", type=float, help="RBO参数（缺省 1 - 1/d）")
    baseline_parser.add_argument("--n-samples", type=int, default=DEFAULT_MALLOWS_SAMPLES,
                                 help="Mallows蒙特卡洛样本对数")
    baseline_parser.add_argument("--monte-carlo", type=int, default=0,
                                 help="为 ℓ2 闭式解附加蒙特卡洛验证的样本对数")
    baseline_parser.add_argument("--seed", type=int, help="蒙特卡洛种子")
    baseline_parser.add_argument("--output", "-o", help="JSON输出文件")
    baseline_parser.set_defaults(handler=cmd_baseline)

    # train命令
    train_parser = subparsers.add_parser("train", help="训练并保存模型")
    train_parser.add_argument("--model-class", required=True, choices=[m.value for m in ModelClass])
    train_parser.add_argument("--data", required=True, help="CSV数据文件")
    train_parser.add_argument("--schema", required=True, help="模式文件 (YAML)")
    train_parser.add_argument("--model-seed", type=int, help="模型种子")
    train_parser.add_argument("--fold", type=int, help="只在该折的训练划分上训练")
    train_parser.add_argument("--fold-seed", type=int, help="折划分种子")
    train_parser.add_argument("--n-folds", type=int, default=5, help="折数")
    train_parser.add_argument("--hyperparams", help="超参数 (JSON对象)")
    train_parser.add_argument("--tune", action="store_true", help="在默认网格上搜索超参数")
    train_parser.add_argument("--output", "-o", help="模型输出文件")
    train_parser.set_defaults(handler=cmd_train)

    # explain命令
    explain_parser = subparsers.add_parser("explain", help="解释单个实例")
    explain_parser.add_argument("--model", required=True, help="模型文件")
    explain_parser.add_argument("--data", required=True, help="CSV数据文件")
    explain_parser.add_argument("--schema", required=True, help="模式文件 (YAML)")
    explain_parser.add_argument("--instance", type=int, required=True, help="实例下标")
    explain_parser.add_argument("--explainer-seed", type=int, help="解释器种子")
    explain_parser.add_argument("--model-seed", type=int,
                                help="期望的模型种子（与模型文件不一致时报错）")
    explain_parser.add_argument("--exact", action="store_true", help="使用精确枚举")
    explain_parser.add_argument("--background-size", type=int, default=100, help="背景集大小K")
    explain_parser.add_argument("--n-coalitions", type=int, help="KernelSHAP联盟预算")
    explain_parser.add_argument("--top-k", type=int, default=DEFAULT_TOP_K, help="列出前k个特征")
    explain_parser.add_argument("--fold", type=int, help="实例下标指向该折的测试划分")
    explain_parser.add_argument("--fold-seed", type=int, help="折划分种子")
    explain_parser.add_argument("--n-folds", type=int, default=5, help="折数")
    explain_parser.add_argument("--output", "-o", help="JSON输出文件")
    explain_parser.set_defaults(handler=cmd_explain)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """命令行入口"""
    parser = build_parser()
    args = parser.parse_args(argv)
    env = load_environment()
    args.log_level = args.log_level or env["log_level"]
    args.jobs = args.jobs if args.jobs is not None else env["jobs"]
    args.out_dir = args.out_dir or env["out_dir"]
    configure_logging(args.log_level)

    if not getattr(args, "handler", None):
        parser.print_help()
        return EXIT_INVALID
    if args.jobs < 1:
        print("错误: --jobs 必须 >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.handler(args)
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"配置或参数错误: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_INVALID
    except MultiplicityError as e:
        logger.error(f"运行失败: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        print("已中断", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
