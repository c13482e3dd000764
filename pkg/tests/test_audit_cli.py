#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
命令行测试：audit / dissect / baseline / train / explain 子命令与退出码
"""

import json

import pytest
import yaml

from audit_cli import EXIT_INVALID, EXIT_OK, main

from conftest import CONFIG_DIR, TOY_CSV, TOY_SCHEMA

DATA_ARGS = ["--data", str(TOY_CSV), "--schema", str(TOY_SCHEMA)]


def _write_config(tmp_path, **overrides):
    with open(CONFIG_DIR / "toy_audit.yaml", "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    data["dataset"] = {"csv": str(TOY_CSV), "schema_file": str(TOY_SCHEMA)}
    data.update(overrides)
    path = tmp_path / "audit.yaml"
    path.write_text(yaml.safe_dump(data, allow_unicode=True), encoding="utf-8")
    return path


def test_audit_writes_report(tmp_path):
    """玩具配置上的审计写出JSON报告与三张CSV表"""
    code = main(["--out-dir", str(tmp_path), "audit", "--config", str(CONFIG_DIR / "toy_audit.yaml")])
    assert code == EXIT_OK
    out_dir = tmp_path / "audit-toy_credit-logreg-explainer_induced"
    for name in ("report.json", "pairwise.csv", "features.csv", "explanations.csv"):
        assert (out_dir / name).is_file()
    report = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
    assert report["tool"]["name"] == "shap-multiplicity"
    assert report["provenance"]["fold_seed"] == 2024
    assert len(report["instances"]) == 10
    assert set(report["baselines"]) == {"l2", "jaccard_topk", "rbo"}


def test_audit_dry_run_only_echoes(tmp_path, capsys):
    """--dry-run 只回显配置"""
    code = main(["--out-dir", str(tmp_path), "audit", "--config",
                 str(CONFIG_DIR / "toy_audit.yaml"), "--dry-run"])
    assert code == EXIT_OK
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["explainer_seeds"] == [101, 102, 103, 104]
    assert not any(tmp_path.iterdir())


def test_audit_rejects_k_above_d_before_training(tmp_path):
    """k > d 在训练之前就被拒绝，不产生输出"""
    config = _write_config(tmp_path, metrics={"top_k": 7})
    out_dir = tmp_path / "results"
    assert main(["--out-dir", str(out_dir), "audit", "--config", str(config)]) == EXIT_INVALID
    assert not out_dir.exists()


def test_audit_invalid_config_exit_code(tmp_path):
    """违反种子约束的配置返回退出码2"""
    config = _write_config(tmp_path, explainer_seeds=[101, 101, 102, 103])
    assert main(["--out-dir", str(tmp_path), "audit", "--config", str(config)]) == EXIT_INVALID
    assert main(["audit", "--config", str(tmp_path / "missing.yaml")]) == EXIT_INVALID


def test_dissect_writes_side_by_side(tmp_path):
    """分解输出包含两种设置的并排分布"""
    code = main(["--out-dir", str(tmp_path), "dissect", "--config",
                 str(CONFIG_DIR / "toy_dissect.yaml")])
    assert code == EXIT_OK
    out_dir = tmp_path / "dissect-toy_credit-mlp"
    document = json.loads((out_dir / "dissection.json").read_text(encoding="utf-8"))
    assert set(document["side_by_side"]["jaccard_topk"]) == {"model_induced", "explainer_induced"}
    assert (out_dir / "pairwise.csv").is_file()


def test_baseline_l2_defaults(capsys):
    """ℓ2 基线使用默认扫描并打印基线带"""
    assert main(["baseline", "l2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "l2 基线带" in out


def test_baseline_l2_monte_carlo(tmp_path):
    """--monte-carlo 为每个扫描点附上蒙特卡洛估计"""
    output = tmp_path / "l2.json"
    code = main(["baseline", "l2", "--rho", "0.7", "--kappa", "10", "--monte-carlo", "5000",
                 "--seed", "3", "--output", str(output)])
    assert code == EXIT_OK
    point = json.loads(output.read_text(encoding="utf-8"))["band"]["points"][0]
    assert point["monte_carlo_squared"]["n"] == 5000


def test_baseline_jaccard_zero_dispersion(tmp_path):
    """q=0 时 Jaccard 基线带为 [0, 0]"""
    output = tmp_path / "j.json"
    assert main(["baseline", "jaccard", "--q", "0", "--n-samples", "500", "--seed", "1",
                 "--output", str(output)]) == EXIT_OK
    band = json.loads(output.read_text(encoding="utf-8"))["band"]
    assert band["lower"] == 0.0 and band["upper"] == 0.0


def test_baseline_same_seed_identical_json(tmp_path):
    """相同种子两次运行得到逐字节相同的JSON"""
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for path in paths:
        assert main(["baseline", "rbo", "--d", "8", "--q", "0.3", "0.5", "--n-samples", "2000",
                     "--seed", "42", "--output", str(path)]) == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_baseline_rank_requires_seed():
    """排序基线缺少种子时拒绝运行"""
    assert main(["baseline", "rbo", "--n-samples", "100"]) == EXIT_INVALID


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "model.json"
    code = main(["train", "--model-class", "logreg", *DATA_ARGS, "--model-seed", "3",
                 "--fold", "0", "--fold-seed", "1", "--hyperparams", '{"epochs": 5}',
                 "--output", str(path)])
    assert code == EXIT_OK
    return path


def test_train_requires_model_seed(tmp_path):
    """train 缺少 --model-seed 时拒绝运行"""
    code = main(["--out-dir", str(tmp_path), "train", "--model-class", "dtree", *DATA_ARGS])
    assert code == EXIT_INVALID


def test_explain_with_exact_flag(tmp_path, model_file):
    """--exact 使用精确枚举并列出 top-k 特征"""
    output = tmp_path / "e.json"
    code = main(["explain", "--model", str(model_file), *DATA_ARGS, "--instance", "2",
                 "--explainer-seed", "4", "--fold", "0", "--fold-seed", "1", "--exact",
                 "--background-size", "50", "--output", str(output)])
    assert code == EXIT_OK
    document = json.loads(output.read_text(encoding="utf-8"))
    assert document["explanation"]["explainer_kind"] == "exact"
    assert document["explanation"]["enumerated"] is True
    assert len(document["top_k"]) == 3
    assert document["background"]["size"] == 50


def test_explain_seeds_give_distinct_backgrounds(tmp_path, model_file):
    """只改变 --explainer-seed 的两次调用使用不同背景集"""
    documents = []
    for seed in ("1", "2"):
        output = tmp_path / f"e{seed}.json"
        assert main(["explain", "--model", str(model_file), *DATA_ARGS, "--instance", "0",
                     "--explainer-seed", seed, "--background-size", "40",
                     "--output", str(output)]) == EXIT_OK
        documents.append(json.loads(output.read_text(encoding="utf-8")))
    assert documents[0]["background"]["source_rows"] != documents[1]["background"]["source_rows"]
    assert documents[0]["explanation"]["prediction"] == documents[1]["explanation"]["prediction"]


def test_explain_requires_explicit_seed(model_file):
    """缺少解释器种子时拒绝运行"""
    assert main(["explain", "--model", str(model_file), *DATA_ARGS, "--instance", "0"]) == EXIT_INVALID


def test_explain_instance_out_of_range(model_file):
    """实例下标越界返回退出码2"""
    code = main(["explain", "--model", str(model_file), *DATA_ARGS, "--instance", "999",
                 "--explainer-seed", "1"])
    assert code == EXIT_INVALID


def test_explain_model_seed_mismatch(model_file):
    """--model-seed 与模型文件不一致时报错"""
    code = main(["explain", "--model", str(model_file), *DATA_ARGS, "--instance", "0",
                 "--explainer-seed", "1", "--model-seed", "4"])
    assert code == EXIT_INVALID
