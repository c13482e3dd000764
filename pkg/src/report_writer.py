#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
报告输出模块

UTF-8 JSON 报告与 RFC-4180 CSV 表（CRLF换行、规范列顺序）。
输出先写入同级的临时目录，全部成功后再移入目标目录；失败时临时目录被删除。
"""

import json
import logging
import math
import shutil
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CSV_LINE_TERMINATOR = "\r\n"


def to_jsonable(value: Any) -> Any:
    """把numpy标量/数组与非有限浮点数转换为JSON可表示的值"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps_json(data: Any) -> str:
    return json.dumps(to_jsonable(data), indent=2, ensure_ascii=False, allow_nan=False)


def write_json(path: Path, data: Any) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_json(data))
        f.write("\n")
    return path


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator=CSV_LINE_TERMINATOR)
    return path


class StagedOutput:
    """在临时目录中写入输出，成功后移入目标目录"""

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.staging: Optional[Path] = None
        self.written: List[str] = []

    def __enter__(self) -> "StagedOutput":
        self.out_dir.parent.mkdir(parents=True, exist_ok=True)
        self.staging = Path(tempfile.mkdtemp(prefix=".partial-", dir=self.out_dir.parent))
        return self

    def path(self, name: str) -> Path:
        self.written.append(name)
        return self.staging / name

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is not None:
            shutil.rmtree(self.staging, ignore_errors=True)
            logger.error(f"输出失败, 已删除未完成的输出: {self.staging}")
            return False
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for name in self.written:
            shutil.move(str(self.staging / name), str(self.out_dir / name))
        shutil.rmtree(self.staging, ignore_errors=True)
        logger.info(f"输出已写入: {self.out_dir} ({', '.join(self.written)})")
        return False


def write_campaign_report(report, out_dir: str) -> Dict[str, str]:
    """
    写出单个审计活动的报告

    Args:
        report: CampaignReport
        out_dir: 输出目录

    Returns:
        文件名 -> 路径
    """
    with StagedOutput(out_dir) as staged:
        write_json(staged.path("report.json"), report.to_dict())
        write_csv(staged.path("pairwise.csv"), report.pairwise_table())
        write_csv(staged.path("features.csv"), report.features_table())
        write_csv(staged.path("explanations.csv"), report.explanations_table())
    return {name: str(Path(out_dir) / name) for name in staged.written}


def write_dissection_report(report, out_dir: str) -> Dict[str, str]:
    """写出分解报告：一个JSON文档 + 合并各设置的CSV表（以 setting 列区分）"""
    with StagedOutput(out_dir) as staged:
        write_json(staged.path("dissection.json"), report.to_dict())
        for name, table in (("pairwise.csv", "pairwise_table"),
                            ("features.csv", "features_table"),
                            ("explanations.csv", "explanations_table")):
            frames = [getattr(r, table)() for r in report.reports]
            write_csv(staged.path(name), pd.concat(frames, ignore_index=True))
    return {name: str(Path(out_dir) / name) for name in staged.written}
