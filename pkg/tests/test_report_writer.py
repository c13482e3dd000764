#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
报告输出测试：JSON转换、CSV格式与失败时的清理
"""

import json

import numpy as np
import pandas as pd
import pytest

from report_writer import StagedOutput, dumps_json, to_jsonable, write_csv, write_json


def test_to_jsonable_converts_numpy_and_non_finite():
    """numpy类型转为Python类型，非有限值转为null"""
    data = to_jsonable({"a": np.int64(3), "b": np.array([1.5, np.nan]), "c": float("inf"),
                        "d": (np.float32(0.5),)})
    assert data == {"a": 3, "b": [1.5, None], "c": None, "d": [0.5]}
    assert json.loads(dumps_json({"x": np.nan})) == {"x": None}


def test_csv_uses_crlf(tmp_path):
    """CSV以CRLF换行并保留列顺序"""
    path = write_csv(tmp_path / "t.csv", pd.DataFrame({"b": [1, 2], "a": ["x", "y,z"]}))
    raw = path.read_bytes()
    assert raw.startswith(b"b,a\r\n")
    assert b'"y,z"' in raw
    assert raw.count(b"\r\n") == 3


def test_staged_output_moves_files_on_success(tmp_path):
    """成功时文件移入目标目录，不留临时目录"""
    out_dir = tmp_path / "out"
    with StagedOutput(str(out_dir)) as staged:
        write_json(staged.path("report.json"), {"ok": True})
    assert json.loads((out_dir / "report.json").read_text(encoding="utf-8")) == {"ok": True}
    assert not list(tmp_path.glob(".partial-*"))


def test_staged_output_removes_partial_files_on_failure(tmp_path):
    """失败时删除已写入的部分输出"""
    out_dir = tmp_path / "out"
    with pytest.raises(RuntimeError):
        with StagedOutput(str(out_dir)) as staged:
            write_json(staged.path("report.json"), {"ok": False})
            raise RuntimeError("写表失败")
    assert not out_dir.exists()
    assert not list(tmp_path.glob(".partial-*"))
