"""
运行结果索引
负责结果目录的组织、运行记录登记与检索；report 子命令从索引汇总各次运行
"""

import hashlib
import json
import logging
import shutil
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

logger = logging.getLogger("gridforge.run_store")

INDEX_FILE = "run_index.json"
RUN_KINDS = ("schedule", "plan", "verify", "compare", "sweep")


class RunStore:
    """
    运行结果管理器

    功能：
    1. 运行目录分配（基于参数的哈希）
    2. 运行记录登记（参数、摘要、创建时间）
    3. 检索与统计
    4. 索引损坏或缺失时扫描目录重建
    """

    def __init__(self, results_dir: Union[str, Path]):
        """
        Args:
            results_dir: 结果根目录
        """
        self.results_dir = Path(results_dir)
        self.index_file = self.results_dir / INDEX_FILE
        self.index = self._load_index()

    def _load_index(self) -> Dict[str, Any]:
        """加载运行索引"""
        if self.index_file.exists():
            try:
                with open(self.index_file, "r", encoding="utf-8") as f:
                    index = json.load(f)
                if isinstance(index.get("runs"), dict):
                    return index
                logger.warning("运行索引格式无效，将创建新索引")
            except Exception as e:
                logger.warning(f"加载运行索引失败: {e}，将创建新索引")
        return {"runs": {}, "stats": {"created": _now()}}

    def _save_index(self) -> None:
        try:
            self.results_dir.mkdir(parents=True, exist_ok=True)
            with open(self.index_file, "w", encoding="utf-8") as f:
                json.dump(self.index, f, indent=2, ensure_ascii=False)
        except Exception as e:
            logger.error(f"保存运行索引失败: {e}")

    @staticmethod
    def generate_run_key(kind: str, **params) -> str:
        """
        生成运行键（基于参数的哈希）

        Args:
            kind: 运行类别 (schedule, plan, verify, compare, sweep)
            **params: 运行参数

        Returns:
            运行键
        """
        param_str = json.dumps(params, sort_keys=True, ensure_ascii=False, default=str)
        param_hash = hashlib.md5(param_str.encode()).hexdigest()[:12]
        return f"{kind}_{param_hash}"

    def run_dir(self, kind: str, name: Optional[str] = None, **params) -> Path:
        """分配运行目录；name 为空时使用参数哈希"""
        if kind not in RUN_KINDS:
            raise ValueError(f"unknown run kind {kind!r}")
        path = self.results_dir / (name or self.generate_run_key(kind, **params))
        path.mkdir(parents=True, exist_ok=True)
        return path

    def register(
        self,
        kind: str,
        run_dir: Union[str, Path],
        params: Optional[Dict[str, Any]] = None,
        summary: Optional[Dict[str, Any]] = None,
    ) -> str:
        """
        登记一次运行，并在运行目录写出 summary.json

        Returns:
            运行键（运行目录名）
        """
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        key = run_dir.name
        entry = {
            "kind": kind,
            "dir": str(run_dir.resolve().relative_to(self.results_dir.resolve()))
            if _is_within(run_dir, self.results_dir)
            else str(run_dir.resolve()),
            "params": params or {},
            "summary": summary or {},
            "created_at": _now(),
        }
        with open(run_dir / "summary.json", "w", encoding="utf-8") as f:
            json.dump({k: entry[k] for k in ("kind", "params", "summary")}, f, indent=2, ensure_ascii=False, default=str)
        self.index["runs"][key] = entry
        self._save_index()
        logger.info(f"📁 已登记运行 {key} ({kind})")
        return key

    def get(self, key: str) -> Optional[Dict[str, Any]]:
        return self.index["runs"].get(key)

    def path_of(self, key: str) -> Path:
        entry = self.index["runs"][key]
        path = Path(entry["dir"])
        return path if path.is_absolute() else self.results_dir / path

    def list_runs(self, kind: Optional[str] = None, limit: Optional[int] = None) -> List[Dict[str, Any]]:
        """
        运行列表（按创建时间升序）

        Args:
            kind: 可选，指定类别
            limit: 返回条目数量限制

        Returns:
            每个条目包含 key、kind、dir、params、summary、created_at
        """
        result = [
            {"key": key, **entry}
            for key, entry in self.index["runs"].items()
            if kind is None or entry.get("kind") == kind
        ]
        result.sort(key=lambda x: (x.get("created_at", 0), x["key"]))
        return result[:limit] if limit else result

    def remove(self, key: str, delete_files: bool = True) -> bool:
        if key not in self.index["runs"]:
            return False
        path = self.path_of(key)
        del self.index["runs"][key]
        if delete_files and path.exists():
            shutil.rmtree(path)
        self._save_index()
        logger.debug(f"删除运行记录: {key}")
        return True

    def rebuild(self) -> int:
        """
        扫描结果目录中的 summary.json 重建索引

        Returns:
            恢复的运行数
        """
        runs = {}
        if self.results_dir.exists():
            for summary_file in sorted(self.results_dir.glob("*/summary.json")):
                try:
                    with open(summary_file, "r", encoding="utf-8") as f:
                        data = json.load(f)
                except Exception as e:
                    logger.warning(f"跳过无法读取的运行摘要 {summary_file}: {e}")
                    continue
                run_dir = summary_file.parent
                runs[run_dir.name] = {
                    "kind": data.get("kind", "plan"),
                    "dir": run_dir.name,
                    "params": data.get("params", {}),
                    "summary": data.get("summary", {}),
                    "created_at": int(summary_file.stat().st_mtime),
                }
        self.index["runs"] = runs
        self._save_index()
        logger.info(f"运行索引已重建: {len(runs)} 条记录")
        return len(runs)

    def stats(self) -> Dict[str, Any]:
        counts = {kind: 0 for kind in RUN_KINDS}
        for entry in self.index["runs"].values():
            counts[entry.get("kind", "plan")] = counts.get(entry.get("kind", "plan"), 0) + 1
        return {"total": len(self.index["runs"]), "kinds": counts}


def _now() -> int:
    return int(datetime.now().timestamp())


def _is_within(path: Path, root: Path) -> bool:
    try:
        path.resolve().relative_to(root.resolve())
        return True
    except ValueError:
        return False
