"""
报告渲染服务
汇总结果目录中的各次运行：成本对比表、渗透率扫描表、gap 轨迹，并用 Jinja2 渲染 Markdown 报告
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from .errors import InputError
from .run_store import RunStore

logger = logging.getLogger("gridforge.render")

TEMPLATE_DIR = Path(__file__).parent / "templates"

# 成本分项 -> 表格行名
COST_ROWS = {
    "line_capex": "Line construction cost",
    "v2g_capex": "V2GCS construction cost",
    "dgr_capex": "DGR construction cost",
    "o_and_m": "O&M cost",
    "network_loss": "Network loss cost",
    "total": "Total cost",
}


class RenderService:
    def __init__(self, template_dir: Union[str, Path] = TEMPLATE_DIR, output_dir: Optional[Union[str, Path]] = None):
        self.template_dir = Path(template_dir)
        self.output_dir = Path(output_dir) if output_dir else None
        self.env = Environment(
            loader=FileSystemLoader(str(self.template_dir)),
            undefined=StrictUndefined,
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )
        self.env.filters["num"] = _fmt_number

    def render_template(self, template_name: str, **kwargs) -> str:
        """
        渲染模板为字符串

        Args:
            template_name: 模板文件名
            **kwargs: 传递给模板的数据

        Returns:
            渲染后的文本
        """
        template = self.env.get_template(template_name)
        return template.render(**kwargs)

    def render_to_file(self, template_name: str, filename: str, **kwargs) -> Path:
        if self.output_dir is None:
            raise ValueError("output_dir not configured")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / filename
        path.write_text(self.render_template(template_name, **kwargs), encoding="utf-8")
        logger.info(f"📝 报告已写入 {path}")
        return path


def _fmt_number(value: Any, digits: int = 4) -> str:
    if value is None or (isinstance(value, float) and pd.isna(value)):
        return "-"
    if isinstance(value, (int, float)):
        return f"{value:.{digits}f}"
    return str(value)


# ==================== 汇总表 ====================
def _run_columns(store: RunStore) -> List[Dict[str, Any]]:
    """参与成本对比的列：plan 运行各一列，compare 运行每种方法一列"""
    columns = []
    for run in store.list_runs():
        summary = run.get("summary", {})
        if run["kind"] == "plan" and summary.get("costs"):
            columns.append(
                {
                    "name": summary.get("label") or run["key"],
                    "costs": summary["costs"],
                    "wall_time": summary.get("wall_time"),
                    "status": summary.get("status"),
                }
            )
        elif run["kind"] == "compare":
            for method in ("decomposition", "holistic"):
                outcome = summary.get(method) or {}
                if outcome.get("costs"):
                    columns.append(
                        {
                            "name": f"{method}:{run['key']}",
                            "costs": outcome["costs"],
                            "wall_time": outcome.get("wall_time"),
                            "status": outcome.get("status"),
                        }
                    )
    seen: Dict[str, int] = {}
    for col in columns:
        seen[col["name"]] = seen.get(col["name"], 0) + 1
    counter: Dict[str, int] = {}
    for col in columns:
        if seen[col["name"]] > 1:
            counter[col["name"]] = counter.get(col["name"], 0) + 1
            col["name"] = f"{col['name']}#{counter[col['name']]}"
    return columns


def cost_table(store: RunStore) -> pd.DataFrame:
    """成本对比表：行为成本分项，列为各次运行"""
    columns = _run_columns(store)
    data = {
        col["name"]: [float(col["costs"].get(item, 0.0)) for item in COST_ROWS]
        for col in columns
    }
    df = pd.DataFrame(data, index=list(COST_ROWS.values()))
    df.index.name = "item"
    return df


def sweep_table(store: RunStore) -> pd.DataFrame:
    """渗透率扫描表：每个扫描点一行（成本与用时）"""
    rows = []
    for run in store.list_runs("sweep"):
        for point in run.get("summary", {}).get("points", []):
            rows.append(
                {
                    "run": run["key"],
                    "penetration": point.get("penetration"),
                    "vehicles": point.get("vehicles"),
                    "status": point.get("status"),
                    "total_cost": point.get("total_cost"),
                    "wall_time": point.get("wall_time"),
                }
            )
    columns = ["run", "penetration", "vehicles", "status", "total_cost", "wall_time"]
    df = pd.DataFrame(rows, columns=columns)
    return df.sort_values(["run", "penetration"]).reset_index(drop=True) if rows else df


def gap_table(store: RunStore) -> pd.DataFrame:
    """gap-时间轨迹：读取各运行目录下的 gap.csv"""
    frames = []
    for run in store.list_runs():
        if run["kind"] not in ("plan", "compare"):
            continue
        path = store.path_of(run["key"]) / "gap.csv"
        if not path.exists():
            continue
        try:
            df = pd.read_csv(path)
        except Exception as e:
            logger.warning(f"读取 gap 轨迹失败 {path}: {e}")
            continue
        if "method" not in df.columns:
            df["method"] = run.get("summary", {}).get("method", "decomposition")
        df.insert(0, "run", run["key"])
        frames.append(df[["run", "method", "time_s", "gap"]])
    if not frames:
        return pd.DataFrame(columns=["run", "method", "time_s", "gap"])
    return pd.concat(frames, ignore_index=True)


def write_report(results_dir: Union[str, Path], out_dir: Optional[Union[str, Path]] = None) -> Dict[str, Path]:
    """
    生成报告：cost_table.csv、sweep.csv、gap_trace.csv 与 report.md

    Args:
        results_dir: 结果根目录
        out_dir: 报告输出目录，默认 results_dir/report

    Returns:
        文件类型 -> 路径
    """
    results_dir = Path(results_dir)
    if not results_dir.is_dir():
        raise InputError(f"results directory not found: {results_dir}")
    store = RunStore(results_dir)
    if not store.index["runs"]:
        store.rebuild()
    if not store.index["runs"]:
        raise InputError(f"results directory {results_dir} holds no runs")

    out_dir = Path(out_dir) if out_dir else results_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    costs = cost_table(store)
    sweep = sweep_table(store)
    gaps = gap_table(store)

    paths = {
        "costs": out_dir / "cost_table.csv",
        "sweep": out_dir / "sweep.csv",
        "gap": out_dir / "gap_trace.csv",
    }
    costs.to_csv(paths["costs"])
    sweep.to_csv(paths["sweep"], index=False)
    gaps.to_csv(paths["gap"], index=False)

    renderer = RenderService(output_dir=out_dir)
    paths["report"] = renderer.render_to_file(
        "report.md.j2",
        "report.md",
        generated=datetime.now().strftime("%Y-%m-%d %H:%M"),
        results_dir=str(results_dir),
        cost_columns=list(costs.columns),
        cost_rows=[(item, list(values)) for item, values in costs.iterrows()],
        sweep_rows=sweep.to_dict(orient="records"),
        gap_runs=sorted(gaps["run"].unique()) if len(gaps) else [],
        stats=store.stats(),
    )
    return paths
