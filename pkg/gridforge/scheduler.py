"""
AEV 充放电调度（子问题一）
逐车、逐场景构建 MILP，汇总为各区域充电站负荷曲线供规划子问题使用
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .backend_manager import SolveLimits, get_backend
from .big_m import AEV_POWER, derive_big_m
from .case_loader import validate_fleet
from .consts import TIE_BREAK_EPS
from .errors import FleetValidationError, InfeasibleError, InputError, SolverLimitError
from .mip_model import GE, LE, MipModel
from .models import Aev, AevFleet, NetworkCase, ScheduleSolution, Tariff
from .oa_engine import solve_milp

logger = logging.getLogger("gridforge.scheduler")

# 零值截断，避免输出 1e-12 级别的噪声
SNAP = 1e-9


def _snap(values: np.ndarray) -> np.ndarray:
    values = np.where(np.abs(values) < SNAP, 0.0, values)
    return values + 0.0


def add_vehicle(
    model: MipModel,
    v: Aev,
    tariff: Tariff,
    scenario: int = 0,
    weight: float = 1.0,
    hours: float = 1.0,
    tie_break: bool = True,
) -> Dict[int, Tuple[int, int]]:
    """
    向模型中加入单车的变量与约束

    Args:
        model: 目标模型
        v: 车辆
        tariff: 电价
        scenario: 场景编号（用于变量命名）
        weight: 目标权重（整体模型中的概率与年化系数）
        hours: 每时段小时数
        tie_break: 是否加入 1e-9·t 的时段扰动

    Returns:
        时段 -> (充电变量, 放电变量)
    """
    if v.e_target - v.e0 > v.p_ch_max * v.window_length * hours + 1e-9:
        raise FleetValidationError(v.id, "target energy unreachable")
    big_m = derive_big_m(AEV_POWER, None, AevFleet((v,)))
    powers = {}
    cumulative: Dict[int, float] = {}
    for t in v.window:
        ch = model.add_var(f"p_ch[{scenario},{v.id},{t}]", 0.0, v.p_ch_max)
        dis = model.add_var(f"p_dis[{scenario},{v.id},{t}]", -v.p_dis_max, 0.0)
        mode = model.add_binary(f"mode[{scenario},{v.id},{t}]")  # 1 = 放电
        model.add_constr({ch: 1.0, mode: big_m}, LE, big_m, f"ch_gate[{v.id},{t}]")
        model.add_constr({dis: 1.0, mode: big_m}, GE, 0.0, f"dis_gate[{v.id},{t}]")
        eps = TIE_BREAK_EPS * t if tie_break else 0.0
        model.add_objective(
            {
                ch: weight * (tariff.charge_price[t - 1] + eps) * hours,
                dis: weight * (tariff.discharge_subsidy[t - 1] - eps) * hours,
            }
        )
        powers[t] = (ch, dis)
        cumulative[ch] = hours
        cumulative[dis] = hours
        model.add_constr(dict(cumulative), LE, v.e_max - v.e0, f"e_max[{v.id},{t}]")
        model.add_constr(dict(cumulative), GE, v.e_min - v.e0, f"e_min[{v.id},{t}]")
    if powers:
        model.add_constr(dict(cumulative), GE, v.e_target - v.e0, f"e_target[{v.id}]")
    return powers


def build_sp1(
    fleet: AevFleet,
    tariff: Tariff,
    model: Optional[MipModel] = None,
    scenario: int = 0,
    weight: float = 1.0,
    hours: float = 1.0,
    tie_break: bool = True,
) -> MipModel:
    """
    构建 AEV 调度 MILP

    Args:
        fleet: 车队
        tariff: 电价
        model: 已有模型（整体模型中追加），为空则新建

    Returns:
        MipModel
    """
    validate_fleet(fleet, tariff.periods, hours=hours)
    model = model if model is not None else MipModel("sp1")
    for v in fleet.vehicles:
        add_vehicle(model, v, tariff, scenario, weight, hours, tie_break)
    return model


def schedule_cost(
    p_ch: np.ndarray, p_dis: np.ndarray, tariff: Tariff, hours: float = 1.0
) -> float:
    """充电费用减放电补贴（不含扰动项）"""
    return float(
        (np.dot(tariff.charge_price, p_ch) + np.dot(tariff.discharge_subsidy, p_dis))
        * hours
    )


def _solve_vehicle(
    v: Aev,
    tariff: Tariff,
    limits: SolveLimits,
    backend_name: Optional[str],
    hours: float,
    scenario: int,
) -> Tuple[str, np.ndarray, np.ndarray, np.ndarray]:
    periods = tariff.periods
    p_ch = np.zeros(periods)
    p_dis = np.zeros(periods)
    mode = np.zeros(periods)
    if v.window_length == 0:
        return v.id, p_ch, p_dis, mode
    model = MipModel(f"sp1_{v.id}")
    powers = add_vehicle(model, v, tariff, scenario, 1.0, hours)
    report = solve_milp(model, limits, get_backend(backend_name))
    if report.status == "infeasible":
        raise InfeasibleError(f"vehicle {v.id}: charging schedule infeasible")
    if not report.has_solution:
        raise SolverLimitError(f"vehicle {v.id}: {report.status} ({report.message})")
    for t, (ch, dis) in powers.items():
        p_ch[t - 1] = report.values[ch]
        p_dis[t - 1] = report.values[dis]
        mode[t - 1] = round(report.get(f"mode[{scenario},{v.id},{t}]"))
    return v.id, _snap(p_ch), _snap(p_dis), mode


def aggregate(
    fleet: AevFleet, net: Dict[str, np.ndarray], periods: int
) -> Dict[str, np.ndarray]:
    """按区域汇总 Σ(p_ch + p_dis)"""
    agg: Dict[str, np.ndarray] = {}
    for v in fleet.vehicles:
        agg.setdefault(v.region, np.zeros(periods))
        agg[v.region] = agg[v.region] + net[v.id]
    return agg


def solve_sp1(
    fleet: AevFleet,
    tariff: Tariff,
    limits: Optional[SolveLimits] = None,
    backend_name: Optional[str] = None,
    workers: int = 1,
    hours: float = 1.0,
    scenario: int = 0,
) -> ScheduleSolution:
    """
    求解 AEV 调度；各车相互独立，逐车求解后按车辆编号合并

    Args:
        fleet: 车队
        tariff: 电价
        limits: 求解限制
        backend_name: 后端名称
        workers: 并行线程数
        hours: 每时段小时数
        scenario: 场景编号

    Returns:
        ScheduleSolution
    """
    limits = limits or SolveLimits()
    periods = tariff.periods
    validate_fleet(fleet, periods, hours=hours)
    vehicles = sorted(fleet.vehicles, key=lambda v: v.id)

    def run(v: Aev):
        return _solve_vehicle(v, tariff, limits, backend_name, hours, scenario)

    if workers > 1 and len(vehicles) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, vehicles))
    else:
        results = [run(v) for v in vehicles]

    solution = ScheduleSolution(periods=periods, scenario=scenario)
    for vid, p_ch, p_dis, mode in results:
        solution.p_ch[vid] = p_ch
        solution.p_dis[vid] = p_dis
        solution.mode[vid] = mode
    net = {vid: solution.net_power(vid) for vid in solution.p_ch}
    solution.agg = aggregate(fleet, net, periods)
    solution.objective = sum(
        schedule_cost(solution.p_ch[vid], solution.p_dis[vid], tariff, hours)
        for vid in solution.p_ch
    )
    logger.info(
        f"🚗 场景 {scenario} 调度完成: {len(vehicles)} 辆车, 费用 {solution.objective:.4f} 元"
    )
    return solution


def solve_sp1_scenarios(
    case: NetworkCase,
    tariff: Optional[Tariff] = None,
    limits: Optional[SolveLimits] = None,
    backend_name: Optional[str] = None,
    workers: int = 1,
) -> List[ScheduleSolution]:
    """逐场景求解子问题一"""
    tariff = tariff or case.tariff
    return [
        solve_sp1(
            s.fleet,
            tariff,
            limits,
            backend_name,
            workers,
            case.econ.hours_per_period,
            scenario=k,
        )
        for k, s in enumerate(case.scenarios)
    ]


def worst_case_profile(fleet: AevFleet, periods: int = 24) -> Dict[str, np.ndarray]:
    """
    最恶劣充电曲线：所有接入车辆在整个接入时段以最大功率充电（忽略电量状态）

    Args:
        fleet: 车队
        periods: 时段数

    Returns:
        区域 -> 负荷曲线 (kW)
    """
    profile: Dict[str, np.ndarray] = {}
    for v in fleet.vehicles:
        curve = profile.setdefault(v.region, np.zeros(periods))
        for t in v.window:
            curve[t - 1] += v.p_ch_max
    return profile


def agg_profiles(schedules: List[ScheduleSolution]) -> List[Dict[str, np.ndarray]]:
    return [s.agg for s in schedules]


# ==================== 文件读写 ====================
def save_schedules(schedules: List[ScheduleSolution], out_dir: Union[str, Path]) -> Dict[str, Path]:
    """写出 sched.json、schedule.csv (u, t, p_kw) 与 agg.csv"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sched_path = out_dir / "sched.json"
    with open(sched_path, "w", encoding="utf-8") as f:
        json.dump([s.to_dict() for s in schedules], f, indent=2)

    rows, agg_rows = [], []
    for s in schedules:
        for vid in sorted(s.p_ch):
            net = s.net_power(vid)
            for t in range(s.periods):
                rows.append({"scenario": s.scenario, "u": vid, "t": t + 1, "p_kw": net[t]})
        for region in sorted(s.agg):
            for t in range(s.periods):
                agg_rows.append(
                    {"scenario": s.scenario, "region": region, "t": t + 1, "p_kw": s.agg[region][t]}
                )
    schedule_path = out_dir / "schedule.csv"
    agg_path = out_dir / "agg.csv"
    pd.DataFrame(rows, columns=["scenario", "u", "t", "p_kw"]).to_csv(schedule_path, index=False)
    pd.DataFrame(agg_rows, columns=["scenario", "region", "t", "p_kw"]).to_csv(agg_path, index=False)
    logger.info(f"💾 调度结果已写入 {out_dir}")
    return {"sched": sched_path, "schedule": schedule_path, "agg": agg_path}


def load_schedules(path: Union[str, Path]) -> List[ScheduleSolution]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"schedule file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return [ScheduleSolution.from_dict(d) for d in json.load(f)]


def load_agg_csv(
    path: Union[str, Path], periods: int, scenarios: int = 1
) -> List[Dict[str, np.ndarray]]:
    """
    读取区域汇总曲线 CSV (scenario, region, t, p_kw)；scenario 列缺省时视为场景 0

    Returns:
        每个场景一个 区域 -> 曲线 字典
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"aggregate profile file not found: {path}")
    df = pd.read_csv(path, dtype={"region": str})
    if "scenario" not in df.columns:
        df["scenario"] = 0
    missing = [c for c in ("region", "t", "p_kw") if c not in df.columns]
    if missing:
        raise InputError(f"aggregate profile file {path} lacks columns {missing}")
    profiles: List[Dict[str, np.ndarray]] = [dict() for _ in range(scenarios)]
    for (k, region), group in df.groupby(["scenario", "region"]):
        k = int(k)
        if k >= scenarios:
            raise InputError(f"{path}: scenario {k} not in case ({scenarios} scenarios)")
        curve = np.zeros(periods)
        for t, p in zip(group["t"], group["p_kw"]):
            if not 1 <= int(t) <= periods:
                raise InputError(f"{path}: period {t} outside 1..{periods}")
            curve[int(t) - 1] = float(p)
        profiles[k][str(region)] = curve
    return profiles
