"""
整体优化模型
AEV 调度与配电网规划合并为一个 MISOCP，用于与两阶段分解方法对比
"""

import asyncio
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .backend_manager import INFEASIBLE, SolveLimits, get_backend
from .case_loader import validate_fleet
from .consts import DEFAULT_CONE_TOL, DEFAULT_OA_MAX_ROUNDS, DEFAULT_OA_SEED_TANGENTS
from .errors import InfeasibleError, SolverLimitError
from .mip_model import MipModel
from .models import (
    AevFleet,
    CostBreakdown,
    NetworkCase,
    PlanOptions,
    PlanSolution,
    ScheduleSolution,
    Tariff,
)
from .oa_engine import SolveReport, solve_with_oa
from .planner import Sp2Builder, extract_costs, solve_sp2
from .scheduler import add_vehicle, aggregate, agg_profiles, schedule_cost, solve_sp1_scenarios

logger = logging.getLogger("gridforge.holistic")


@dataclass
class HolisticResult:
    plan: PlanSolution
    schedules: List[ScheduleSolution]
    report: SolveReport
    aev_cost: float = 0.0  # 年化后的车辆充放电费用（不计入 CostBreakdown）


@dataclass
class _HolisticModel:
    model: MipModel
    builder: Sp2Builder
    case: NetworkCase
    tariff: Tariff
    # 场景 -> 车辆 -> 时段 -> (充电变量, 放电变量)
    powers: List[Dict[str, Dict[int, Tuple[int, int]]]] = field(default_factory=list)

    @property
    def aev_vars(self) -> List[int]:
        return [
            var
            for scenario in self.powers
            for per_vehicle in scenario.values()
            for pair in per_vehicle.values()
            for var in pair
        ]


def _aev_weight(case: NetworkCase, k: int) -> float:
    """日费用折算为年化货币单位：p_k · 365 / 10^4"""
    econ = case.econ
    return case.scenarios[k].probability * econ.days_per_year / econ.currency_scale


def _assemble(
    case: NetworkCase,
    fleet: Optional[AevFleet] = None,
    tariff: Optional[Tariff] = None,
    options: Optional[PlanOptions] = None,
) -> _HolisticModel:
    case = case.with_fleet(fleet) if fleet is not None else case
    tariff = tariff or case.tariff
    hours = case.econ.hours_per_period
    regions = sorted(set(case.regions.values()))
    model = MipModel("holistic")
    holder = _HolisticModel(model, Sp2Builder(case, options, model), case, tariff)
    coupling = []
    for k, scenario in enumerate(case.scenarios):
        validate_fleet(scenario.fleet, case.periods, regions, hours)
        weight = _aev_weight(case, k)
        per_vehicle = {}
        terms: Dict[str, Dict[int, Dict[int, float]]] = {}
        for v in scenario.fleet.vehicles:
            powers = add_vehicle(model, v, tariff, scenario=k, weight=weight, hours=hours)
            per_vehicle[v.id] = powers
            region = terms.setdefault(v.region, {})
            for t, (ch, dis) in powers.items():
                region.setdefault(t, {})
                region[t][ch] = 1.0
                region[t][dis] = 1.0
        holder.powers.append(per_vehicle)
        coupling.append(terms)
    holder.builder.build(None, coupling)
    return holder


def build_holistic(
    case: NetworkCase,
    fleet: Optional[AevFleet] = None,
    tariff: Optional[Tariff] = None,
    options: Optional[PlanOptions] = None,
) -> MipModel:
    """
    构建整体模型：子问题一与子问题二的变量、约束合并，区域耦合约束直接连接车辆功率

    Args:
        case: 案例（fleet 为空时使用各场景自带车队）
        fleet: 单场景车队
        tariff: 车辆充放电电价，默认取案例电价
        options: 规划选项

    Returns:
        MipModel
    """
    return _assemble(case, fleet, tariff, options).model


def _extract_schedules(holder: _HolisticModel, values: np.ndarray) -> List[ScheduleSolution]:
    case = holder.case
    hours = case.econ.hours_per_period
    schedules = []
    for k, scenario in enumerate(case.scenarios):
        sol = ScheduleSolution(periods=case.periods, scenario=k)
        for v in sorted(scenario.fleet.vehicles, key=lambda v: v.id):
            p_ch = np.zeros(case.periods)
            p_dis = np.zeros(case.periods)
            mode = np.zeros(case.periods)
            for t, (ch, dis) in holder.powers[k][v.id].items():
                p_ch[t - 1] = values[ch]
                p_dis[t - 1] = values[dis]
                mode[t - 1] = round(values[holder.model.var(f"mode[{k},{v.id},{t}]")])
            sol.p_ch[v.id] = p_ch
            sol.p_dis[v.id] = p_dis
            sol.mode[v.id] = mode
        net = {vid: sol.net_power(vid) for vid in sol.p_ch}
        sol.agg = aggregate(scenario.fleet, net, case.periods)
        sol.objective = sum(
            schedule_cost(sol.p_ch[vid], sol.p_dis[vid], holder.tariff, hours) for vid in sol.p_ch
        )
        schedules.append(sol)
    return schedules


def warm_start_values(holder_model: MipModel, plan: PlanSolution, case: NetworkCase) -> Dict[int, float]:
    """以分解方法的建设决策作为初始解（实验功能）"""
    start: Dict[int, float] = {}
    for line, built in zip(case.lines, plan.lines_built):
        a, b = line.key
        start[holder_model.var(f"z[{a},{b}]")] = 1.0 if built else 0.0
    stations = set(plan.stations)
    for i in case.v2g_nodes():
        start[holder_model.var(f"y_v2g[{i}]")] = 1.0 if i in stations else 0.0
    for kind, nodes in plan.devices.items():
        for i in case.dgr_nodes(kind):
            name = f"y_{kind}[{i}]"
            if holder_model.has_var(name):
                start[holder_model.var(name)] = 1.0 if i in nodes else 0.0
    return start


def solve_holistic(
    case: NetworkCase,
    fleet: Optional[AevFleet] = None,
    tariff: Optional[Tariff] = None,
    options: Optional[PlanOptions] = None,
    limits: Optional[SolveLimits] = None,
    cone_tol: float = DEFAULT_CONE_TOL,
    max_rounds: int = DEFAULT_OA_MAX_ROUNDS,
    seed_tangents: int = DEFAULT_OA_SEED_TANGENTS,
    backend_name: Optional[str] = None,
    warm_start: Optional[PlanSolution] = None,
    dump_model: Optional[str] = None,
) -> HolisticResult:
    """
    求解整体模型

    Args:
        case: 案例
        fleet: 单场景车队，为空时使用案例自带车队
        tariff: 车辆电价
        options: 规划选项
        limits: gap / 时间限制
        cone_tol, max_rounds, seed_tangents: 外逼近参数
        backend_name: MILP 后端
        warm_start: 分解方法得到的规划结果，用作初始解
        dump_model: LP 文件输出路径

    Returns:
        HolisticResult；CostBreakdown 不含车辆费用
    """
    options = options or PlanOptions()
    limits = limits or SolveLimits()
    holder = _assemble(case, fleet, tariff, options)
    model = holder.model
    logger.info(f"📐 整体模型: {model.summary()}")
    if dump_model:
        model.dump(dump_model)

    initial = warm_start_values(model, warm_start, holder.case) if warm_start else None
    report = solve_with_oa(
        model,
        limits,
        cone_tol,
        max_rounds,
        seed_tangents,
        get_backend(backend_name),
        initial=initial,
    )
    if report.status == INFEASIBLE:
        raise InfeasibleError("holistic problem is infeasible")
    if not report.has_solution:
        raise SolverLimitError(f"holistic solve stopped: {report.status} ({report.message})")

    values = np.asarray(report.values, dtype=float)
    aev_objective = sum(model.objective.get(var, 0.0) * values[var] for var in holder.aev_vars)
    plan = holder.builder.extract(report)
    plan.objective = float(report.objective) - aev_objective
    plan.costs = extract_costs(plan, holder.case)
    schedules = _extract_schedules(holder, values)
    aev_cost = sum(
        _aev_weight(holder.case, k) * s.objective for k, s in enumerate(schedules)
    )
    logger.info(
        f"✅ 整体优化完成: 网络侧成本 {plan.costs.total:.4f}, 车辆费用 {aev_cost:.4f}, "
        f"gap {report.mip_gap:.2e}"
    )
    return HolisticResult(plan, schedules, report, aev_cost)


def holistic_accepts(
    case: NetworkCase,
    schedules: List[ScheduleSolution],
    plan: PlanSolution,
    tariff: Optional[Tariff] = None,
    limits: Optional[SolveLimits] = None,
    backend_name: Optional[str] = None,
) -> bool:
    """
    代入检验：固定分解方法得到的车辆功率与建设决策后，整体模型是否仍可行

    Returns:
        可行返回 True
    """
    holder = _assemble(case, None, tariff, plan.options)
    model = holder.model
    for k, schedule in enumerate(schedules):
        for vid, per_period in holder.powers[k].items():
            for t, (ch, dis) in per_period.items():
                model.fix(ch, float(schedule.p_ch[vid][t - 1]))
                model.fix(dis, float(schedule.p_dis[vid][t - 1]))
                model.fix(f"mode[{k},{vid},{t}]", float(schedule.mode[vid][t - 1]))
    holder.builder.fix_builds(plan)
    report = solve_with_oa(model, limits, backend=get_backend(backend_name))
    return report.has_solution


# ==================== 方法对比 ====================
@dataclass
class MethodOutcome:
    method: str
    status: str
    wall_time: float
    plan: Optional[PlanSolution] = None
    costs: Optional[CostBreakdown] = None
    gap_trace: List[Tuple[float, float]] = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "status": self.status,
            "wall_time": self.wall_time,
            "costs": self.costs.to_dict() if self.costs else None,
            "builds": _jsonable(self.plan.build_signature()) if self.plan else None,
            "gap_trace": [list(p) for p in self.gap_trace],
            "message": self.message,
        }


@dataclass
class ComparisonReport:
    decomposition: MethodOutcome
    holistic: MethodOutcome

    @property
    def same_builds(self) -> bool:
        a, b = self.decomposition.plan, self.holistic.plan
        return a is not None and b is not None and a.build_signature() == b.build_signature()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "decomposition": self.decomposition.to_dict(),
            "holistic": self.holistic.to_dict(),
            "same_builds": self.same_builds,
        }

    def gap_rows(self) -> List[Dict[str, Any]]:
        """(method, time_s, gap) 行，用于 CSV"""
        rows = []
        for outcome in (self.decomposition, self.holistic):
            rows.extend(
                {"method": outcome.method, "time_s": t, "gap": g} for t, g in outcome.gap_trace
            )
        return rows


def _jsonable(signature: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "lines": list(signature["lines"]),
        "stations": list(signature["stations"]),
        "devices": {k: list(v) for k, v in signature["devices"].items()},
    }


def _run_decomposition(
    case: NetworkCase,
    tariff: Optional[Tariff],
    options: PlanOptions,
    limits: SolveLimits,
    backend_name: Optional[str],
    workers: int,
    oa: Dict[str, Any],
) -> MethodOutcome:
    start = time.perf_counter()
    try:
        schedules = solve_sp1_scenarios(case, tariff, limits, backend_name, workers)
        sp1_time = time.perf_counter() - start
        plan = solve_sp2(
            case,
            agg_profiles(schedules),
            options,
            limits.remaining(sp1_time),
            backend_name=backend_name,
            **oa,
        )
    except (InfeasibleError, SolverLimitError) as e:
        status = "infeasible" if isinstance(e, InfeasibleError) else "limit"
        return MethodOutcome("decomposition", status, time.perf_counter() - start, message=str(e))
    report = plan.report
    trace = [(sp1_time + t, g) for t, g in report.gap_trace]
    return MethodOutcome(
        "decomposition", report.status, time.perf_counter() - start, plan, plan.costs, trace
    )


def _run_holistic(
    case: NetworkCase,
    tariff: Optional[Tariff],
    options: PlanOptions,
    limits: SolveLimits,
    backend_name: Optional[str],
    oa: Dict[str, Any],
) -> MethodOutcome:
    start = time.perf_counter()
    try:
        result = solve_holistic(
            case, None, tariff, options, limits, backend_name=backend_name, **oa
        )
    except (InfeasibleError, SolverLimitError) as e:
        status = "infeasible" if isinstance(e, InfeasibleError) else "limit"
        return MethodOutcome("holistic", status, time.perf_counter() - start, message=str(e))
    return MethodOutcome(
        "holistic",
        result.report.status,
        time.perf_counter() - start,
        result.plan,
        result.plan.costs,
        list(result.report.gap_trace),
    )


async def compare_methods_async(
    case: NetworkCase,
    fleet: Optional[AevFleet] = None,
    tariff: Optional[Tariff] = None,
    options: Optional[PlanOptions] = None,
    time_budget: Optional[float] = None,
    limits: Optional[SolveLimits] = None,
    backend_name: Optional[str] = None,
    workers: int = 1,
    concurrent: bool = True,
    **oa,
) -> ComparisonReport:
    """两种方法可并发求解；报告按固定顺序组装"""
    case = case.with_fleet(fleet) if fleet is not None else case
    options = options or PlanOptions()
    limits = limits or SolveLimits()
    if time_budget is not None:
        limits = SolveLimits(limits.gap, time_budget, limits.threads)

    if concurrent:
        decomposition, holistic = await asyncio.gather(
            asyncio.to_thread(
                _run_decomposition, case, tariff, options, limits, backend_name, workers, oa
            ),
            asyncio.to_thread(_run_holistic, case, tariff, options, limits, backend_name, oa),
        )
    else:
        decomposition = _run_decomposition(case, tariff, options, limits, backend_name, workers, oa)
        holistic = _run_holistic(case, tariff, options, limits, backend_name, oa)

    report = ComparisonReport(decomposition, holistic)
    for outcome in (decomposition, holistic):
        total = f"{outcome.costs.total:.4f}" if outcome.costs else "-"
        logger.info(
            f"📊 {outcome.method}: {outcome.status}, 总成本 {total}, 用时 {outcome.wall_time:.2f}s"
        )
    if not report.same_builds:
        logger.info("两种方法的建设决策不同")
    return report


def compare_methods(
    case: NetworkCase,
    fleet: Optional[AevFleet] = None,
    tariff: Optional[Tariff] = None,
    options: Optional[PlanOptions] = None,
    time_budget: Optional[float] = None,
    **kwargs,
) -> ComparisonReport:
    """
    分解方法与整体方法对比

    Args:
        case: 案例
        fleet: 单场景车队
        tariff: 车辆电价
        options: 规划选项
        time_budget: 每种方法的时间预算（秒）

    Returns:
        ComparisonReport（超时与不可行记录为状态）
    """
    return asyncio.run(
        compare_methods_async(case, fleet, tariff, options, time_budget, **kwargs)
    )
