"""电压质量与运行指标"""

from typing import Dict

import numpy as np

from .models import NetworkCase, PlanSolution, ScenarioDispatch


def voltage_spread(dispatch: ScenarioDispatch) -> float:
    """全部节点、全部时段电压幅值的极差 (pu)"""
    v = dispatch.voltage
    return float(v.max() - v.min()) if v.size else 0.0


def voltage_variance(dispatch: ScenarioDispatch) -> float:
    """各节点电压随时段方差的平均值"""
    v = dispatch.voltage
    return float(v.var(axis=1).mean()) if v.size else 0.0


def plan_voltage_spread(plan: PlanSolution) -> float:
    return max((voltage_spread(d) for d in plan.dispatch), default=0.0)


def line_loss_energy(dispatch: ScenarioDispatch, case: NetworkCase) -> float:
    """日网损电量 (kWh)：Σ R (P² + Q²) / V²，按标幺计算后换算"""
    base = case.base_kva
    hours = case.econ.hours_per_period
    total = 0.0
    for l, line in enumerate(case.lines):
        squared = (dispatch.line_p[l] / base) ** 2 + (dispatch.line_q[l] / base) ** 2
        total += case.line_r_pu(line) * float(squared.sum()) * base * hours
    return total


def dispatch_summary(plan: PlanSolution, case: NetworkCase) -> Dict[str, float]:
    """
    运行指标汇总（按场景概率加权）

    Returns:
        电压极差、电压方差、变电站峰值功率、日网损电量、充电站日用电量、充电站无功支撑量
    """
    summary = {
        "voltage_spread": 0.0,
        "voltage_variance": 0.0,
        "substation_peak_kw": 0.0,
        "loss_kwh": 0.0,
        "v2g_energy_kwh": 0.0,
        "v2g_reactive_kvarh": 0.0,
    }
    hours = case.econ.hours_per_period
    for d in plan.dispatch:
        p = d.probability
        summary["voltage_spread"] += p * voltage_spread(d)
        summary["voltage_variance"] += p * voltage_variance(d)
        summary["substation_peak_kw"] += p * float(np.abs(d.sub_p).max(initial=0.0))
        summary["loss_kwh"] += p * line_loss_energy(d, case)
        for i in plan.stations:
            summary["v2g_energy_kwh"] += p * float(d.v2g_p[i].sum()) * hours
            summary["v2g_reactive_kvarh"] += p * float(np.abs(d.v2g_q[i]).sum()) * hours
    return summary
