"""
配电网规划（子问题二）
给定各区域充电站负荷曲线，联合优化线路扩建、V2G 充电站选址与分布式资源配置
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import devices
from .backend_manager import INFEASIBLE, SolveLimits, get_backend
from .big_m import V2G_POWER, VOLTAGE_DROP, derive_big_m
from .consts import (
    DEFAULT_CONE_TOL,
    DEFAULT_OA_MAX_ROUNDS,
    DEFAULT_OA_SEED_TANGENTS,
    DEVICE_KINDS,
    FEASIBILITY_TOL,
)
from .economics import asset_factor
from .errors import ConsistencyError, InfeasibleError, InputError, SolverLimitError
from .mip_model import EQ, GE, INF, LE, MipModel
from .models import (
    CostBreakdown,
    EconomicParams,
    NetworkCase,
    PlanOptions,
    PlanSolution,
    ScenarioDispatch,
)
from .oa_engine import SolveReport, solve_with_oa

logger = logging.getLogger("gridforge.planner")

# 松弛诊断的约束族
LINE_CAPACITY = "line_capacity"
VOLTAGE_UPPER = "voltage_upper"
VOLTAGE_LOWER = "voltage_lower"
SUBSTATION_P = "substation_p"
SUBSTATION_Q = "substation_q"
V2G_CAPACITY = "v2g_capacity"
REGIONAL_COUPLING = "regional_coupling"

COST_TOL = 1e-4

AggProfiles = Union[
    None, Mapping[str, Sequence[float]], Sequence[Mapping[str, Sequence[float]]]
]
# 整体模型的耦合项: 场景 -> 区域 -> 时段 -> {变量: kW 系数}
Coupling = Sequence[Mapping[Optional[str], Mapping[int, Mapping[int, float]]]]

DEVICE_BUILDERS = (
    ("pv", devices.add_pv),
    ("svc", devices.add_svc),
    ("ess", devices.add_ess),
    ("cb", devices.add_cb),
)


def normalize_profiles(case: NetworkCase, agg: AggProfiles) -> List[Dict[str, np.ndarray]]:
    """
    统一为逐场景的 区域 -> 曲线 (kW) 列表

    单个字典或单元素列表视为所有场景共用
    """
    scenarios = len(case.scenarios)
    if agg is None:
        raw: List[Mapping] = [{}] * scenarios
    elif isinstance(agg, Mapping):
        raw = [agg] * scenarios
    else:
        raw = list(agg)
        if len(raw) == 1 and scenarios > 1:
            raw = raw * scenarios
        if len(raw) != scenarios:
            raise InputError(
                f"aggregate profiles cover {len(raw)} scenarios, case has {scenarios}"
            )
    profiles = []
    for k, profile in enumerate(raw):
        clean = {}
        for region, curve in profile.items():
            arr = np.asarray(curve, dtype=float)
            if arr.shape != (case.periods,):
                raise InputError(
                    f"scenario {k} region {region}: profile has {arr.size} periods, "
                    f"expected {case.periods}"
                )
            clean[str(region)] = arr
        profiles.append(clean)
    return profiles


@dataclass(frozen=True)
class Slack:
    var: int
    family: str
    element: Any
    scenario: int
    period: int
    scale: float  # 换算为工程单位


def _tag(element: Any) -> str:
    if isinstance(element, tuple):
        return "-".join(str(e) for e in element)
    return str(element)


class Sp2Builder:
    """
    子问题二模型构建器

    变量以标幺值建模 (功率 / base_kva，电压取平方 w = V²)，对外结果为工程单位
    elastic=True 时在容量、电压、变电站与充电站约束上加入非负松弛，目标为松弛之和
    """

    def __init__(
        self,
        case: NetworkCase,
        options: Optional[PlanOptions] = None,
        model: Optional[MipModel] = None,
        elastic: bool = False,
    ):
        self.case = case
        self.options = options or PlanOptions()
        self.model = model if model is not None else MipModel("sp2")
        self.elastic = elastic
        self.base = case.base_kva
        self.T = case.periods
        self.K = len(case.scenarios)
        self.hours = case.econ.hours_per_period
        self.oltc_active = self.options.dgrs_enabled and case.oltc.enabled

        self.z: List[int] = []
        self.y_v2g: Dict[int, int] = {}
        self.y_dev: Dict[str, Dict[int, int]] = {kind: {} for kind in DEVICE_KINDS}
        self.P: List[np.ndarray] = []
        self.Q: List[np.ndarray] = []
        self.W: List[np.ndarray] = []
        self.psub: List[np.ndarray] = []
        self.qsub: List[np.ndarray] = []
        self.pv2g: List[Dict[int, np.ndarray]] = []
        self.qv2g: List[Dict[int, np.ndarray]] = []
        self.slacks: List[Slack] = []
        self._p_inj: Dict[Tuple[int, int, int], Dict[int, float]] = {}
        self._q_inj: Dict[Tuple[int, int, int], Dict[int, float]] = {}

    # ---------- 注入项 ----------
    def inject_p(self, k: int, i: int, t: int, var: int, coef: float) -> None:
        terms = self._p_inj.setdefault((k, i, t), {})
        terms[var] = terms.get(var, 0.0) + coef

    def inject_q(self, k: int, i: int, t: int, var: int, coef: float) -> None:
        terms = self._q_inj.setdefault((k, i, t), {})
        terms[var] = terms.get(var, 0.0) + coef

    def _slack(self, family: str, element: Any, k: int, t: int, scale: float) -> int:
        var = self.model.add_var(f"slack_{family}[{k},{_tag(element)},{t}]", 0.0, INF)
        self.slacks.append(Slack(var, family, element, k, t, scale))
        return var

    # ---------- 构建 ----------
    def build(
        self,
        agg_profiles: AggProfiles = None,
        coupling: Optional[Coupling] = None,
        fixed_builds: Optional[PlanSolution] = None,
        fixed_operations: Optional[PlanSolution] = None,
    ) -> MipModel:
        """
        构建完整模型

        Args:
            agg_profiles: 各区域充电站负荷曲线 (kW)
            coupling: 整体模型中替代曲线的车辆功率项
            fixed_builds: 固定建设决策的规划结果
            fixed_operations: 同时固定储能 / 电容器 / 分接头的运行状态

        Returns:
            MipModel
        """
        profiles = normalize_profiles(self.case, agg_profiles)
        self._check_regions(profiles, coupling)
        self._add_build_vars()
        self._add_radiality()
        for k in range(self.K):
            self._add_scenario(k, profiles[k], coupling[k] if coupling else None)
        if self.elastic:
            self.model.add_objective({s.var: 1.0 for s in self.slacks})
        else:
            self._add_investment_cost()
        if fixed_builds is not None:
            self.fix_builds(fixed_builds)
        if fixed_operations is not None:
            self.fix_operations(fixed_operations)
        logger.debug(f"SP2 模型规模: {self.model.summary()}")
        return self.model

    def _check_regions(self, profiles: List[Dict[str, np.ndarray]], coupling) -> None:
        for k, profile in enumerate(profiles):
            demand = {r for r, curve in profile.items() if np.any(np.abs(curve) > 1e-9)}
            if coupling:
                demand |= {
                    r for r, terms in coupling[k].items() if any(terms.values())
                }
            for region in sorted(demand, key=str):
                if not self.case.v2g_nodes(region):
                    raise InfeasibleError(
                        f"region {region} has charging demand but no V2GCS candidate",
                        [{"family": REGIONAL_COUPLING, "element": region, "scenario": k}],
                    )

    def _add_build_vars(self) -> None:
        m = self.model
        for line in self.case.lines:
            a, b = line.key
            self.z.append(m.add_binary(f"z[{a},{b}]"))
        for i in self.case.v2g_nodes():
            self.y_v2g[i] = m.add_binary(f"y_v2g[{i}]")
        if self.options.dgrs_enabled:
            for kind in DEVICE_KINDS:
                for i in self.case.dgr_nodes(kind):
                    self.y_dev[kind][i] = m.add_binary(f"y_{kind}[{i}]")

    def _add_radiality(self) -> None:
        """单商品流：每个非变电站节点消耗 1 单位虚拟流量，|f| ≤ z·|N|，Σz = |N| − 1"""
        m = self.model
        n = len(self.case.nodes)
        inflow: Dict[int, Dict[int, float]] = {i: {} for i in self.case.node_ids}
        for line, z in zip(self.case.lines, self.z):
            a, b = line.key
            f = m.add_var(f"f[{a},{b}]", -float(n), float(n))
            m.add_constr({f: 1.0, z: -float(n)}, LE, 0.0)
            m.add_constr({f: 1.0, z: float(n)}, GE, 0.0)
            inflow[b][f] = inflow[b].get(f, 0.0) + 1.0
            inflow[a][f] = inflow[a].get(f, 0.0) - 1.0
        for i, terms in inflow.items():
            if i != self.case.substation:
                m.add_constr(terms, EQ, 1.0, f"radial[{i}]")
        m.add_constr({z: 1.0 for z in self.z}, EQ, float(n - 1), "spanning_tree")

    def _elastic_flow_bound(self, k: int, profile: Dict[str, np.ndarray]) -> float:
        """松弛模式下线路功率的上界 (标幺)"""
        case = self.case
        p_load, q_load = case.scenario_loads(k)
        total = float(np.abs(p_load).max(axis=1).sum() + np.abs(q_load).max(axis=1).sum())
        total += sum(float(np.abs(c).max()) for c in profile.values()) if profile else 0.0
        total += sum(case.node(i).v2g.s_max for i in case.v2g_nodes())
        for n in case.nodes:
            for kind, dev in n.dgr.items():
                if kind == "pv":
                    total += max(dev.p_max)
                elif kind == "svc":
                    total += max(abs(dev.q_min), abs(dev.q_max))
                elif kind == "ess":
                    total += max(dev.p_ch_max, dev.p_dis_max)
                elif kind == "cb":
                    total += dev.q_max
        return total / self.base + max((line.s_max for line in case.lines), default=0.0) / self.base + 1.0

    def _add_scenario(
        self,
        k: int,
        profile: Dict[str, np.ndarray],
        coupling: Optional[Mapping[Optional[str], Mapping[int, Mapping[int, float]]]],
    ) -> None:
        case, m, T, base = self.case, self.model, self.T, self.base
        scenario = case.scenarios[k]
        econ = case.econ
        p_load, q_load = case.scenario_loads(k)
        index = case.node_index
        sub = case.substation
        w_lo, w_hi = case.v_min**2, case.v_max**2
        big_m = derive_big_m(VOLTAGE_DROP, case)
        if self.elastic:
            # 电压可越限，放宽未投运线路的电压差约束
            big_m += 10.0
        flow_cap = self._elastic_flow_bound(k, profile) if self.elastic else None

        # ---------- 节点电压 ----------
        W = np.zeros((len(case.nodes), T), dtype=int)
        tap_w = case.oltc.tap_w()
        for n in case.nodes:
            for t in range(1, T + 1):
                name = f"w[{k},{n.id},{t}]"
                if n.id == sub:
                    if self.oltc_active:
                        var = m.add_var(
                            name, max(w_lo, float(tap_w.min())), min(w_hi, float(tap_w.max()))
                        )
                    else:
                        var = m.add_var(name, case.v_substation**2, case.v_substation**2)
                elif self.elastic:
                    var = m.add_var(name, 0.0, INF)
                    s_hi = self._slack(VOLTAGE_UPPER, n.id, k, t, 1.0)
                    s_lo = self._slack(VOLTAGE_LOWER, n.id, k, t, 1.0)
                    m.add_constr({var: 1.0, s_hi: -1.0}, LE, w_hi)
                    m.add_constr({var: 1.0, s_lo: 1.0}, GE, w_lo)
                else:
                    var = m.add_var(name, w_lo, w_hi)
                W[index[n.id], t - 1] = var
        self.W.append(W)

        # ---------- 线路 ----------
        L = len(case.lines)
        P = np.zeros((L, T), dtype=int)
        Q = np.zeros((L, T), dtype=int)
        for l, line in enumerate(case.lines):
            a, b = line.key
            s = line.s_max / base
            r, x = case.line_r_pu(line), case.line_x_pu(line)
            z = self.z[l]
            gate = flow_cap if self.elastic else s
            for t in range(1, T + 1):
                p = m.add_var(f"P[{k},{a},{b},{t}]", -gate, gate)
                q = m.add_var(f"Q[{k},{a},{b},{t}]", -gate, gate)
                for var in (p, q):
                    m.add_constr({var: 1.0, z: -gate}, LE, 0.0)
                    m.add_constr({var: 1.0, z: gate}, GE, 0.0)
                radius = {z: s}
                if self.elastic:
                    radius[self._slack(LINE_CAPACITY, line.key, k, t, base)] = 1.0
                m.add_cone(p, q, radius, 0.0, f"line[{k},{a},{b},{t}]")

                wa, wb = W[index[a], t - 1], W[index[b], t - 1]
                drop = {wa: 1.0, wb: -1.0, p: -2.0 * r, q: -2.0 * x}
                m.add_constr({**drop, z: big_m}, LE, big_m, f"vdrop_up[{k},{a},{b},{t}]")
                m.add_constr({**drop, z: -big_m}, GE, -big_m, f"vdrop_lo[{k},{a},{b},{t}]")

                weight = (
                    scenario.probability
                    * econ.days_per_year
                    * case.tariff.price[t - 1]
                    * econ.hours_per_period
                    * r
                    * base
                    / econ.currency_scale
                )
                if not self.elastic and weight > 0:
                    loss = m.add_var(f"loss[{k},{a},{b},{t}]", 0.0, INF)
                    m.add_objective({loss: weight})
                    m.add_epigraph(p, q, loss, hint_radius=s / 2.0, name=f"loss[{k},{a},{b},{t}]")

                self.inject_p(k, b, t, p, 1.0)
                self.inject_p(k, a, t, p, -1.0)
                self.inject_q(k, b, t, q, 1.0)
                self.inject_q(k, a, t, q, -1.0)
                P[l, t - 1] = p
                Q[l, t - 1] = q
        self.P.append(P)
        self.Q.append(Q)

        # ---------- 变电站 ----------
        p_max, q_max = case.sub_p_max / base, case.sub_q_max / base
        psub = np.zeros(T, dtype=int)
        qsub = np.zeros(T, dtype=int)
        for t in range(1, T + 1):
            if self.elastic:
                ps = m.add_var(f"Psub[{k},{t}]", -INF, INF)
                qs = m.add_var(f"Qsub[{k},{t}]", -INF, INF)
                for var, family, cap in ((ps, SUBSTATION_P, p_max), (qs, SUBSTATION_Q, q_max)):
                    s = self._slack(family, sub, k, t, base)
                    m.add_constr({var: 1.0, s: -1.0}, LE, cap)
                    m.add_constr({var: 1.0, s: 1.0}, GE, -cap)
            else:
                ps = m.add_var(f"Psub[{k},{t}]", -p_max, p_max)
                qs = m.add_var(f"Qsub[{k},{t}]", -q_max, q_max)
            self.inject_p(k, sub, t, ps, 1.0)
            self.inject_q(k, sub, t, qs, 1.0)
            psub[t - 1] = ps
            qsub[t - 1] = qs
        self.psub.append(psub)
        self.qsub.append(qsub)

        # ---------- 充电站 ----------
        gate_m = derive_big_m(V2G_POWER, case) / base
        pv2g: Dict[int, np.ndarray] = {}
        qv2g: Dict[int, np.ndarray] = {}
        groups: Dict[Optional[str], List[int]] = {}
        for i in case.v2g_nodes():
            node = case.node(i)
            groups.setdefault(node.region, []).append(i)
            s = node.v2g.s_max / base
            y = self.y_v2g[i]
            bound = INF if self.elastic else s
            pv2g[i] = np.zeros(T, dtype=int)
            qv2g[i] = np.zeros(T, dtype=int)
            for t in range(1, T + 1):
                p = m.add_var(f"Pv2g[{k},{i},{t}]", -bound, bound)
                if self.options.reactive_support:
                    q = m.add_var(f"Qv2g[{k},{i},{t}]", -bound, bound)
                else:
                    q = m.add_var(f"Qv2g[{k},{i},{t}]", 0.0, 0.0)
                slack = self._slack(V2G_CAPACITY, i, k, t, base) if self.elastic else None
                for var in (p, q):
                    up = {var: 1.0, y: -gate_m}
                    lo = {var: 1.0, y: gate_m}
                    if slack is not None:
                        up[slack] = -1.0
                        lo[slack] = 1.0
                    m.add_constr(up, LE, 0.0)
                    m.add_constr(lo, GE, 0.0)
                radius = {y: s}
                if slack is not None:
                    radius[slack] = 1.0
                m.add_cone(p, q, radius, 0.0, f"v2g[{k},{i},{t}]")
                # P^V2G 为充电站从电网取用的功率，Q^V2G 为向电网注入的无功
                self.inject_p(k, i, t, p, -1.0)
                self.inject_q(k, i, t, q, 1.0)
                pv2g[i][t - 1] = p
                qv2g[i][t - 1] = q
        self.pv2g.append(pv2g)
        self.qv2g.append(qv2g)

        # ---------- 区域耦合 ----------
        coupling = coupling or {}
        regions = set(groups) | set(profile) | set(coupling)
        for region in sorted(regions, key=str):
            stations = groups.get(region, [])
            curve = profile.get(region)
            extra = coupling.get(region, {})
            for t in range(1, T + 1):
                terms = {pv2g[i][t - 1]: 1.0 for i in stations}
                for var, coef in extra.get(t, {}).items():
                    terms[var] = terms.get(var, 0.0) - coef / base
                if not terms:
                    continue
                rhs = float(curve[t - 1]) / base if curve is not None else 0.0
                m.add_constr(terms, EQ, rhs, f"region[{k},{region},{t}]")

        # ---------- 分布式资源 ----------
        if self.options.dgrs_enabled:
            for kind, builder in DEVICE_BUILDERS:
                for i, y in self.y_dev[kind].items():
                    builder(self, k, i, case.node(i).dgr[kind], y)
        if self.oltc_active:
            devices.add_oltc(self, k, case.oltc, list(W[index[sub]]))

        # ---------- 节点功率平衡 ----------
        for n in case.nodes:
            row = index[n.id]
            for t in range(1, T + 1):
                m.add_constr(
                    self._p_inj.get((k, n.id, t), {}),
                    EQ,
                    p_load[row, t - 1] / base,
                    f"bal_p[{k},{n.id},{t}]",
                )
                m.add_constr(
                    self._q_inj.get((k, n.id, t), {}),
                    EQ,
                    q_load[row, t - 1] / base,
                    f"bal_q[{k},{n.id},{t}]",
                )

    def _add_investment_cost(self) -> None:
        case, m = self.case, self.model
        econ = case.econ
        r_line = asset_factor(econ, "line")
        m.add_objective({z: r_line * line.capex for z, line in zip(self.z, case.lines)})
        r_v2g = asset_factor(econ, "v2g")
        for i, y in self.y_v2g.items():
            cand = case.node(i).v2g
            m.add_objective({y: r_v2g * cand.capex + cand.opex})
        for kind, ys in self.y_dev.items():
            factor = asset_factor(econ, kind)
            for i, y in ys.items():
                dev = case.node(i).dgr[kind]
                m.add_objective({y: factor * dev.capex + dev.opex})

    # ---------- 固定决策 ----------
    def fix_builds(self, plan: PlanSolution) -> None:
        if len(plan.lines_built) != len(self.z):
            raise InputError(
                f"plan has {len(plan.lines_built)} line decisions, case has {len(self.z)} lines"
            )
        m = self.model
        for z, built in zip(self.z, plan.lines_built):
            m.fix(z, 1.0 if built else 0.0)
        stations = set(plan.stations)
        for i, y in self.y_v2g.items():
            m.fix(y, 1.0 if i in stations else 0.0)
        for kind, ys in self.y_dev.items():
            built = set(plan.devices.get(kind, ()))
            for i, y in ys.items():
                m.fix(y, 1.0 if i in built else 0.0)

    def fix_operations(self, plan: PlanSolution) -> None:
        """按规划结果固定储能充放电状态、电容器投切与分接头档位"""
        m = self.model

        def fix(name: str, value: float):
            if m.has_var(name):
                m.fix(name, value)

        for k, d in enumerate(plan.dispatch[: self.K]):
            for i, rec in d.ess.items():
                for t in range(1, self.T + 1):
                    fix(f"Ess_tch[{k},{i},{t}]", rec["t_ch"][t - 1])
                    fix(f"Ess_tdis[{k},{i},{t}]", rec["t_dis"][t - 1])
            for i, rec in d.cb.items():
                steps = np.atleast_2d(rec["steps"])
                for s in range(steps.shape[0]):
                    for t in range(1, self.T + 1):
                        fix(f"Cb_s[{k},{i},{s + 1},{t}]", steps[s, t - 1])
                for t in range(2, self.T + 1):
                    fix(f"Cb[{k},{i}]_in[{t}]", rec["t_in"][t - 1])
                    fix(f"Cb[{k},{i}]_de[{t}]", rec["t_de"][t - 1])
            if d.oltc is not None and self.oltc_active:
                steps = np.atleast_2d(d.oltc["steps"])
                for s in range(steps.shape[0]):
                    for t in range(1, self.T + 1):
                        fix(f"Oltc_s[{k},{s + 1},{t}]", steps[s, t - 1])
                for t in range(2, self.T + 1):
                    fix(f"Oltc[{k}]_in[{t}]", d.oltc["t_in"][t - 1])
                    fix(f"Oltc[{k}]_de[{t}]", d.oltc["t_de"][t - 1])

    # ---------- 结果提取 ----------
    def _series(self, values: np.ndarray, pattern: str, **fmt) -> np.ndarray:
        index = self.model.index
        return np.array(
            [values[index[pattern.format(t=t, **fmt)]] for t in range(1, self.T + 1)],
            dtype=float,
        )

    def _binary_series(self, values: np.ndarray, pattern: str, **fmt) -> np.ndarray:
        return np.round(self._series(values, pattern, **fmt))

    def _switch_series(self, values: np.ndarray, prefix: str) -> Tuple[np.ndarray, np.ndarray]:
        index = self.model.index
        t_in = np.zeros(self.T)
        t_de = np.zeros(self.T)
        for t in range(2, self.T + 1):
            t_in[t - 1] = round(values[index[f"{prefix}_in[{t}]"]])
            t_de[t - 1] = round(values[index[f"{prefix}_de[{t}]"]])
        return t_in, t_de

    def _extract_scenario(self, k: int, values: np.ndarray) -> ScenarioDispatch:
        base = self.base
        case = self.case
        d = ScenarioDispatch(
            probability=case.scenarios[k].probability,
            line_p=values[self.P[k]] * base,
            line_q=values[self.Q[k]] * base,
            w=values[self.W[k]],
            sub_p=values[self.psub[k]] * base,
            sub_q=values[self.qsub[k]] * base,
            v2g_p={i: values[ids] * base for i, ids in self.pv2g[k].items()},
            v2g_q={i: values[ids] * base for i, ids in self.qv2g[k].items()},
        )
        for i in self.y_dev["pv"]:
            d.pv_p[i] = self._series(values, "Ppv[{k},{i},{t}]", k=k, i=i) * base
        for i in self.y_dev["svc"]:
            d.svc_q[i] = self._series(values, "Qsvc[{k},{i},{t}]", k=k, i=i) * base
        for i in self.y_dev["ess"]:
            d.ess[i] = {
                "e": self._series(values, "Ess_e[{k},{i},{t}]", k=k, i=i) * base,
                "p_ch": self._series(values, "Ess_ch[{k},{i},{t}]", k=k, i=i) * base,
                "p_dis": self._series(values, "Ess_dis[{k},{i},{t}]", k=k, i=i) * base,
                "t_ch": self._binary_series(values, "Ess_tch[{k},{i},{t}]", k=k, i=i),
                "t_dis": self._binary_series(values, "Ess_tdis[{k},{i},{t}]", k=k, i=i),
            }
        for i in self.y_dev["cb"]:
            banks = case.node(i).dgr["cb"].banks
            steps = np.array(
                [
                    self._binary_series(values, "Cb_s[{k},{i},{s},{t}]", k=k, i=i, s=s)
                    for s in range(1, banks + 1)
                ]
            )
            t_in, t_de = self._switch_series(values, f"Cb[{k},{i}]")
            d.cb[i] = {
                "q": self._series(values, "Qcb[{k},{i},{t}]", k=k, i=i) * base,
                "steps": steps,
                "count": steps.sum(axis=0),
                "t_in": t_in,
                "t_de": t_de,
            }
        if self.oltc_active:
            steps = np.array(
                [
                    self._binary_series(values, "Oltc_s[{k},{s},{t}]", k=k, s=s)
                    for s in range(1, case.oltc.steps + 1)
                ]
            )
            t_in, t_de = self._switch_series(values, f"Oltc[{k}]")
            d.oltc = {
                "w": values[self.W[k][case.node_index[case.substation]]],
                "steps": steps,
                "tap": steps.sum(axis=0),
                "t_in": t_in,
                "t_de": t_de,
            }
        return d

    def extract(self, report: SolveReport) -> PlanSolution:
        """由求解结果组装 PlanSolution (工程单位)"""
        values = np.asarray(report.values, dtype=float)
        devices_built: Dict[str, Tuple[int, ...]] = {}
        if self.options.dgrs_enabled:
            devices_built = {
                kind: tuple(i for i, y in ys.items() if values[y] > 0.5)
                for kind, ys in self.y_dev.items()
            }
        return PlanSolution(
            case_name=self.case.name,
            options=self.options,
            lines_built=tuple(bool(values[z] > 0.5) for z in self.z),
            stations=tuple(i for i, y in self.y_v2g.items() if values[y] > 0.5),
            devices=devices_built,
            dispatch=[self._extract_scenario(k, values) for k in range(self.K)],
            objective=float(report.objective or 0.0),
            report=report,
        )

    def limiting(self, values: np.ndarray, tol: float = FEASIBILITY_TOL) -> List[Dict[str, Any]]:
        """松弛为正的约束，按约束族与元件取最大值，降序排列"""
        worst: Dict[Tuple[str, str], Dict[str, Any]] = {}
        for s in self.slacks:
            amount = float(values[s.var])
            if amount <= tol:
                continue
            key = (s.family, _tag(s.element))
            magnitude = amount * s.scale
            if key not in worst or magnitude > worst[key]["amount"]:
                worst[key] = {
                    "family": s.family,
                    "element": s.element,
                    "scenario": s.scenario,
                    "period": s.period,
                    "amount": magnitude,
                }
        return sorted(worst.values(), key=lambda h: -h["amount"])


# ==================== 求解入口 ====================
def build_sp2(
    case: NetworkCase,
    agg_profiles: AggProfiles = None,
    options: Optional[PlanOptions] = None,
    model: Optional[MipModel] = None,
    coupling: Optional[Coupling] = None,
    fixed_builds: Optional[PlanSolution] = None,
    elastic: bool = False,
) -> MipModel:
    """
    构建子问题二 MISOCP

    Args:
        case: 已校验的案例
        agg_profiles: 区域 -> 充电站负荷曲线 (kW)，或逐场景的列表
        options: 无功支撑 / 分布式资源开关
        model: 已有模型（整体模型中追加）
        coupling: 整体模型的车辆功率耦合项
        fixed_builds: 固定建设决策
        elastic: 是否构建松弛诊断模型

    Returns:
        MipModel
    """
    builder = Sp2Builder(case, options, model, elastic)
    return builder.build(agg_profiles, coupling, fixed_builds)


def diagnose_infeasibility(
    case: NetworkCase,
    agg_profiles: AggProfiles = None,
    options: Optional[PlanOptions] = None,
    limits: Optional[SolveLimits] = None,
    backend_name: Optional[str] = None,
    fixed_builds: Optional[PlanSolution] = None,
    fixed_operations: Optional[PlanSolution] = None,
    cone_tol: float = DEFAULT_CONE_TOL,
    max_rounds: int = DEFAULT_OA_MAX_ROUNDS,
    seed_tangents: int = DEFAULT_OA_SEED_TANGENTS,
) -> List[Dict[str, Any]]:
    """
    松弛诊断：在容量、电压、变电站与充电站约束上加入松弛后最小化松弛和

    Returns:
        触发的约束族列表 (family / element / scenario / period / amount)，可行时为空
    """
    builder = Sp2Builder(case, options, elastic=True)
    model = builder.build(agg_profiles, None, fixed_builds, fixed_operations)
    report = solve_with_oa(
        model, limits, cone_tol, max_rounds, seed_tangents, get_backend(backend_name)
    )
    if not report.has_solution:
        logger.warning(f"松弛诊断未得到解: {report.status} ({report.message})")
        return []
    hints = builder.limiting(report.values)
    for h in hints:
        logger.info(
            f"🔎 约束 {h['family']} @ {_tag(h['element'])} 场景 {h['scenario']} "
            f"时段 {h['period']} 越限 {h['amount']:.4g}"
        )
    return hints


def solve_sp2(
    case: NetworkCase,
    agg_profiles: AggProfiles = None,
    options: Optional[PlanOptions] = None,
    limits: Optional[SolveLimits] = None,
    cone_tol: float = DEFAULT_CONE_TOL,
    max_rounds: int = DEFAULT_OA_MAX_ROUNDS,
    seed_tangents: int = DEFAULT_OA_SEED_TANGENTS,
    backend_name: Optional[str] = None,
    fixed_builds: Optional[PlanSolution] = None,
    fixed_operations: Optional[PlanSolution] = None,
    dump_model: Optional[Union[str, Path]] = None,
    diagnose: bool = True,
) -> PlanSolution:
    """
    求解子问题二

    Args:
        case: 案例
        agg_profiles: 区域充电站负荷曲线
        options: 规划选项
        limits: gap / 时间限制
        cone_tol, max_rounds, seed_tangents: 外逼近参数
        backend_name: MILP 后端
        fixed_builds: 固定建设决策（仅求运行）
        fixed_operations: 固定离散运行状态
        dump_model: 写出 LP 文件的路径
        diagnose: 不可行时是否进行松弛诊断

    Returns:
        PlanSolution（含 CostBreakdown）
    """
    options = options or PlanOptions()
    limits = limits or SolveLimits()
    builder = Sp2Builder(case, options)
    model = builder.build(agg_profiles, None, fixed_builds, fixed_operations)
    logger.info(f"📐 规划模型 [{options.label()}]: {model.summary()}")
    if dump_model:
        model.dump(dump_model)
        logger.info(f"💾 模型已写出到 {dump_model}")

    report = solve_with_oa(
        model, limits, cone_tol, max_rounds, seed_tangents, get_backend(backend_name)
    )
    if report.status == INFEASIBLE:
        hints = []
        if diagnose:
            hints = diagnose_infeasibility(
                case,
                agg_profiles,
                options,
                limits,
                backend_name,
                fixed_builds,
                fixed_operations,
                cone_tol,
                max_rounds,
                seed_tangents,
            )
        raise InfeasibleError("planning problem is infeasible", hints)
    if not report.has_solution:
        raise SolverLimitError(f"planning solve stopped: {report.status} ({report.message})")

    plan = builder.extract(report)
    plan.costs = extract_costs(plan, case)
    logger.info(
        f"✅ 规划完成: 线路 {sum(plan.lines_built)} 条, 充电站 {list(plan.stations)}, "
        f"总成本 {plan.costs.total:.4f}"
    )
    return plan


def solve_dispatch(
    case: NetworkCase,
    plan: PlanSolution,
    agg_profiles: AggProfiles = None,
    fix_operations: bool = False,
    **kwargs,
) -> PlanSolution:
    """建设决策固定为 plan，仅优化运行"""
    return solve_sp2(
        case,
        agg_profiles,
        plan.options,
        fixed_builds=plan,
        fixed_operations=plan if fix_operations else None,
        **kwargs,
    )


# ==================== 成本 ====================
def network_loss_cost(
    plan: PlanSolution, case: NetworkCase, econ: Optional[EconomicParams] = None
) -> float:
    """年化网损成本：Σ_k p_k · 365 · Σ_t C_t · Δt · Σ_l R_l (P² + Q²)"""
    econ = econ or case.econ
    base = case.base_kva
    price = np.asarray(case.tariff.price, dtype=float)
    total = 0.0
    for d in plan.dispatch:
        for l, line in enumerate(case.lines):
            squared = (d.line_p[l] / base) ** 2 + (d.line_q[l] / base) ** 2
            total += (
                d.probability
                * econ.days_per_year
                * econ.hours_per_period
                * case.line_r_pu(line)
                * base
                / econ.currency_scale
                * float(np.dot(price, squared))
            )
    return total


def extract_costs(
    plan: PlanSolution,
    case: NetworkCase,
    econ: Optional[EconomicParams] = None,
    objective: Optional[float] = None,
    check: bool = True,
) -> CostBreakdown:
    """
    由原始变量值重算年化成本

    Args:
        plan: 规划结果
        case: 案例
        econ: 经济参数，默认取案例
        objective: 对照的求解目标值，默认 plan.objective
        check: 是否校验一致性

    Returns:
        CostBreakdown
    """
    econ = econ or case.econ
    line_capex = asset_factor(econ, "line") * sum(
        line.capex for line, built in zip(case.lines, plan.lines_built) if built
    )
    r_v2g = asset_factor(econ, "v2g")
    v2g_capex = sum(r_v2g * case.node(i).v2g.capex for i in plan.stations)
    o_and_m = sum(case.node(i).v2g.opex for i in plan.stations)
    dgr_capex = 0.0
    for kind, nodes in plan.devices.items():
        factor = asset_factor(econ, kind)
        for i in nodes:
            dev = case.node(i).dgr[kind]
            dgr_capex += factor * dev.capex
            o_and_m += dev.opex
    costs = CostBreakdown(
        line_capex=line_capex,
        v2g_capex=v2g_capex,
        dgr_capex=dgr_capex,
        o_and_m=o_and_m,
        network_loss=network_loss_cost(plan, case, econ),
    )
    target = plan.objective if objective is None else objective
    if check and target is not None:
        if abs(costs.total - target) > COST_TOL * max(1.0, abs(target)):
            raise ConsistencyError(
                f"recomputed total {costs.total:.6f} differs from solver objective {target:.6f}"
            )
    return costs


# ==================== 文件读写 ====================
def save_plan(
    plan: PlanSolution,
    case: NetworkCase,
    out_dir: Union[str, Path],
    label: Optional[str] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Path]:
    """
    写出规划结果：plan.json、costs.csv、voltage.csv 以及各设备运行轨迹 CSV

    Returns:
        文件类型 -> 路径
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: Dict[str, Path] = {}

    report = plan.report
    payload = {
        "label": label or plan.options.label(),
        "plan": plan.to_dict(),
        "solve": report.to_dict() if isinstance(report, SolveReport) else None,
    }
    if extra:
        payload.update(extra)
    paths["plan"] = out_dir / "plan.json"
    with open(paths["plan"], "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, ensure_ascii=False)

    costs = plan.costs or extract_costs(plan, case, check=False)
    paths["costs"] = out_dir / "costs.csv"
    pd.DataFrame(
        [{"item": k, "value": v} for k, v in costs.to_dict().items()]
    ).to_csv(paths["costs"], index=False)

    node_ids = case.node_ids
    voltage, flows, stations, substation = [], [], [], []
    pv, svc, ess, cb, oltc = [], [], [], [], []
    for k, d in enumerate(plan.dispatch):
        v = d.voltage
        for row, node_id in enumerate(node_ids):
            for t in range(case.periods):
                voltage.append({"scenario": k, "node": node_id, "t": t + 1, "v_pu": v[row, t]})
        for l, line in enumerate(case.lines):
            if not plan.lines_built[l]:
                continue
            for t in range(case.periods):
                flows.append(
                    {
                        "scenario": k,
                        "from": line.from_node,
                        "to": line.to_node,
                        "t": t + 1,
                        "p_kw": d.line_p[l, t],
                        "q_kvar": d.line_q[l, t],
                    }
                )
        for t in range(case.periods):
            substation.append(
                {"scenario": k, "t": t + 1, "p_kw": d.sub_p[t], "q_kvar": d.sub_q[t]}
            )
        for i in plan.stations:
            for t in range(case.periods):
                stations.append(
                    {"scenario": k, "node": i, "t": t + 1, "p_kw": d.v2g_p[i][t], "q_kvar": d.v2g_q[i][t]}
                )
        built = {kind: set(nodes) for kind, nodes in plan.devices.items()}
        for i, series in d.pv_p.items():
            if i in built.get("pv", ()):
                pv.extend({"scenario": k, "node": i, "t": t + 1, "p_kw": series[t]} for t in range(case.periods))
        for i, series in d.svc_q.items():
            if i in built.get("svc", ()):
                svc.extend({"scenario": k, "node": i, "t": t + 1, "q_kvar": series[t]} for t in range(case.periods))
        for i, rec in d.ess.items():
            if i in built.get("ess", ()):
                ess.extend(
                    {
                        "scenario": k,
                        "node": i,
                        "t": t + 1,
                        "e_kwh": rec["e"][t],
                        "p_ch_kw": rec["p_ch"][t],
                        "p_dis_kw": rec["p_dis"][t],
                    }
                    for t in range(case.periods)
                )
        for i, rec in d.cb.items():
            if i in built.get("cb", ()):
                cb.extend(
                    {"scenario": k, "node": i, "t": t + 1, "banks": int(rec["count"][t]), "q_kvar": rec["q"][t]}
                    for t in range(case.periods)
                )
        if d.oltc is not None:
            taps = case.oltc.tap_voltages()
            oltc.extend(
                {
                    "scenario": k,
                    "t": t + 1,
                    "tap": int(d.oltc["tap"][t]),
                    "v_pu": float(taps[int(d.oltc["tap"][t])]),
                }
                for t in range(case.periods)
            )

    tables = {
        "voltage": (voltage, ["scenario", "node", "t", "v_pu"]),
        "flows": (flows, ["scenario", "from", "to", "t", "p_kw", "q_kvar"]),
        "substation": (substation, ["scenario", "t", "p_kw", "q_kvar"]),
        "v2g": (stations, ["scenario", "node", "t", "p_kw", "q_kvar"]),
        "pv": (pv, ["scenario", "node", "t", "p_kw"]),
        "svc": (svc, ["scenario", "node", "t", "q_kvar"]),
        "ess": (ess, ["scenario", "node", "t", "e_kwh", "p_ch_kw", "p_dis_kw"]),
        "cb": (cb, ["scenario", "node", "t", "banks", "q_kvar"]),
        "oltc": (oltc, ["scenario", "t", "tap", "v_pu"]),
    }
    for name, (rows, columns) in tables.items():
        if not rows and name not in ("voltage", "flows", "substation"):
            continue
        paths[name] = out_dir / f"{name}.csv"
        pd.DataFrame(rows, columns=columns).to_csv(paths[name], index=False)

    if isinstance(report, SolveReport) and report.gap_trace:
        paths["gap"] = out_dir / "gap.csv"
        pd.DataFrame(report.gap_trace, columns=["time_s", "gap"]).to_csv(paths["gap"], index=False)

    logger.info(f"💾 规划结果已写入 {out_dir}")
    return paths


def load_plan(path: Union[str, Path]) -> PlanSolution:
    """读取 plan.json（也接受目录）"""
    path = Path(path)
    if path.is_dir():
        path = path / "plan.json"
    if not path.exists():
        raise InputError(f"plan file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return PlanSolution.from_dict(data.get("plan", data))
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise InputError(f"plan file {path} is malformed: {e}") from e
