"""
规划结果独立校验
只使用原始变量值重算每一类约束，不依赖求解器状态；最恶劣充电曲线下的可行性检验
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import networkx as nx
import numpy as np

from .backend_manager import SolveLimits
from .consts import FEASIBILITY_TOL, WARNING_BAND
from .errors import InfeasibleError, SolverLimitError
from .models import AevFleet, NetworkCase, PlanSolution, ScenarioDispatch
from .planner import AggProfiles, normalize_profiles, solve_sp2
from .scheduler import worst_case_profile

logger = logging.getLogger("gridforge.verifier")

# 约束族
RADIALITY = "radiality"
NODAL_BALANCE_P = "nodal_balance_p"
NODAL_BALANCE_Q = "nodal_balance_q"
VOLTAGE_DROP = "voltage_drop"
UNBUILT_LINE_FLOW = "unbuilt_line_flow"
LINE_CAPACITY = "line_capacity"
VOLTAGE_BOUNDS = "voltage_bounds"
SUBSTATION_CAPACITY = "substation_capacity"
SUBSTATION_VOLTAGE = "substation_voltage"
V2G_GATING = "v2g_gating"
V2G_CAPACITY = "v2g_capacity"
V2G_REACTIVE = "v2g_reactive"
V2G_MIN_APPARENT = "v2g_min_apparent"
REGIONAL_COUPLING = "regional_coupling"
PV_OUTPUT = "pv_output"
SVC_OUTPUT = "svc_output"
ESS_ENERGY = "ess_energy"
ESS_POWER = "ess_power"
ESS_STATUS = "ess_status"
CB_OUTPUT = "cb_output"
CB_SWITCHING = "cb_switching"
CB_ORDERING = "cb_ordering"
OLTC_TAP = "oltc_tap"
OLTC_SWITCHING = "oltc_switching"
DEVICE_GATING = "device_gating"
DISPATCH_SHAPE = "dispatch_shape"


@dataclass
class Violation:
    family: str
    element: Any
    scenario: Optional[int]
    period: Optional[int]
    magnitude: float

    def to_dict(self) -> Dict[str, Any]:
        element = list(self.element) if isinstance(self.element, tuple) else self.element
        return {
            "family": self.family,
            "element": element,
            "scenario": self.scenario,
            "period": self.period,
            "magnitude": self.magnitude,
        }


@dataclass
class VerificationReport:
    violations: List[Violation] = field(default_factory=list)
    warnings: List[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def families(self) -> List[str]:
        return sorted({v.family for v in self.violations})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": "pass" if self.passed else "fail",
            "violations": [v.to_dict() for v in self.violations],
            "warnings": [v.to_dict() for v in self.warnings],
        }


class _Checker:
    """按容差分级记录越限：超过 tol·WARNING_BAND 为违反，(tol, tol·WARNING_BAND] 为警告"""

    def __init__(self, tol: float):
        self.tol = tol
        self.report = VerificationReport()

    def excess(
        self,
        family: str,
        element: Any,
        k: Optional[int],
        t: Optional[int],
        amount_pu: float,
        scale: float = 1.0,
        magnitude: Optional[float] = None,
    ) -> None:
        if amount_pu <= self.tol:
            return
        if magnitude is None:
            magnitude = amount_pu * scale
        item = Violation(family, element, k, t, float(magnitude))
        if amount_pu > self.tol * WARNING_BAND:
            self.report.violations.append(item)
        else:
            self.report.warnings.append(item)

    def fail(self, family: str, element: Any, magnitude: float = 1.0) -> None:
        self.report.violations.append(Violation(family, element, None, None, float(magnitude)))


def _check_radiality(c: _Checker, plan: PlanSolution, case: NetworkCase) -> None:
    graph = nx.Graph()
    graph.add_nodes_from(case.node_ids)
    graph.add_edges_from(plan.built_line_keys(case))
    if not nx.is_forest(graph):
        cycle = nx.find_cycle(graph)
        c.fail(RADIALITY, tuple(tuple(sorted(e[:2])) for e in cycle), len(cycle))
    if not nx.is_connected(graph):
        root = nx.node_connected_component(graph, case.substation)
        detached = tuple(sorted(set(case.node_ids) - root))
        c.fail(RADIALITY, detached, len(detached))


def _built(plan: PlanSolution, kind: str) -> set:
    return set(plan.devices.get(kind, ()))


def _shape_errors(case: NetworkCase, d: ScenarioDispatch) -> List[str]:
    """运行轨迹数组维度与案例不符的字段名"""
    T = case.periods
    expected = {
        "line_p": (len(case.lines), T),
        "line_q": (len(case.lines), T),
        "w": (len(case.nodes), T),
        "sub_p": (T,),
        "sub_q": (T,),
    }
    bad = [name for name, shape in expected.items() if np.shape(getattr(d, name)) != shape]
    for name in ("v2g_p", "v2g_q", "pv_p", "svc_q"):
        for i, arr in getattr(d, name).items():
            if np.shape(arr) != (T,):
                bad.append(f"{name}[{i}]")
    for name in ("ess", "cb"):
        for i, rec in getattr(d, name).items():
            bad.extend(
                f"{name}[{i}].{key}"
                for key, arr in rec.items()
                if key != "steps" and np.shape(arr) != (T,)
            )
    if d.oltc is not None:
        bad.extend(
            f"oltc.{key}" for key, arr in d.oltc.items() if key != "steps" and np.shape(arr) != (T,)
        )
    return bad


def _check_steps(c: _Checker, family: str, element: Any, k: int, steps: Any, total: np.ndarray) -> None:
    """有序档位：第 s+1 档投入时第 s 档必须投入，且档位和等于投入数"""
    steps = np.atleast_2d(np.asarray(steps, dtype=float))
    if steps.shape[1] != len(total):
        c.fail(DISPATCH_SHAPE, (k, element, "steps"), abs(steps.shape[1] - len(total)))
        return
    for t in range(len(total)):
        for s in range(steps.shape[0] - 1):
            c.excess(family, element, k, t + 1, steps[s + 1, t] - steps[s, t])
        c.excess(family, element, k, t + 1, abs(steps[:, t].sum() - total[t]))


def _check_scenario(
    c: _Checker,
    plan: PlanSolution,
    case: NetworkCase,
    k: int,
    d: ScenarioDispatch,
    profile: Dict[str, np.ndarray],
    enforce_min_apparent: bool,
) -> None:
    base = case.base_kva
    T = case.periods
    index = case.node_index
    p_load, q_load = case.scenario_loads(k)
    w_lo, w_hi = case.v_min**2, case.v_max**2
    sub_row = index[case.substation]

    # 节点注入 (kW / kvar)
    p_inj = -p_load.copy()
    q_inj = -q_load.copy()
    p_inj[sub_row] += d.sub_p
    q_inj[sub_row] += d.sub_q

    # ---------- 线路 ----------
    for l, line in enumerate(case.lines):
        a, b = line.key
        p, q = d.line_p[l], d.line_q[l]
        p_inj[index[b]] += p
        p_inj[index[a]] -= p
        q_inj[index[b]] += q
        q_inj[index[a]] -= q
        for t in range(T):
            if plan.lines_built[l]:
                # 与锥约束同口径：P² + Q² − S̄² (标幺平方)
                squared = (p[t] ** 2 + q[t] ** 2 - line.s_max**2) / base**2
                c.excess(
                    LINE_CAPACITY, line.key, k, t + 1, squared,
                    magnitude=float(np.hypot(p[t], q[t]) - line.s_max),
                )
                drop = (
                    d.w[index[a], t]
                    - d.w[index[b], t]
                    - 2.0 * (case.line_r_pu(line) * p[t] + case.line_x_pu(line) * q[t]) / base
                )
                c.excess(VOLTAGE_DROP, line.key, k, t + 1, abs(drop))
            else:
                c.excess(UNBUILT_LINE_FLOW, line.key, k, t + 1, max(abs(p[t]), abs(q[t])) / base, base)

    # ---------- 电压与变电站 ----------
    for row, node_id in enumerate(case.node_ids):
        for t in range(T):
            w = d.w[row, t]
            c.excess(VOLTAGE_BOUNDS, node_id, k, t + 1, max(w - w_hi, w_lo - w))
    for t in range(T):
        c.excess(SUBSTATION_CAPACITY, case.substation, k, t + 1, (abs(d.sub_p[t]) - case.sub_p_max) / base, base)
        c.excess(SUBSTATION_CAPACITY, case.substation, k, t + 1, (abs(d.sub_q[t]) - case.sub_q_max) / base, base)
    oltc_active = plan.options.dgrs_enabled and case.oltc.enabled
    if oltc_active and d.oltc is not None:
        tap_w = case.oltc.tap_w()
        taps = np.asarray(d.oltc["tap"]).astype(int)
        if "steps" in d.oltc:
            _check_steps(c, OLTC_TAP, case.substation, k, d.oltc["steps"], taps)
        if taps.min(initial=0) < 0 or taps.max(initial=0) >= len(tap_w):
            c.fail(OLTC_TAP, case.substation, float(max(-taps.min(), taps.max() - len(tap_w) + 1)))
            taps = np.clip(taps, 0, len(tap_w) - 1)
        for t in range(T):
            c.excess(OLTC_TAP, case.substation, k, t + 1, abs(d.w[sub_row, t] - tap_w[taps[t]]))
        changes = int(np.count_nonzero(np.diff(taps)))
        c.excess(OLTC_SWITCHING, case.substation, k, None, float(changes - case.oltc.max_switches))
    else:
        for t in range(T):
            c.excess(SUBSTATION_VOLTAGE, case.substation, k, t + 1, abs(d.w[sub_row, t] - case.v_substation**2))

    # ---------- 充电站 ----------
    stations = set(plan.stations)
    regional: Dict[str, np.ndarray] = {}
    for i in case.v2g_nodes():
        node = case.node(i)
        p = d.v2g_p.get(i, np.zeros(T))
        q = d.v2g_q.get(i, np.zeros(T))
        p_inj[index[i]] -= p
        q_inj[index[i]] += q
        if node.region is not None:
            regional[node.region] = regional.get(node.region, np.zeros(T)) + p
        for t in range(T):
            if i in stations:
                apparent = float(np.hypot(p[t], q[t]))
                c.excess(
                    V2G_CAPACITY, i, k, t + 1,
                    (apparent**2 - node.v2g.s_max**2) / base**2,
                    magnitude=apparent - node.v2g.s_max,
                )
                if enforce_min_apparent:
                    c.excess(V2G_MIN_APPARENT, i, k, t + 1, (node.v2g.s_min - apparent) / base, base)
            else:
                c.excess(V2G_GATING, i, k, t + 1, max(abs(p[t]), abs(q[t])) / base, base)
            if not plan.options.reactive_support:
                c.excess(V2G_REACTIVE, i, k, t + 1, abs(q[t]) / base, base)
    for region in sorted(set(regional) | set(profile)):
        served = regional.get(region, np.zeros(T))
        demand = profile.get(region, np.zeros(T))
        for t in range(T):
            c.excess(REGIONAL_COUPLING, region, k, t + 1, abs(served[t] - demand[t]) / base, base)

    # ---------- 分布式资源 ----------
    for i, p in d.pv_p.items():
        dev = case.node(i).dgr["pv"]
        cap = np.asarray(dev.p_max) if i in _built(plan, "pv") else np.zeros(T)
        p_inj[index[i]] += p
        for t in range(T):
            family = PV_OUTPUT if i in _built(plan, "pv") else DEVICE_GATING
            c.excess(family, i, k, t + 1, max(p[t] - cap[t], -p[t]) / base, base)
    for i, q in d.svc_q.items():
        dev = case.node(i).dgr["svc"]
        y = 1.0 if i in _built(plan, "svc") else 0.0
        q_inj[index[i]] += q
        for t in range(T):
            family = SVC_OUTPUT if y else DEVICE_GATING
            c.excess(family, i, k, t + 1, max(q[t] - y * dev.q_max, y * dev.q_min - q[t]) / base, base)
    for i, rec in d.ess.items():
        dev = case.node(i).dgr["ess"]
        y = 1.0 if i in _built(plan, "ess") else 0.0
        e, ch, dis = rec["e"], rec["p_ch"], rec["p_dis"]
        t_ch, t_dis = rec["t_ch"], rec["t_dis"]
        p_inj[index[i]] += dis - ch
        h = case.econ.hours_per_period
        for t in range(T):
            family = ESS_POWER if y else DEVICE_GATING
            c.excess(ESS_ENERGY if y else DEVICE_GATING, i, k, t + 1, max(e[t] - y * dev.e_max, y * dev.e_min - e[t]) / base, base)
            c.excess(family, i, k, t + 1, max(ch[t] - t_ch[t] * dev.p_ch_max, t_ch[t] * dev.p_min - ch[t], -ch[t]) / base, base)
            c.excess(family, i, k, t + 1, max(dis[t] - t_dis[t] * dev.p_dis_max, t_dis[t] * dev.p_min - dis[t], -dis[t]) / base, base)
            c.excess(ESS_STATUS, i, k, t + 1, t_ch[t] + t_dis[t] - y)
            nxt = e[(t + 1) % T]
            expected = e[t] + dev.eta_ch * ch[t] * h - dis[t] * h / dev.eta_dis
            c.excess(ESS_ENERGY, i, k, t + 1, abs(nxt - expected) / base, base)
    for i, rec in d.cb.items():
        dev = case.node(i).dgr["cb"]
        y = 1.0 if i in _built(plan, "cb") else 0.0
        count = np.asarray(rec["count"], dtype=float)
        q = rec["q"]
        q_inj[index[i]] += q
        for t in range(T):
            expected = y * dev.q_min + dev.bank_kvar * count[t]
            c.excess(CB_OUTPUT, i, k, t + 1, abs(q[t] - expected) / base, base)
            c.excess(CB_OUTPUT if y else DEVICE_GATING, i, k, t + 1, count[t] - y * dev.banks)
        if "steps" in rec:
            _check_steps(c, CB_ORDERING, i, k, rec["steps"], count)
        changes = int(np.count_nonzero(np.diff(np.round(count))))
        c.excess(CB_SWITCHING, i, k, None, float(changes - dev.max_switches))

    # ---------- 节点功率平衡 ----------
    for row, node_id in enumerate(case.node_ids):
        for t in range(T):
            c.excess(NODAL_BALANCE_P, node_id, k, t + 1, abs(p_inj[row, t]) / base, base)
            c.excess(NODAL_BALANCE_Q, node_id, k, t + 1, abs(q_inj[row, t]) / base, base)


def verify_plan(
    plan: PlanSolution,
    case: NetworkCase,
    agg_profiles: AggProfiles = None,
    tol: float = FEASIBILITY_TOL,
    enforce_min_apparent: bool = False,
) -> VerificationReport:
    """
    独立校验规划结果

    Args:
        plan: 规划结果
        case: 案例
        agg_profiles: 求解时使用的区域充电站负荷曲线
        tol: 标幺容差
        enforce_min_apparent: 是否检查充电站视在功率下限

    Returns:
        VerificationReport；越限幅值以 kW / kvar / kVA 给出（电压类为标幺）
    """
    c = _Checker(tol)
    if len(plan.lines_built) != len(case.lines):
        c.fail(RADIALITY, "line count mismatch", abs(len(plan.lines_built) - len(case.lines)))
        return c.report
    _check_radiality(c, plan, case)
    if len(plan.dispatch) != len(case.scenarios):
        c.fail(
            DISPATCH_SHAPE,
            "scenario count mismatch",
            abs(len(plan.dispatch) - len(case.scenarios)),
        )
        return c.report
    profiles = normalize_profiles(case, agg_profiles)
    for k, d in enumerate(plan.dispatch):
        bad = _shape_errors(case, d)
        if bad:
            for name in bad:
                c.fail(DISPATCH_SHAPE, (k, name))
            continue
        _check_scenario(c, plan, case, k, d, profiles[k], enforce_min_apparent)
    if c.report.passed:
        logger.info(f"✅ 校验通过 ({len(c.report.warnings)} 条警告)")
    else:
        logger.warning(
            f"❌ 校验失败: {len(c.report.violations)} 条违反, 约束族 {c.report.families()}"
        )
    return c.report


# ==================== 最恶劣场景 ====================
@dataclass
class WorstCaseReport:
    feasible: bool
    status: str
    profiles: List[Dict[str, np.ndarray]]
    limiting: List[Dict[str, Any]] = field(default_factory=list)
    dispatch: Optional[PlanSolution] = None
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feasible": self.feasible,
            "status": self.status,
            "message": self.message,
            "limiting": [
                {**h, "element": list(h["element"]) if isinstance(h["element"], tuple) else h["element"]}
                for h in self.limiting
            ],
            "profiles": [
                {region: curve.tolist() for region, curve in p.items()} for p in self.profiles
            ],
        }


def verify_worst_case(
    plan: PlanSolution,
    case: NetworkCase,
    fleet: Optional[AevFleet] = None,
    fix_operations: bool = True,
    limits: Optional[SolveLimits] = None,
    backend_name: Optional[str] = None,
    **oa,
) -> WorstCaseReport:
    """
    最恶劣场景检验：所有接入车辆全程以最大功率充电，在固定的建设（与运行）决策下求解调度

    Args:
        plan: 规划结果（至少含建设决策）
        case: 案例
        fleet: 车队，为空时使用各场景车队
        fix_operations: 是否同时固定储能 / 电容器 / 分接头状态
        limits: 求解限制
        backend_name: MILP 后端

    Returns:
        WorstCaseReport；不可行时 limiting 给出触发的约束
    """
    case = case.with_fleet(fleet) if fleet is not None else case
    profiles = [worst_case_profile(s.fleet, case.periods) for s in case.scenarios]
    try:
        dispatch = solve_sp2(
            case,
            profiles,
            plan.options,
            limits,
            backend_name=backend_name,
            fixed_builds=plan,
            fixed_operations=plan if fix_operations else None,
            **oa,
        )
    except InfeasibleError as e:
        logger.warning(f"⚠️ 最恶劣充电曲线下不可行: {e}")
        return WorstCaseReport(False, "infeasible", profiles, e.hints, message=str(e))
    except SolverLimitError as e:
        return WorstCaseReport(False, "limit", profiles, message=str(e))
    logger.info("✅ 最恶劣充电曲线下仍存在可行调度")
    return WorstCaseReport(True, "feasible", profiles, dispatch=dispatch)
