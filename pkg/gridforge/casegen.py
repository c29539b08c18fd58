"""
算例生成
IEEE 33 节点标准算例、47 节点四区域合成算例、按渗透率生成车队
"""

import logging
import math
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from .case_loader import case_from_dict, validate_fleet
from .consts import (
    AEV_E_MAX_KWH,
    AEV_E_MIN_FRACTION,
    AEV_P_MAX_KW,
    DEFAULT_PERIODS,
    DEFAULT_REGION_MIX,
    SCHEMA_VERSION,
    V2G_NEW_CAPEX,
    V2G_OPEX,
    V2G_RETROFIT_CAPEX,
    WINDOW_ARCHETYPES,
)
from .economics import penetration_rate
from .errors import InputError
from .models import Aev, AevFleet, NetworkCase

logger = logging.getLogger("gridforge.casegen")

PENETRATION_TOL = 0.02
MAX_VEHICLES = 5000

# ==================== IEEE 33 节点 ====================
# (首端, 末端, R Ω, X Ω)，末端节点负荷 (kW, kvar)
IEEE33_BRANCHES: List[Tuple[int, int, float, float, float, float]] = [
    (1, 2, 0.0922, 0.0470, 100, 60),
    (2, 3, 0.4930, 0.2511, 90, 40),
    (3, 4, 0.3660, 0.1864, 120, 80),
    (4, 5, 0.3811, 0.1941, 60, 30),
    (5, 6, 0.8190, 0.7070, 60, 20),
    (6, 7, 0.1872, 0.6188, 200, 100),
    (7, 8, 0.7114, 0.2351, 200, 100),
    (8, 9, 1.0300, 0.7400, 60, 20),
    (9, 10, 1.0440, 0.7400, 60, 20),
    (10, 11, 0.1966, 0.0650, 45, 30),
    (11, 12, 0.3744, 0.1238, 60, 35),
    (12, 13, 1.4680, 1.1550, 60, 35),
    (13, 14, 0.5416, 0.7129, 120, 80),
    (14, 15, 0.5910, 0.5260, 60, 10),
    (15, 16, 0.7463, 0.5450, 60, 20),
    (16, 17, 1.2890, 1.7210, 60, 20),
    (17, 18, 0.7320, 0.5740, 90, 40),
    (2, 19, 0.1640, 0.1565, 90, 40),
    (19, 20, 1.5042, 1.3554, 90, 40),
    (20, 21, 0.4095, 0.4784, 90, 40),
    (21, 22, 0.7089, 0.9373, 90, 40),
    (3, 23, 0.4512, 0.3083, 90, 50),
    (23, 24, 0.8980, 0.7091, 420, 200),
    (24, 25, 0.8960, 0.7011, 420, 200),
    (6, 26, 0.2030, 0.1034, 60, 25),
    (26, 27, 0.2842, 0.1447, 60, 25),
    (27, 28, 1.0590, 0.9337, 60, 20),
    (28, 29, 0.8042, 0.7006, 120, 70),
    (29, 30, 0.5075, 0.2585, 200, 600),
    (30, 31, 0.9744, 0.9630, 150, 70),
    (31, 32, 0.3105, 0.3619, 210, 100),
    (32, 33, 0.3410, 0.5302, 60, 40),
]

# 联络线
IEEE33_TIES: List[Tuple[int, int, float, float]] = [
    (8, 21, 2.0, 2.0),
    (9, 15, 2.0, 2.0),
    (12, 22, 2.0, 2.0),
    (18, 33, 0.5, 0.5),
    (25, 29, 0.5, 0.5),
]

IEEE33_BASE_KV = 12.66
IEEE33_LINE_S_MAX_KVA = 5000.0
# 线路长度按 0.4 Ω/km 由阻抗折算
IEEE33_OHM_PER_KM = 0.4

IEEE33_REGIONS = {
    **{i: "office" for i in range(2, 19)},
    **{i: "industrial" for i in range(19, 26)},
    **{i: "residential" for i in range(26, 34)},
}

IEEE33_STATIONS = {6: "retrofit", 13: "new", 20: "new", 24: "retrofit", 27: "retrofit", 31: "new"}

IEEE33_DEVICES = {"pv": (18, 33), "ess": (25,), "cb": (30,), "svc": (17,)}

# ==================== 47 节点合成算例 ====================
SYNTH47_REGIONS = (
    ("office", range(1, 12)),
    ("industrial", range(12, 18)),
    ("residential", range(18, 34)),
    ("commercial", range(34, 48)),
)
SYNTH47_RETROFIT = (17, 26, 27, 33, 47)
SYNTH47_DEVICES = {"pv": (10, 30), "ess": (20,), "cb": (40,), "svc": (15,)}
SYNTH47_TIES = 8
SYNTH47_OHM_PER_KM = (0.27, 0.35)


def _station(mode: str) -> Dict[str, Any]:
    capex = V2G_RETROFIT_CAPEX if mode == "retrofit" else V2G_NEW_CAPEX
    return {"mode": mode, "capex": capex, "opex": V2G_OPEX}


def _attach_devices(nodes: Dict[int, Dict[str, Any]], devices: Mapping[str, Iterable[int]]):
    for kind, node_ids in devices.items():
        for node_id in node_ids:
            if node_id not in nodes:
                raise InputError(f"device candidate {kind} references unknown node {node_id}")
            nodes[node_id].setdefault("dgr", {})[kind] = True


def ieee33_case(
    device_candidates: Optional[Mapping[str, Iterable[int]]] = None,
    stations: Optional[Mapping[int, str]] = None,
    periods: int = DEFAULT_PERIODS,
    oltc: bool = True,
) -> NetworkCase:
    """
    IEEE 33 节点算例：32 条支路 + 5 条联络线均为候选线路

    Args:
        device_candidates: 设备类型 -> 候选节点；None 使用默认配置，空字典表示不配置 DGR
        stations: 候选充电站 节点 -> retrofit/new；None 使用默认配置
        periods: 时段数
        oltc: 是否启用有载调压

    Returns:
        NetworkCase
    """
    devices = IEEE33_DEVICES if device_candidates is None else device_candidates
    stations = IEEE33_STATIONS if stations is None else stations

    nodes: Dict[int, Dict[str, Any]] = {1: {"id": 1, "region": None}}
    for _, to, _, _, p, q in IEEE33_BRANCHES:
        region = IEEE33_REGIONS[to]
        nodes[to] = {
            "id": to,
            "region": region,
            "p_load": {"peak_kw": float(p), "profile": region},
            "q_load": {"peak_kvar": float(q), "profile": region},
        }
    for node_id, mode in stations.items():
        if node_id not in nodes:
            raise InputError(f"station candidate references unknown node {node_id}")
        nodes[node_id]["v2g"] = _station(mode)
    _attach_devices(nodes, devices)

    lines = []
    branches = [(a, b, r, x) for a, b, r, x, _, _ in IEEE33_BRANCHES] + IEEE33_TIES
    for a, b, r, x in branches:
        lines.append(
            {
                "from": a,
                "to": b,
                "r_ohm": r,
                "x_ohm": x,
                "s_max_kva": IEEE33_LINE_S_MAX_KVA,
                "length_km": round(math.hypot(r, x) / IEEE33_OHM_PER_KM, 4),
            }
        )

    data = {
        "schema_version": SCHEMA_VERSION,
        "name": "ieee33",
        "periods": periods,
        "substation": 1,
        "base": {"mva": 10.0, "kv": IEEE33_BASE_KV},
        "limits": {"v_min": 0.9, "v_max": 1.1, "v_substation": 1.0},
        "oltc": {"enabled": oltc},
        "tariff": "tou",
        "nodes": [nodes[i] for i in sorted(nodes)],
        "lines": lines,
    }
    case = case_from_dict(data)
    logger.info(f"生成 IEEE 33 节点算例: {len(case.lines)} 条候选线路，{len(case.v2g_nodes())} 个候选充电站")
    return case


def _synth47_topology(rng: np.random.RandomState) -> List[Tuple[int, int]]:
    """区域内随机树 + 区域入口接到办公区前段节点"""
    edges = []
    for region, node_ids in SYNTH47_REGIONS:
        members = list(node_ids)
        for pos, node_id in enumerate(members):
            if node_id == 1:
                continue
            if pos == 0:
                parent = int(rng.randint(1, 6))
            else:
                parent = members[int(rng.randint(0, pos))]
            edges.append((parent, node_id))

    existing = {frozenset(e) for e in edges}
    ties = []
    while len(ties) < SYNTH47_TIES:
        a, b = (int(v) for v in rng.randint(2, 48, size=2))
        key = frozenset((a, b))
        if a == b or key in existing:
            continue
        existing.add(key)
        ties.append((min(a, b), max(a, b)))
    return edges + ties


def synth47_case(seed: int = 0, periods: int = DEFAULT_PERIODS) -> NetworkCase:
    """
    47 节点四区域合成算例
    办公区 1-11、工业区 12-17、居民区 18-33、商业区 34-47；
    改造型候选站 {17, 26, 27, 33, 47}，其余非变电站节点为新建型候选站
    """
    rng = np.random.RandomState(seed)
    nodes: Dict[int, Dict[str, Any]] = {}
    for region, node_ids in SYNTH47_REGIONS:
        for node_id in node_ids:
            node: Dict[str, Any] = {"id": node_id, "region": region}
            if node_id != 1:
                peak = round(float(rng.uniform(30.0, 150.0)), 1)
                pf = float(rng.uniform(0.85, 0.95))
                node["p_load"] = {"peak_kw": peak, "profile": region}
                node["q_load"] = {
                    "peak_kvar": round(peak * math.tan(math.acos(pf)), 1),
                    "profile": region,
                }
                mode = "retrofit" if node_id in SYNTH47_RETROFIT else "new"
                node["v2g"] = _station(mode)
            nodes[node_id] = node
    _attach_devices(nodes, SYNTH47_DEVICES)

    r_km, x_km = SYNTH47_OHM_PER_KM
    lines = []
    for a, b in _synth47_topology(rng):
        length = round(float(rng.uniform(0.5, 2.0)), 3)
        lines.append(
            {
                "from": a,
                "to": b,
                "r_ohm": round(r_km * length, 5),
                "x_ohm": round(x_km * length, 5),
                "s_max_kva": 5000.0,
                "length_km": length,
            }
        )

    data = {
        "schema_version": SCHEMA_VERSION,
        "name": f"synth47-{seed}",
        "periods": periods,
        "substation": 1,
        "base": {"mva": 10.0, "kv": 10.0},
        "tariff": "tou",
        "nodes": [nodes[i] for i in sorted(nodes)],
        "lines": lines,
    }
    case = case_from_dict(data)
    logger.info(f"生成 47 节点合成算例 (seed={seed}): {len(case.lines)} 条候选线路")
    return case


# ==================== 车队 ====================
def _region_weights(case: NetworkCase, region_mix: Optional[Mapping[str, float]]) -> Dict[str, float]:
    present = set(case.regions.values()) - {None}
    if region_mix is None:
        mix = {r: w for r, w in DEFAULT_REGION_MIX.items() if r in present}
        if not mix:
            mix = {r: 1.0 for r in present}
    else:
        unknown = sorted(set(region_mix) - present)
        if unknown:
            raise InputError(f"region mix names regions absent from the case: {unknown}")
        mix = {r: float(w) for r, w in region_mix.items() if w > 0}
    total = sum(mix.values())
    if not mix or total <= 0:
        raise InputError("region mix has no positive weight")
    return {r: w / total for r, w in sorted(mix.items())}


def _window(rng: np.random.RandomState, region: str, periods: int) -> Tuple[int, int]:
    """按区域原型抽取接入时段，原型以 24 时段给出，按时段数等比缩放"""
    a_lo, a_hi, s_lo, s_hi = WINDOW_ARCHETYPES.get(region, WINDOW_ARCHETYPES["commercial"])
    factor = periods / 24.0
    arrive = int(rng.randint(a_lo, a_hi + 1))
    stay = int(rng.randint(s_lo, s_hi + 1))
    arrive = min(periods, max(1, int(round(arrive * factor))))
    stay = max(1, int(round(stay * factor)))
    return arrive, min(periods, arrive + stay - 1)


def _floor2(value: float) -> float:
    return math.floor(value * 100.0 + 1e-9) / 100.0


def _vehicle(
    rng: np.random.RandomState,
    vid: str,
    region: str,
    periods: int,
    hours: float,
    p_max: float,
    e_max: float,
) -> Aev:
    arrive, depart = _window(rng, region, periods)
    length = depart - arrive + 1
    e_min = round(AEV_E_MIN_FRACTION * e_max, 2)
    e0 = round(max(e_min, float(rng.uniform(0.2, 0.5)) * e_max), 2)
    target = float(rng.uniform(0.8, 1.0)) * e_max
    target = _floor2(min(target, e0 + p_max * length * hours, e_max))
    return Aev(
        id=vid,
        arrive=arrive,
        depart=depart,
        e0=e0,
        e_target=max(target, e0),
        e_min=e_min,
        e_max=e_max,
        p_ch_max=p_max,
        p_dis_max=p_max,
        region=region,
    )


def _rescaled(v: Aev, e_max: float) -> Aev:
    """按新电池容量等比缩放能量参数"""
    ratio = e_max / v.e_max
    e_min = round(v.e_min * ratio, 4)
    e0 = round(v.e0 * ratio, 4)
    target = math.floor(v.e_target * ratio * 1e4) / 1e4
    return Aev(
        id=v.id,
        arrive=v.arrive,
        depart=v.depart,
        e0=min(max(e0, e_min), e_max),
        e_target=min(max(target, e0, e_min), e_max),
        e_min=e_min,
        e_max=e_max,
        p_ch_max=v.p_ch_max,
        p_dis_max=v.p_dis_max,
        region=v.region,
    )


def gen_fleet(
    case: NetworkCase,
    target_penetration: float,
    region_mix: Optional[Mapping[str, float]] = None,
    seed: int = 0,
    p_max_kw: float = AEV_P_MAX_KW,
    e_max_kwh: float = AEV_E_MAX_KWH,
    max_vehicles: int = MAX_VEHICLES,
) -> AevFleet:
    """
    按目标渗透率生成车队，最后一辆车的电池容量按剩余缺口调整

    Args:
        case: 网络案例（提供系统负荷电量与区域）
        target_penetration: 目标渗透率 (0, 1]
        region_mix: 区域 -> 车辆占比；None 使用默认构成
        seed: 随机种子
        p_max_kw: 单车最大充放电功率
        e_max_kwh: 单车电池容量
        max_vehicles: 车辆数上限

    Returns:
        AevFleet
    """
    if not 0 < target_penetration <= 1:
        raise InputError(f"target penetration must lie in (0, 1], got {target_penetration:g}")
    if p_max_kw <= 0 or e_max_kwh <= 0:
        raise InputError("vehicle power and energy must be positive")

    rng = np.random.RandomState(seed)
    weights = _region_weights(case, region_mix)
    regions = list(weights)
    probs = [weights[r] for r in regions]
    hours = case.econ.hours_per_period
    goal = target_penetration * case.total_load_energy()

    vehicles: List[Aev] = []
    capacity = 0.0
    while capacity < goal * (1 - 1e-9):
        if len(vehicles) >= max_vehicles:
            raise InputError(
                f"target penetration {target_penetration:g} needs more than {max_vehicles} vehicles"
            )
        region = regions[int(rng.choice(len(regions), p=probs))]
        v = _vehicle(rng, f"ev{len(vehicles) + 1:04d}", region, case.periods, hours, p_max_kw, e_max_kwh)
        contribution = v.e_max * v.window_length * hours
        if capacity + contribution > goal:
            v = _rescaled(v, (goal - capacity) / (v.window_length * hours))
            contribution = v.e_max * v.window_length * hours
        vehicles.append(v)
        capacity += contribution

    fleet = AevFleet(tuple(vehicles))
    validate_fleet(fleet, case.periods, sorted(weights), hours)
    achieved = penetration_rate(fleet, case)
    if abs(achieved - target_penetration) > PENETRATION_TOL * target_penetration:
        raise InputError(
            f"generated fleet reaches {achieved:.4f}, target {target_penetration:.4f}"
        )
    logger.info(f"🚗 生成车队 {len(fleet)} 辆，渗透率 {achieved:.2%}")
    return fleet

