"""
案例文件读写与校验
JSON 案例（带 schema_version）、CSV 负荷曲线、CSV 车队、电价文件
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import networkx as nx
import pandas as pd

from .consts import (
    CB_BANK_KVAR,
    CB_BANKS,
    CB_MAX_SWITCHES,
    DEVICE_COSTS,
    DEVICE_KINDS,
    DIURNAL_SHAPES,
    ESS_E_MAX_KWH,
    ESS_E_MIN_KWH,
    ESS_ETA_CH,
    ESS_ETA_DIS,
    ESS_P_CH_MAX_KW,
    ESS_P_DIS_MAX_KW,
    LINE_CAPEX_PER_KM,
    PV_PEAK_KW,
    REGIONS,
    SCHEMA_VERSION,
    SVC_Q_MAX_KVAR,
    SVC_Q_MIN_KVAR,
    V2G_OPEX,
    V2G_S_MAX_KVA,
    pv_shape,
)
from .economics import default_tariff, make_tariff
from .errors import CaseValidationError, FleetValidationError, InputError
from .models import (
    Aev,
    AevFleet,
    CbCandidate,
    EconomicParams,
    EssCandidate,
    LineSpec,
    NetworkCase,
    NodeSpec,
    OltcSpec,
    PvCandidate,
    Scenario,
    SvcCandidate,
    Tariff,
    V2gCandidate,
)

logger = logging.getLogger("gridforge.case_loader")

CASES_DIR = Path(__file__).parent / "cases"

FLEET_COLUMNS = [
    "u",
    "arrive_t",
    "depart_t",
    "e0_kwh",
    "etarget_kwh",
    "emin_kwh",
    "emax_kwh",
    "pmax_kw",
    "region",
]

PROBABILITY_TOL = 1e-9


def _fail(path: str, message: str):
    raise CaseValidationError(path, message)


def _number(data: Dict, key: str, path: str, default: Any = None) -> float:
    value = data.get(key, default)
    if value is None:
        _fail(f"{path}.{key}", "required field missing")
    try:
        value = float(value)
    except (TypeError, ValueError):
        _fail(f"{path}.{key}", f"expected a number, got {value!r}")
    if not math.isfinite(value):
        _fail(f"{path}.{key}", "must be finite")
    return value


def _non_negative(data: Dict, key: str, path: str, default: Any = None) -> float:
    value = _number(data, key, path, default)
    if value < 0:
        _fail(f"{path}.{key}", f"must be non-negative, got {value:g}")
    return value


def _bounds(lower: float, upper: float, path: str):
    if lower > upper:
        _fail(path, f"lower bound {lower:g} exceeds upper bound {upper:g}")


def _profile(value: Any, periods: int, path: str, peak_key: str) -> Tuple[float, ...]:
    """读取时序曲线：显式列表，或 {peak: x, profile: 名称} 简写"""
    if isinstance(value, dict):
        peak = _non_negative(value, peak_key, path)
        shape_name = value.get("profile", "flat")
        if shape_name == "pv":
            shape = pv_shape(periods)
        elif shape_name in DIURNAL_SHAPES:
            shape = DIURNAL_SHAPES[shape_name]
        else:
            _fail(f"{path}.profile", f"unknown profile {shape_name!r}")
        values = [round(peak * shape[t % len(shape)], 6) for t in range(periods)]
    elif isinstance(value, (list, tuple)):
        values = value
    else:
        _fail(path, "expected a list of per-period values")
    if len(values) != periods:
        _fail(path, f"expected {periods} values, got {len(values)}")
    out = []
    for t, v in enumerate(values):
        try:
            v = float(v)
        except (TypeError, ValueError):
            _fail(f"{path}[{t}]", f"expected a number, got {v!r}")
        if v < 0:
            _fail(f"{path}[{t}]", f"must be non-negative, got {v:g}")
        out.append(v)
    return tuple(out)


# ==================== 设备 ====================
def _device_costs(data: Dict, kind: str, path: str) -> Tuple[float, float]:
    capex = _non_negative(data, "capex", path, DEVICE_COSTS[kind]["capex"])
    opex = _non_negative(data, "opex", path, DEVICE_COSTS[kind]["opex"])
    return capex, opex


def _parse_dgr(kind: str, data: Any, periods: int, path: str):
    if data is True:
        data = {}
    if not isinstance(data, dict):
        _fail(path, "expected an object or true")
    capex, opex = _device_costs(data, kind, path)
    if kind == "pv":
        raw = data.get("p_max_kw", {"peak_kw": PV_PEAK_KW, "profile": "pv"})
        return PvCandidate(capex, opex, _profile(raw, periods, f"{path}.p_max_kw", "peak_kw"))
    if kind == "svc":
        q_min = _number(data, "q_min_kvar", path, SVC_Q_MIN_KVAR)
        q_max = _number(data, "q_max_kvar", path, SVC_Q_MAX_KVAR)
        _bounds(q_min, q_max, f"{path}.q_min_kvar")
        return SvcCandidate(capex, opex, q_min, q_max)
    if kind == "ess":
        e_min = _non_negative(data, "e_min_kwh", path, ESS_E_MIN_KWH)
        e_max = _non_negative(data, "e_max_kwh", path, ESS_E_MAX_KWH)
        _bounds(e_min, e_max, f"{path}.e_min_kwh")
        p_min = _non_negative(data, "p_min_kw", path, 0.0)
        p_ch = _non_negative(data, "p_ch_max_kw", path, ESS_P_CH_MAX_KW)
        p_dis = _non_negative(data, "p_dis_max_kw", path, ESS_P_DIS_MAX_KW)
        _bounds(p_min, min(p_ch, p_dis), f"{path}.p_min_kw")
        eta_ch = _number(data, "eta_ch", path, ESS_ETA_CH)
        eta_dis = _number(data, "eta_dis", path, ESS_ETA_DIS)
        if not (0 < eta_ch <= 1 and 0 < eta_dis <= 1):
            _fail(f"{path}.eta_ch", "efficiencies must lie in (0, 1]")
        return EssCandidate(capex, opex, e_min, e_max, p_ch, p_dis, p_min, eta_ch, eta_dis)
    if kind == "cb":
        bank = _non_negative(data, "bank_kvar", path, CB_BANK_KVAR)
        banks = int(_non_negative(data, "banks", path, CB_BANKS))
        switches = int(_non_negative(data, "max_switches", path, CB_MAX_SWITCHES))
        q_min = _non_negative(data, "q_min_kvar", path, 0.0)
        if banks < 1:
            _fail(f"{path}.banks", "at least one bank required")
        return CbCandidate(capex, opex, bank, banks, switches, q_min)
    _fail(path, f"unknown device kind {kind!r}")


def _dump_dgr(kind: str, device) -> Dict[str, Any]:
    out = {"capex": device.capex, "opex": device.opex}
    if kind == "pv":
        out["p_max_kw"] = list(device.p_max)
    elif kind == "svc":
        out.update(q_min_kvar=device.q_min, q_max_kvar=device.q_max)
    elif kind == "ess":
        out.update(
            e_min_kwh=device.e_min,
            e_max_kwh=device.e_max,
            p_ch_max_kw=device.p_ch_max,
            p_dis_max_kw=device.p_dis_max,
            p_min_kw=device.p_min,
            eta_ch=device.eta_ch,
            eta_dis=device.eta_dis,
        )
    elif kind == "cb":
        out.update(
            bank_kvar=device.bank_kvar,
            banks=device.banks,
            max_switches=device.max_switches,
            q_min_kvar=device.q_min,
        )
    return out


# ==================== 车队 ====================
def vehicle_from_record(record: Dict[str, Any], path: str = "fleet") -> Aev:
    """由字典（CSV 行或 JSON 对象）构造车辆"""
    missing = [c for c in FLEET_COLUMNS if c not in record or pd.isna(record[c])]
    if missing:
        raise FleetValidationError(record.get("u"), f"missing fields {missing}")
    p_max = float(record["pmax_kw"])
    p_dis = record.get("pdis_kw")
    if p_dis is None or pd.isna(p_dis):
        p_dis = p_max
    return Aev(
        id=str(record["u"]),
        arrive=int(record["arrive_t"]),
        depart=int(record["depart_t"]),
        e0=float(record["e0_kwh"]),
        e_target=float(record["etarget_kwh"]),
        e_min=float(record["emin_kwh"]),
        e_max=float(record["emax_kwh"]),
        p_ch_max=p_max,
        p_dis_max=abs(float(p_dis)),
        region=str(record["region"]),
    )


def vehicle_to_record(v: Aev) -> Dict[str, Any]:
    return {
        "u": v.id,
        "arrive_t": v.arrive,
        "depart_t": v.depart,
        "e0_kwh": v.e0,
        "etarget_kwh": v.e_target,
        "emin_kwh": v.e_min,
        "emax_kwh": v.e_max,
        "pmax_kw": v.p_ch_max,
        "pdis_kw": v.p_dis_max,
        "region": v.region,
    }


def validate_fleet(
    fleet: AevFleet,
    periods: int,
    regions: Optional[List[str]] = None,
    hours: float = 1.0,
) -> AevFleet:
    """
    校验车队

    Args:
        fleet: 车队
        periods: 时段数
        regions: 允许的区域，None 表示不检查
        hours: 每时段小时数

    Returns:
        原车队（校验通过）
    """
    seen = set()
    for v in fleet.vehicles:
        if v.id in seen:
            raise FleetValidationError(v.id, "duplicate vehicle id")
        seen.add(v.id)
        if v.window_length > 0 and not (1 <= v.arrive and v.depart <= periods):
            raise FleetValidationError(
                v.id, f"window {v.arrive}..{v.depart} outside periods 1..{periods}"
            )
        if v.depart < v.arrive - 1:
            raise FleetValidationError(v.id, "departure precedes arrival")
        if not v.e_min <= v.e0 <= v.e_max:
            raise FleetValidationError(v.id, "initial energy outside [e_min, e_max]")
        if not v.e_min <= v.e_target <= v.e_max:
            raise FleetValidationError(v.id, "target energy outside [e_min, e_max]")
        if v.p_ch_max < 0 or v.p_dis_max < 0:
            raise FleetValidationError(v.id, "power limits must be non-negative")
        if v.e_target - v.e0 > v.p_ch_max * v.window_length * hours + 1e-9:
            raise FleetValidationError(
                v.id,
                f"target energy unreachable: needs {v.e_target - v.e0:g} kWh, "
                f"window allows {v.p_ch_max * v.window_length * hours:g} kWh",
            )
        if regions is not None and v.region not in regions:
            raise FleetValidationError(v.id, f"unknown region {v.region!r}")
    return fleet


def load_fleet_csv(path: Union[str, Path]) -> AevFleet:
    """读取车队 CSV (u, arrive_t, depart_t, e0_kwh, etarget_kwh, emin_kwh, emax_kwh, pmax_kw, region)"""
    path = Path(path)
    if not path.exists():
        raise InputError(f"fleet file not found: {path}")
    df = pd.read_csv(path, dtype={"u": str, "region": str})
    missing = [c for c in FLEET_COLUMNS if c not in df.columns]
    if missing:
        raise InputError(f"fleet file {path} lacks columns {missing}")
    vehicles = tuple(vehicle_from_record(rec) for rec in df.to_dict(orient="records"))
    logger.info(f"读取车队 {path.name}: {len(vehicles)} 辆")
    return AevFleet(vehicles)


def save_fleet_csv(fleet: AevFleet, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = FLEET_COLUMNS + ["pdis_kw"]
    df = pd.DataFrame([vehicle_to_record(v) for v in fleet.vehicles], columns=columns)
    df.to_csv(path, index=False)
    return path


# ==================== 负荷曲线 CSV ====================
def load_profiles_csv(
    path: Union[str, Path], periods: int
) -> Dict[int, Tuple[Tuple[float, ...], Tuple[float, ...]]]:
    """
    读取负荷曲线 CSV (node_id, t, p_kw, q_kvar)

    Returns:
        节点 -> (p_load, q_load)
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"load profile file not found: {path}")
    df = pd.read_csv(path)
    required = ["node_id", "t", "p_kw", "q_kvar"]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise InputError(f"load profile file {path} lacks columns {missing}")
    profiles = {}
    for node_id, group in df.groupby("node_id"):
        group = group.set_index("t").sort_index()
        expected = list(range(1, periods + 1))
        if list(group.index) != expected:
            raise CaseValidationError(
                f"load_profile_csv[node {node_id}]",
                f"expected periods 1..{periods}, got {len(group)} rows",
            )
        profiles[int(node_id)] = (
            tuple(float(v) for v in group["p_kw"]),
            tuple(float(v) for v in group["q_kvar"]),
        )
    return profiles


def save_profiles_csv(case: NetworkCase, path: Union[str, Path]) -> Path:
    rows = []
    for node in case.nodes:
        for t in range(case.periods):
            rows.append(
                {
                    "node_id": node.id,
                    "t": t + 1,
                    "p_kw": node.p_load[t],
                    "q_kvar": node.q_load[t],
                }
            )
    path = Path(path)
    pd.DataFrame(rows).to_csv(path, index=False)
    return path


# ==================== 电价 ====================
def tariff_from_dict(data: Any, periods: int) -> Tariff:
    if data is None or data == "tou":
        return default_tariff(periods)
    if not isinstance(data, dict) or "price" not in data:
        _fail("tariff", "expected 'tou' or an object with a price vector")
    tariff = make_tariff(
        data["price"], data.get("charge_price"), data.get("discharge_subsidy")
    )
    if tariff.periods != periods:
        _fail("tariff.price", f"expected {periods} values, got {tariff.periods}")
    return tariff


def load_tariff(path: Union[str, Path], periods: int = 24) -> Tariff:
    """读取自定义电价文件"""
    path = Path(path)
    if not path.exists():
        raise InputError(f"tariff file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return tariff_from_dict(json.load(f), periods)


# ==================== 案例 ====================
def case_from_dict(data: Dict[str, Any], base_dir: Optional[Path] = None) -> NetworkCase:
    """
    由字典构造并校验 NetworkCase

    Args:
        data: 案例字典
        base_dir: 相对路径（车队 CSV、负荷 CSV）的基准目录

    Returns:
        校验后的 NetworkCase
    """
    if not isinstance(data, dict):
        _fail("", "case file must contain a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        _fail("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    base_dir = Path(base_dir) if base_dir else Path.cwd()

    periods = int(_number(data, "periods", "case", 24))
    if periods < 1:
        _fail("periods", "must be at least 1")

    overrides = {}
    if data.get("load_profile_csv"):
        overrides = load_profiles_csv(base_dir / data["load_profile_csv"], periods)

    # ---------- 节点 ----------
    raw_nodes = data.get("nodes")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        _fail("nodes", "at least one node required")
    nodes = []
    ids = set()
    for i, raw in enumerate(raw_nodes):
        path = f"nodes[{i}]"
        if "id" not in raw:
            _fail(f"{path}.id", "required field missing")
        node_id = int(raw["id"])
        if node_id in ids:
            _fail(f"{path}.id", f"duplicate node id {node_id}")
        ids.add(node_id)
        region = raw.get("region")
        if region is not None and region not in REGIONS:
            _fail(f"{path}.region", f"unknown region {region!r}")
        if node_id in overrides:
            p_load, q_load = overrides[node_id]
        else:
            p_load = _profile(raw.get("p_load", [0.0] * periods), periods, f"{path}.p_load", "peak_kw")
            q_load = _profile(raw.get("q_load", [0.0] * periods), periods, f"{path}.q_load", "peak_kvar")

        v2g = None
        if raw.get("v2g"):
            spec = raw["v2g"]
            vpath = f"{path}.v2g"
            mode = spec.get("mode")
            if mode not in ("retrofit", "new"):
                _fail(f"{vpath}.mode", f"expected 'retrofit' or 'new', got {mode!r}")
            s_min = _non_negative(spec, "s_min_kva", vpath, 0.0)
            s_max = _non_negative(spec, "s_max_kva", vpath, V2G_S_MAX_KVA)
            _bounds(s_min, s_max, f"{vpath}.s_min_kva")
            v2g = V2gCandidate(
                mode=mode,
                capex=_non_negative(spec, "capex", vpath),
                opex=_non_negative(spec, "opex", vpath, V2G_OPEX),
                s_max=s_max,
                s_min=s_min,
            )

        dgr = {}
        for kind, spec in (raw.get("dgr") or {}).items():
            if kind not in DEVICE_KINDS:
                _fail(f"{path}.dgr", f"unknown device kind {kind!r}")
            if spec is False or spec is None:
                continue
            dgr[kind] = _parse_dgr(kind, spec, periods, f"{path}.dgr.{kind}")

        nodes.append(NodeSpec(node_id, region, p_load, q_load, v2g, dgr))

    # ---------- 线路 ----------
    raw_lines = data.get("lines") or []
    lines = []
    seen = set()
    for i, raw in enumerate(raw_lines):
        path = f"lines[{i}]"
        a, b = int(raw.get("from", -1)), int(raw.get("to", -1))
        if a not in ids or b not in ids:
            _fail(path, f"line endpoints {a}-{b} reference unknown nodes")
        if a == b:
            _fail(path, "self loop")
        if frozenset((a, b)) in seen:
            _fail(path, f"duplicate candidate line {a}-{b}")
        seen.add(frozenset((a, b)))
        r = _number(raw, "r_ohm", path)
        x = _number(raw, "x_ohm", path)
        s_max = _number(raw, "s_max_kva", path)
        if r <= 0:
            _fail(f"{path}.r_ohm", "must be positive")
        if x < 0:
            _fail(f"{path}.x_ohm", "must be non-negative")
        if s_max <= 0:
            _fail(f"{path}.s_max_kva", "must be positive")
        length = _non_negative(raw, "length_km", path, 1.0)
        capex = _non_negative(raw, "capex", path, LINE_CAPEX_PER_KM * length)
        lines.append(LineSpec(a, b, r, x, s_max, capex, length))

    substation = int(_number(data, "substation", "case"))
    if substation not in ids:
        _fail("substation", f"unknown node {substation}")

    graph = nx.Graph()
    graph.add_nodes_from(ids)
    graph.add_edges_from(line.key for line in lines)
    reachable = nx.node_connected_component(graph, substation)
    unreachable = sorted(ids - reachable)
    if unreachable:
        _fail("lines", f"nodes {unreachable} unreachable from substation {substation}")

    # ---------- 参数 ----------
    econ_raw = data.get("economics") or {}
    econ = EconomicParams(
        inflation_rate=_number(econ_raw, "inflation_rate", "economics", 0.08),
        lifetimes={
            **EconomicParams().lifetimes,
            **{k: int(v) for k, v in (econ_raw.get("lifetimes") or {}).items()},
        },
        hours_per_period=_number(econ_raw, "hours_per_period", "economics", 1.0),
        days_per_year=int(_number(econ_raw, "days_per_year", "economics", 365)),
        currency_scale=_number(econ_raw, "currency_scale", "economics", 1.0e4),
    )
    if econ.inflation_rate <= 0:
        _fail("economics.inflation_rate", "must be positive")
    for asset, years in econ.lifetimes.items():
        if years < 1:
            _fail(f"economics.lifetimes.{asset}", "must be at least 1 year")

    limits = data.get("limits") or {}
    v_min = _number(limits, "v_min", "limits", 0.9)
    v_max = _number(limits, "v_max", "limits", 1.1)
    _bounds(v_min, v_max, "limits.v_min")
    base = data.get("base") or {}

    oltc_raw = data.get("oltc") or {}
    oltc = OltcSpec(
        v_min=_number(oltc_raw, "v_min", "oltc", 0.9),
        v_max=_number(oltc_raw, "v_max", "oltc", 1.1),
        steps=int(_number(oltc_raw, "steps", "oltc", 20)),
        max_switches=int(_number(oltc_raw, "max_switches", "oltc", 6)),
        enabled=bool(oltc_raw.get("enabled", True)),
    )
    _bounds(oltc.v_min, oltc.v_max, "oltc.v_min")

    # ---------- 场景 ----------
    region_set = sorted({n.region for n in nodes if n.region})
    raw_scenarios = data.get("scenarios") or [{"probability": 1.0}]
    scenarios = []
    for k, raw in enumerate(raw_scenarios):
        path = f"scenarios[{k}]"
        prob = _number(raw, "probability", path)
        if prob < 0:
            _fail(f"{path}.probability", "must be non-negative")
        if raw.get("fleet_csv"):
            fleet = load_fleet_csv(base_dir / raw["fleet_csv"])
        else:
            fleet = AevFleet(
                tuple(vehicle_from_record(r, path) for r in raw.get("fleet") or [])
            )
        validate_fleet(fleet, periods, region_set, econ.hours_per_period)
        load_overrides = {}
        for node_key, spec in (raw.get("load_overrides") or {}).items():
            node_id = int(node_key)
            if node_id not in ids:
                _fail(f"{path}.load_overrides", f"unknown node {node_id}")
            load_overrides[node_id] = (
                _profile(spec["p_load"], periods, f"{path}.load_overrides.{node_id}.p_load", "peak_kw"),
                _profile(spec["q_load"], periods, f"{path}.load_overrides.{node_id}.q_load", "peak_kvar"),
            )
        scenarios.append(
            Scenario(
                probability=prob,
                fleet=fleet,
                load_scale=_non_negative(raw, "load_scale", path, 1.0),
                load_overrides=load_overrides,
            )
        )
    total_prob = sum(s.probability for s in scenarios)
    if abs(total_prob - 1.0) > PROBABILITY_TOL:
        _fail("scenarios", f"probabilities sum to {total_prob:.6g}")

    return NetworkCase(
        name=str(data.get("name", "case")),
        nodes=tuple(nodes),
        lines=tuple(lines),
        substation=substation,
        tariff=tariff_from_dict(data.get("tariff"), periods),
        periods=periods,
        scenarios=tuple(scenarios),
        econ=econ,
        v_min=v_min,
        v_max=v_max,
        v_substation=_number(limits, "v_substation", "limits", 1.0),
        sub_p_max=_number(limits, "sub_p_max_kw", "limits", 10000.0),
        sub_q_max=_number(limits, "sub_q_max_kvar", "limits", 10000.0),
        base_mva=_number(base, "mva", "base", 10.0),
        base_kv=_number(base, "kv", "base", 10.0),
        oltc=oltc,
    )


def case_to_dict(case: NetworkCase) -> Dict[str, Any]:
    """序列化为案例字典（所有曲线展开为显式列表）"""
    nodes = []
    for n in case.nodes:
        node = {
            "id": n.id,
            "region": n.region,
            "p_load": list(n.p_load),
            "q_load": list(n.q_load),
        }
        if n.v2g is not None:
            node["v2g"] = {
                "mode": n.v2g.mode,
                "capex": n.v2g.capex,
                "opex": n.v2g.opex,
                "s_max_kva": n.v2g.s_max,
                "s_min_kva": n.v2g.s_min,
            }
        if n.dgr:
            node["dgr"] = {k: _dump_dgr(k, d) for k, d in sorted(n.dgr.items())}
        nodes.append(node)

    scenarios = []
    for s in case.scenarios:
        scenario = {
            "probability": s.probability,
            "load_scale": s.load_scale,
            "fleet": [vehicle_to_record(v) for v in s.fleet.vehicles],
        }
        if s.load_overrides:
            scenario["load_overrides"] = {
                str(k): {"p_load": list(p), "q_load": list(q)}
                for k, (p, q) in sorted(s.load_overrides.items())
            }
        scenarios.append(scenario)

    return {
        "schema_version": SCHEMA_VERSION,
        "name": case.name,
        "periods": case.periods,
        "substation": case.substation,
        "base": {"mva": case.base_mva, "kv": case.base_kv},
        "limits": {
            "v_min": case.v_min,
            "v_max": case.v_max,
            "v_substation": case.v_substation,
            "sub_p_max_kw": case.sub_p_max,
            "sub_q_max_kvar": case.sub_q_max,
        },
        "economics": {
            "inflation_rate": case.econ.inflation_rate,
            "lifetimes": dict(sorted(case.econ.lifetimes.items())),
            "hours_per_period": case.econ.hours_per_period,
            "days_per_year": case.econ.days_per_year,
            "currency_scale": case.econ.currency_scale,
        },
        "tariff": {
            "price": list(case.tariff.price),
            "charge_price": list(case.tariff.charge_price),
            "discharge_subsidy": list(case.tariff.discharge_subsidy),
        },
        "oltc": {
            "v_min": case.oltc.v_min,
            "v_max": case.oltc.v_max,
            "steps": case.oltc.steps,
            "max_switches": case.oltc.max_switches,
            "enabled": case.oltc.enabled,
        },
        "nodes": nodes,
        "lines": [
            {
                "from": line.from_node,
                "to": line.to_node,
                "r_ohm": line.r,
                "x_ohm": line.x,
                "s_max_kva": line.s_max,
                "capex": line.capex,
                "length_km": line.length,
            }
            for line in case.lines
        ],
        "scenarios": scenarios,
    }


def dump_case(case: NetworkCase) -> str:
    """确定性 JSON 文本（键排序，同一输入字节一致）"""
    return json.dumps(case_to_dict(case), indent=2, sort_keys=True, ensure_ascii=False)


def save_case(case: NetworkCase, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_case(case) + "\n", encoding="utf-8")
    logger.info(f"💾 案例已写入 {path}")
    return path


def load_case(path: Union[str, Path]) -> NetworkCase:
    """
    读取并校验案例文件

    Args:
        path: JSON 案例路径

    Returns:
        NetworkCase
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"case file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise CaseValidationError("", f"invalid JSON: {e}") from e
    case = case_from_dict(data, base_dir=path.parent)
    logger.info(
        f"读取案例 {case.name}: {len(case.nodes)} 节点, {len(case.lines)} 条候选线路, "
        f"{len(case.scenarios)} 个场景"
    )
    return case


def bundled_case(name: str) -> NetworkCase:
    """读取包内自带的测试算例 (star4 / demo6 / stressed6)"""
    path = CASES_DIR / f"{name}.json"
    if not path.exists():
        available = sorted(p.stem for p in CASES_DIR.glob("*.json"))
        raise InputError(f"no bundled case {name!r}; available: {available}")
    return load_case(path)
