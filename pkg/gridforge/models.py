from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .consts import (
    ASSET_LIFETIMES,
    BASE_KV,
    BASE_MVA,
    CASE_LABELS,
    CURRENCY_SCALE,
    DAYS_PER_YEAR,
    DEFAULT_INFLATION_RATE,
    HOURS_PER_PERIOD,
    OLTC_MAX_SWITCHES,
    OLTC_STEPS,
    OLTC_V_MAX,
    OLTC_V_MIN,
    SUBSTATION_P_MAX_KW,
    SUBSTATION_Q_MAX_KVAR,
    SUBSTATION_V_PU,
    V2G_OPEX,
    V2G_S_MAX_KVA,
    V_MAX_PU,
    V_MIN_PU,
)


# ==================== 设备候选 ====================
@dataclass(frozen=True)
class V2gCandidate:
    mode: str  # retrofit | new
    capex: float
    opex: float = V2G_OPEX
    s_max: float = V2G_S_MAX_KVA
    s_min: float = 0.0


@dataclass(frozen=True)
class PvCandidate:
    capex: float
    opex: float
    p_max: Tuple[float, ...]


@dataclass(frozen=True)
class SvcCandidate:
    capex: float
    opex: float
    q_min: float
    q_max: float


@dataclass(frozen=True)
class EssCandidate:
    capex: float
    opex: float
    e_min: float
    e_max: float
    p_ch_max: float
    p_dis_max: float
    p_min: float = 0.0
    eta_ch: float = 0.9
    eta_dis: float = 1.0 / 1.1


@dataclass(frozen=True)
class CbCandidate:
    capex: float
    opex: float
    bank_kvar: float
    banks: int
    max_switches: int
    q_min: float = 0.0

    @property
    def q_max(self) -> float:
        return self.q_min + self.bank_kvar * self.banks


@dataclass(frozen=True)
class OltcSpec:
    """变电站有载调压变压器，视为既有设备"""

    v_min: float = OLTC_V_MIN
    v_max: float = OLTC_V_MAX
    steps: int = OLTC_STEPS
    max_switches: int = OLTC_MAX_SWITCHES
    enabled: bool = True

    def tap_voltages(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.steps + 1)

    def tap_w(self) -> np.ndarray:
        return self.tap_voltages() ** 2


# ==================== 网络 ====================
@dataclass(frozen=True)
class NodeSpec:
    id: int
    region: Optional[str]
    p_load: Tuple[float, ...]
    q_load: Tuple[float, ...]
    v2g: Optional[V2gCandidate] = None
    dgr: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class LineSpec:
    from_node: int
    to_node: int
    r: float  # Ω
    x: float  # Ω
    s_max: float  # kVA
    capex: float
    length: float = 1.0  # km

    @property
    def key(self) -> Tuple[int, int]:
        return (self.from_node, self.to_node)


@dataclass(frozen=True)
class Tariff:
    price: Tuple[float, ...]
    charge_price: Tuple[float, ...]
    discharge_subsidy: Tuple[float, ...]

    @property
    def periods(self) -> int:
        return len(self.price)


@dataclass(frozen=True)
class EconomicParams:
    inflation_rate: float = DEFAULT_INFLATION_RATE
    lifetimes: Dict[str, int] = field(default_factory=lambda: dict(ASSET_LIFETIMES))
    hours_per_period: float = HOURS_PER_PERIOD
    days_per_year: int = DAYS_PER_YEAR
    currency_scale: float = CURRENCY_SCALE

    def lifetime(self, asset: str) -> int:
        return int(self.lifetimes.get(asset, ASSET_LIFETIMES[asset]))


# ==================== 车队 ====================
@dataclass(frozen=True)
class Aev:
    id: str
    arrive: int
    depart: int
    e0: float
    e_target: float
    e_min: float
    e_max: float
    p_ch_max: float
    p_dis_max: float
    region: str

    @property
    def window(self) -> range:
        """接入时段 (含到达与离开时段)"""
        return range(self.arrive, self.depart + 1)

    @property
    def window_length(self) -> int:
        return max(0, self.depart - self.arrive + 1)


@dataclass(frozen=True)
class AevFleet:
    vehicles: Tuple[Aev, ...] = ()

    def __len__(self) -> int:
        return len(self.vehicles)

    def __iter__(self):
        return iter(self.vehicles)

    @property
    def regions(self) -> List[str]:
        return sorted({v.region for v in self.vehicles})


@dataclass(frozen=True)
class Scenario:
    probability: float
    fleet: AevFleet = field(default_factory=AevFleet)
    load_scale: float = 1.0
    # 节点负荷覆盖: 节点 -> (p_load, q_load)
    load_overrides: Dict[int, Tuple[Tuple[float, ...], Tuple[float, ...]]] = field(
        default_factory=dict
    )


@dataclass(frozen=True)
class NetworkCase:
    name: str
    nodes: Tuple[NodeSpec, ...]
    lines: Tuple[LineSpec, ...]
    substation: int
    tariff: Tariff
    periods: int = 24
    scenarios: Tuple[Scenario, ...] = (Scenario(1.0),)
    econ: EconomicParams = field(default_factory=EconomicParams)
    v_min: float = V_MIN_PU
    v_max: float = V_MAX_PU
    v_substation: float = SUBSTATION_V_PU
    sub_p_max: float = SUBSTATION_P_MAX_KW
    sub_q_max: float = SUBSTATION_Q_MAX_KVAR
    base_mva: float = BASE_MVA
    base_kv: float = BASE_KV
    oltc: OltcSpec = field(default_factory=OltcSpec)

    # ---------- 索引 ----------
    @property
    def node_ids(self) -> List[int]:
        return [n.id for n in self.nodes]

    @property
    def node_index(self) -> Dict[int, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    def node(self, node_id: int) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def line_index(self, key: Tuple[int, int]) -> int:
        a, b = key
        for i, line in enumerate(self.lines):
            if line.key == (a, b) or line.key == (b, a):
                return i
        raise KeyError(key)

    @property
    def regions(self) -> Dict[int, str]:
        return {n.id: n.region for n in self.nodes if n.region}

    def v2g_nodes(self, region: Optional[str] = None) -> List[int]:
        return [
            n.id
            for n in self.nodes
            if n.v2g is not None and (region is None or n.region == region)
        ]

    def dgr_nodes(self, kind: str) -> List[int]:
        return [n.id for n in self.nodes if kind in n.dgr]

    @property
    def has_dgr_candidates(self) -> bool:
        return any(n.dgr for n in self.nodes)

    # ---------- 标幺制 ----------
    @property
    def base_kva(self) -> float:
        return self.base_mva * 1000.0

    @property
    def z_base(self) -> float:
        return self.base_kv**2 / self.base_mva

    def line_r_pu(self, line: LineSpec) -> float:
        return line.r / self.z_base

    def line_x_pu(self, line: LineSpec) -> float:
        return line.x / self.z_base

    # ---------- 负荷 ----------
    def scenario_loads(self, k: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """场景 k 的节点负荷矩阵 (N × T)，单位 kW / kvar"""
        scenario = self.scenarios[k]
        p = np.array([n.p_load for n in self.nodes], dtype=float).reshape(
            len(self.nodes), self.periods
        )
        q = np.array([n.q_load for n in self.nodes], dtype=float).reshape(
            len(self.nodes), self.periods
        )
        p = p * scenario.load_scale
        q = q * scenario.load_scale
        index = self.node_index
        for node_id, (p_over, q_over) in scenario.load_overrides.items():
            p[index[node_id]] = np.asarray(p_over, dtype=float)
            q[index[node_id]] = np.asarray(q_over, dtype=float)
        return p, q

    def total_load_energy(self) -> float:
        """基础负荷总电量 (kWh)"""
        return float(
            sum(sum(n.p_load) for n in self.nodes) * self.econ.hours_per_period
        )

    def with_fleet(self, fleet: AevFleet) -> "NetworkCase":
        """单场景替换车队"""
        return replace(self, scenarios=(Scenario(1.0, fleet),))

    def with_line(self, key: Tuple[int, int], **changes) -> "NetworkCase":
        i = self.line_index(key)
        lines = list(self.lines)
        lines[i] = replace(lines[i], **changes)
        return replace(self, lines=tuple(lines))


# ==================== 规划选项 ====================
@dataclass(frozen=True)
class PlanOptions:
    reactive_support: bool = True
    dgrs_enabled: bool = True

    def label(self, holistic: bool = False) -> str:
        key = (self.dgrs_enabled, self.reactive_support, holistic)
        return CASE_LABELS.get(key, "custom")


# ==================== 求解结果 ====================
def _arrays_to_lists(mapping: Dict[Any, np.ndarray]) -> Dict[str, list]:
    return {str(k): np.asarray(v).tolist() for k, v in mapping.items()}


def _lists_to_arrays(mapping: Dict[str, list], int_keys: bool = True) -> Dict:
    return {
        (int(k) if int_keys else k): np.asarray(v, dtype=float)
        for k, v in (mapping or {}).items()
    }


@dataclass
class ScheduleSolution:
    """单场景 AEV 调度结果，功率单位 kW"""

    periods: int
    p_ch: Dict[str, np.ndarray] = field(default_factory=dict)
    p_dis: Dict[str, np.ndarray] = field(default_factory=dict)
    mode: Dict[str, np.ndarray] = field(default_factory=dict)
    agg: Dict[str, np.ndarray] = field(default_factory=dict)
    objective: float = 0.0
    scenario: int = 0

    def net_power(self, vehicle_id: str) -> np.ndarray:
        return self.p_ch[vehicle_id] + self.p_dis[vehicle_id]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "periods": self.periods,
            "scenario": self.scenario,
            "objective": self.objective,
            "p_ch": _arrays_to_lists(self.p_ch),
            "p_dis": _arrays_to_lists(self.p_dis),
            "mode": _arrays_to_lists(self.mode),
            "agg": _arrays_to_lists(self.agg),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScheduleSolution":
        return cls(
            periods=int(data["periods"]),
            scenario=int(data.get("scenario", 0)),
            objective=float(data.get("objective", 0.0)),
            p_ch=_lists_to_arrays(data.get("p_ch"), int_keys=False),
            p_dis=_lists_to_arrays(data.get("p_dis"), int_keys=False),
            mode=_lists_to_arrays(data.get("mode"), int_keys=False),
            agg=_lists_to_arrays(data.get("agg"), int_keys=False),
        )


@dataclass(frozen=True)
class CostBreakdown:
    """年化成本分项 (货币单位)"""

    line_capex: float = 0.0
    v2g_capex: float = 0.0
    dgr_capex: float = 0.0
    o_and_m: float = 0.0
    network_loss: float = 0.0

    @property
    def total(self) -> float:
        return (
            self.line_capex
            + self.v2g_capex
            + self.dgr_capex
            + self.o_and_m
            + self.network_loss
        )

    def to_dict(self) -> Dict[str, float]:
        return {
            "line_capex": self.line_capex,
            "v2g_capex": self.v2g_capex,
            "dgr_capex": self.dgr_capex,
            "o_and_m": self.o_and_m,
            "network_loss": self.network_loss,
            "total": self.total,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "CostBreakdown":
        return cls(
            line_capex=float(data.get("line_capex", 0.0)),
            v2g_capex=float(data.get("v2g_capex", 0.0)),
            dgr_capex=float(data.get("dgr_capex", 0.0)),
            o_and_m=float(data.get("o_and_m", 0.0)),
            network_loss=float(data.get("network_loss", 0.0)),
        )


@dataclass
class ScenarioDispatch:
    """单场景运行轨迹 (工程单位；w 为电压平方标幺值，行顺序同 case.nodes)"""

    probability: float
    line_p: np.ndarray
    line_q: np.ndarray
    w: np.ndarray
    sub_p: np.ndarray
    sub_q: np.ndarray
    v2g_p: Dict[int, np.ndarray] = field(default_factory=dict)
    v2g_q: Dict[int, np.ndarray] = field(default_factory=dict)
    pv_p: Dict[int, np.ndarray] = field(default_factory=dict)
    svc_q: Dict[int, np.ndarray] = field(default_factory=dict)
    ess: Dict[int, Dict[str, np.ndarray]] = field(default_factory=dict)
    cb: Dict[int, Dict[str, np.ndarray]] = field(default_factory=dict)
    oltc: Optional[Dict[str, np.ndarray]] = None

    @property
    def voltage(self) -> np.ndarray:
        return np.sqrt(np.clip(self.w, 0.0, None))

    def to_dict(self) -> Dict[str, Any]:
        def nested(mapping):
            return {str(k): _arrays_to_lists(v) for k, v in mapping.items()}

        return {
            "probability": self.probability,
            "line_p": self.line_p.tolist(),
            "line_q": self.line_q.tolist(),
            "w": self.w.tolist(),
            "sub_p": self.sub_p.tolist(),
            "sub_q": self.sub_q.tolist(),
            "v2g_p": _arrays_to_lists(self.v2g_p),
            "v2g_q": _arrays_to_lists(self.v2g_q),
            "pv_p": _arrays_to_lists(self.pv_p),
            "svc_q": _arrays_to_lists(self.svc_q),
            "ess": nested(self.ess),
            "cb": nested(self.cb),
            "oltc": _arrays_to_lists(self.oltc) if self.oltc is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioDispatch":
        def nested(mapping):
            return {
                int(k): _lists_to_arrays(v, int_keys=False)
                for k, v in (mapping or {}).items()
            }

        oltc = data.get("oltc")
        return cls(
            probability=float(data["probability"]),
            line_p=np.asarray(data["line_p"], dtype=float),
            line_q=np.asarray(data["line_q"], dtype=float),
            w=np.asarray(data["w"], dtype=float),
            sub_p=np.asarray(data["sub_p"], dtype=float),
            sub_q=np.asarray(data["sub_q"], dtype=float),
            v2g_p=_lists_to_arrays(data.get("v2g_p")),
            v2g_q=_lists_to_arrays(data.get("v2g_q")),
            pv_p=_lists_to_arrays(data.get("pv_p")),
            svc_q=_lists_to_arrays(data.get("svc_q")),
            ess=nested(data.get("ess")),
            cb=nested(data.get("cb")),
            oltc=_lists_to_arrays(oltc, int_keys=False) if oltc else None,
        )


@dataclass
class PlanSolution:
    """规划结果：建设决策 + 各场景运行轨迹 + 成本"""

    case_name: str
    options: PlanOptions
    lines_built: Tuple[bool, ...]
    stations: Tuple[int, ...]
    devices: Dict[str, Tuple[int, ...]]
    dispatch: List[ScenarioDispatch]
    objective: float = 0.0
    costs: Optional[CostBreakdown] = None
    report: Optional[Any] = None

    def built_line_keys(self, case: NetworkCase) -> List[Tuple[int, int]]:
        return [line.key for line, z in zip(case.lines, self.lines_built) if z]

    def build_signature(self) -> Dict[str, Any]:
        """用于比较两种方法的建设决策"""
        return {
            "lines": tuple(bool(z) for z in self.lines_built),
            "stations": tuple(sorted(self.stations)),
            "devices": {k: tuple(sorted(v)) for k, v in sorted(self.devices.items())},
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "case_name": self.case_name,
            "options": {
                "reactive_support": self.options.reactive_support,
                "dgrs_enabled": self.options.dgrs_enabled,
            },
            "lines_built": [bool(z) for z in self.lines_built],
            "stations": list(self.stations),
            "devices": {k: list(v) for k, v in self.devices.items()},
            "objective": self.objective,
            "costs": self.costs.to_dict() if self.costs else None,
            "dispatch": [d.to_dict() for d in self.dispatch],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PlanSolution":
        options = data.get("options", {})
        costs = data.get("costs")
        return cls(
            case_name=data.get("case_name", ""),
            options=PlanOptions(
                reactive_support=bool(options.get("reactive_support", True)),
                dgrs_enabled=bool(options.get("dgrs_enabled", True)),
            ),
            lines_built=tuple(bool(z) for z in data["lines_built"]),
            stations=tuple(int(i) for i in data.get("stations", [])),
            devices={
                k: tuple(int(i) for i in v) for k, v in data.get("devices", {}).items()
            },
            dispatch=[ScenarioDispatch.from_dict(d) for d in data.get("dispatch", [])],
            objective=float(data.get("objective", 0.0)),
            costs=CostBreakdown.from_dict(costs) if costs else None,
        )
