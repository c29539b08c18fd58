import math

# 案例文件版本
SCHEMA_VERSION = 1

# ==================== 分时电价 ====================
# 峰 / 平 / 谷 三档电价 (元/kWh)
TOU_PEAK = 1.1121
TOU_SHOULDER = 0.6542
TOU_VALLEY = 0.2486

# 各档覆盖的时段，左闭右开，时段编号 1..24
TOU_PEAK_SPANS = [(9, 15), (19, 22)]
TOU_SHOULDER_SPANS = [(7, 9), (15, 19), (22, 24)]
TOU_VALLEY_SPANS = [(1, 7), (24, 25)]

DEFAULT_PERIODS = 24

# ==================== 经济参数 ====================
DEFAULT_INFLATION_RATE = 0.08
DAYS_PER_YEAR = 365
HOURS_PER_PERIOD = 1.0
# 1 个货币单位 = 10^4 元；电价以元计
CURRENCY_SCALE = 1.0e4

# 各类资产经济寿命 (年)
ASSET_LIFETIMES = {
    "v2g": 10,
    "pv": 15,
    "ess": 20,
    "cb": 15,
    "svc": 20,
    "line": 20,
}

# ==================== 建设与运维成本 (10^4 元) ====================
V2G_RETROFIT_CAPEX = 84.97
V2G_NEW_CAPEX = 194.36
V2G_OPEX = 4.70
LINE_CAPEX_PER_KM = 23.30

DEVICE_COSTS = {
    "pv": {"capex": 17.65, "opex": 0.50},
    "ess": {"capex": 24.94, "opex": 1.34},
    "cb": {"capex": 10.38, "opex": 0.55},
    "svc": {"capex": 11.85, "opex": 0.65},
}

DEVICE_KINDS = ("pv", "ess", "cb", "svc")

# ==================== 设备运行参数 ====================
PV_PEAK_KW = 75.0
PV_PEAK_HOUR = 14

SVC_Q_MIN_KVAR = -50.0
SVC_Q_MAX_KVAR = 250.0

ESS_E_MAX_KWH = 800.0
ESS_E_MIN_KWH = 0.0
ESS_P_CH_MAX_KW = 200.0
ESS_P_DIS_MAX_KW = 300.0
ESS_ETA_CH = 0.9
ESS_ETA_DIS = 1.0 / 1.1

CB_BANK_KVAR = 75.0
CB_BANKS = 5  # 5 组 × 75 kvar = 375 kvar
CB_MAX_SWITCHES = 5

OLTC_V_MIN = 0.9
OLTC_V_MAX = 1.1
OLTC_STEPS = 20
OLTC_MAX_SWITCHES = 6

# ==================== 电网参数 ====================
V_MIN_PU = 0.9
V_MAX_PU = 1.1
SUBSTATION_V_PU = 1.0
SUBSTATION_P_MAX_KW = 10000.0
SUBSTATION_Q_MAX_KVAR = 10000.0
V2G_S_MAX_KVA = 1000.0

BASE_MVA = 10.0
BASE_KV = 10.0

# ==================== 区域 ====================
REGIONS = ("residential", "commercial", "industrial", "office")

REGION_NAME_MAP = {
    "residential": "居民区",
    "commercial": "商业区",
    "industrial": "工业区",
    "office": "办公区",
}

# 24 小时归一化负荷曲线 (峰值 = 1)
DIURNAL_SHAPES = {
    "residential": [
        0.45, 0.40, 0.38, 0.37, 0.38, 0.45, 0.60, 0.68, 0.62, 0.55, 0.52, 0.55,
        0.56, 0.52, 0.50, 0.55, 0.68, 0.85, 0.97, 1.00, 0.95, 0.85, 0.70, 0.55,
    ],
    "commercial": [
        0.30, 0.28, 0.27, 0.27, 0.28, 0.32, 0.40, 0.55, 0.70, 0.82, 0.90, 0.95,
        0.93, 0.92, 0.95, 0.97, 1.00, 0.98, 0.95, 0.90, 0.80, 0.62, 0.45, 0.35,
    ],
    "industrial": [
        0.62, 0.60, 0.60, 0.60, 0.62, 0.68, 0.80, 0.92, 0.98, 1.00, 1.00, 0.95,
        0.88, 0.95, 1.00, 1.00, 0.97, 0.90, 0.82, 0.78, 0.74, 0.70, 0.66, 0.64,
    ],
    "office": [
        0.25, 0.24, 0.23, 0.23, 0.24, 0.28, 0.38, 0.60, 0.85, 0.97, 1.00, 0.98,
        0.85, 0.92, 0.98, 1.00, 0.95, 0.80, 0.55, 0.42, 0.36, 0.32, 0.29, 0.27,
    ],
    "flat": [1.0] * 24,
}


def pv_shape(periods: int = DEFAULT_PERIODS) -> list:
    """光伏出力归一化曲线，14:00 达到峰值，6:00 前与 22:00 后为 0"""
    shape = []
    for t in range(1, periods + 1):
        value = math.sin(math.pi * (t - 6) / 16.0) if 6 < t < 22 else 0.0
        shape.append(round(max(0.0, value), 6))
    return shape


# ==================== 车辆参数 ====================
AEV_P_MAX_KW = 12.0
AEV_E_MAX_KWH = 90.0
AEV_E_MIN_FRACTION = 0.10

# 各区域接入时段原型: (最早到达, 最晚到达, 最短停留, 最长停留)
# 办公区白天停放；居民区傍晚到达停至当日结束；工业区按班次；商业区短时停放
WINDOW_ARCHETYPES = {
    "office": (8, 10, 7, 9),
    "residential": (17, 20, 5, 8),
    "industrial": (6, 8, 7, 8),
    "commercial": (10, 13, 3, 5),
}

# 区域默认构成 (144 / 574 / 262 辆)
DEFAULT_REGION_MIX = {
    "residential": 144 / 980,
    "office": 574 / 980,
    "industrial": 262 / 980,
}

# 渗透率扫描点
PENETRATION_SWEEP = (0.034, 0.068, 0.102, 0.136, 0.170, 0.204)

# ==================== 求解参数 ====================
DEFAULT_MIP_GAP = 1e-4
DEFAULT_CONE_TOL = 1e-6
MIN_CONE_TOL = 1e-7
DEFAULT_OA_MAX_ROUNDS = 50
DEFAULT_OA_SEED_TANGENTS = 8
FEASIBILITY_TOL = 1e-6
WARNING_BAND = 10.0
TIE_BREAK_EPS = 1e-9

# ==================== 退出码 ====================
EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_INPUT_ERROR = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER_LIMIT = 4

# 算例标签: (dgrs_enabled, reactive_support, holistic) -> 名称
CASE_LABELS = {
    (False, True, False): "A",
    (True, False, False): "B",
    (True, True, False): "C",
    (True, True, True): "D",
}
