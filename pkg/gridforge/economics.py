"""
经济与电价计算
年化系数、分时电价、渗透率
"""

from typing import Optional

from .consts import (
    DEFAULT_PERIODS,
    TOU_PEAK,
    TOU_PEAK_SPANS,
    TOU_SHOULDER,
    TOU_SHOULDER_SPANS,
    TOU_VALLEY,
    TOU_VALLEY_SPANS,
)
from .errors import CaseValidationError
from .models import AevFleet, EconomicParams, NetworkCase, Tariff


def annualization_factor(d: float, years: int) -> float:
    """
    年化成本系数 d(1+d)^y / ((1+d)^y - 1)

    Args:
        d: 折现率（通胀率），> 0
        years: 经济寿命（年），≥ 1

    Returns:
        年化系数
    """
    if d <= 0:
        raise ValueError(f"inflation rate must be positive, got {d}")
    if years < 1:
        raise ValueError(f"lifetime must be at least one year, got {years}")
    growth = (1.0 + d) ** years
    return d * growth / (growth - 1.0)


def asset_factor(econ: EconomicParams, asset: str) -> float:
    """某类资产的年化系数"""
    return annualization_factor(econ.inflation_rate, econ.lifetime(asset))


def tou_price(t: int) -> float:
    """
    分时电价

    Args:
        t: 时段编号 1..24

    Returns:
        电价（元/kWh）
    """
    if not 1 <= t <= 24:
        raise ValueError(f"period {t} out of range 1..24")
    for spans, price in (
        (TOU_PEAK_SPANS, TOU_PEAK),
        (TOU_SHOULDER_SPANS, TOU_SHOULDER),
        (TOU_VALLEY_SPANS, TOU_VALLEY),
    ):
        if any(lo <= t < hi for lo, hi in spans):
            return price
    raise ValueError(f"period {t} not covered by tariff table")


def default_tariff(periods: int = DEFAULT_PERIODS) -> Tariff:
    """默认分时电价；充电价与放电补贴都等于电价"""
    if periods != 24:
        # 非 24 时段时按小时循环
        prices = tuple(tou_price((t - 1) % 24 + 1) for t in range(1, periods + 1))
    else:
        prices = tuple(tou_price(t) for t in range(1, 25))
    return Tariff(price=prices, charge_price=prices, discharge_subsidy=prices)


def make_tariff(
    price,
    charge_price: Optional[list] = None,
    discharge_subsidy: Optional[list] = None,
) -> Tariff:
    """由电价序列构造 Tariff 并校验"""
    price = tuple(float(p) for p in price)
    charge = tuple(float(p) for p in (charge_price if charge_price is not None else price))
    subsidy = tuple(
        float(p) for p in (discharge_subsidy if discharge_subsidy is not None else price)
    )
    if any(p <= 0 for p in price):
        raise CaseValidationError("tariff.price", "prices must be positive")
    if not len(price) == len(charge) == len(subsidy):
        raise CaseValidationError("tariff", "price vectors differ in length")
    return Tariff(price=price, charge_price=charge, discharge_subsidy=subsidy)


def penetration_rate(fleet: AevFleet, case: NetworkCase) -> float:
    """
    车队渗透率：各车在接入时段内的电池容量之和 / 系统总负荷电量

    Args:
        fleet: 车队
        case: 网络案例

    Returns:
        渗透率（小数）
    """
    total_load = case.total_load_energy()
    if total_load <= 0:
        raise ValueError("total system load is zero")
    hours = case.econ.hours_per_period
    capacity = sum(v.e_max * v.window_length * hours for v in fleet.vehicles)
    return capacity / total_load
