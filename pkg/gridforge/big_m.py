"""大 M 常数推导"""

from typing import Optional

from .models import AevFleet, NetworkCase

VOLTAGE_DROP = "voltage-drop"
V2G_POWER = "v2g-power"
AEV_POWER = "aev-power"


def derive_big_m(
    context: str, case: NetworkCase, fleet: Optional[AevFleet] = None
) -> float:
    """
    按上下文给出最小的安全大 M

    Args:
        context: voltage-drop | v2g-power | aev-power
        case: 已校验的案例
        fleet: aev-power 使用的车队，缺省时取案例全部场景的车队

    Returns:
        voltage-drop 为电压平方标幺值；v2g-power 为 kVA；aev-power 为 kW
    """
    if context == VOLTAGE_DROP:
        # |w_i - w_j - 2(RP + XQ)| 的上界
        spread = case.v_max**2 - case.v_min**2
        worst = 0.0
        for line in case.lines:
            s = line.s_max / case.base_kva
            worst = max(worst, case.line_r_pu(line) * s + case.line_x_pu(line) * s)
        return spread + 2.0 * worst / case.v_min
    if context == V2G_POWER:
        return max((case.node(i).v2g.s_max for i in case.v2g_nodes()), default=0.0)
    if context == AEV_POWER:
        fleets = [fleet] if fleet is not None else [s.fleet for s in case.scenarios]
        return max(
            (max(v.p_ch_max, v.p_dis_max) for f in fleets for v in f.vehicles),
            default=0.0,
        )
    raise ValueError(f"unknown big-M context {context!r}")
