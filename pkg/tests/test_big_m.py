import pytest

from gridforge.big_m import AEV_POWER, V2G_POWER, VOLTAGE_DROP, derive_big_m
from gridforge.models import AevFleet


def test_voltage_drop_bound(star4):
    # 标幺阻抗 0.2 / 10 = 0.02，线路容量 1000 kVA / 10000 kVA = 0.1
    expected = (1.1**2 - 0.9**2) + 2.0 * (0.02 * 0.1 + 0.01 * 0.1) / 0.9
    assert derive_big_m(VOLTAGE_DROP, star4) == pytest.approx(expected)


def test_voltage_drop_bound_dominates_built_line_drop(demo6):
    m = derive_big_m(VOLTAGE_DROP, demo6)
    for line in demo6.lines:
        s = line.s_max / demo6.base_kva
        drop = 2.0 * (demo6.line_r_pu(line) + demo6.line_x_pu(line)) * s
        assert m >= (demo6.v_max**2 - demo6.v_min**2) + drop


def test_v2g_power_bound(demo6, star4):
    assert derive_big_m(V2G_POWER, demo6) == 400.0
    assert derive_big_m(V2G_POWER, star4) == 500.0


def test_aev_power_bound(demo6, vehicle_factory):
    assert derive_big_m(AEV_POWER, demo6) == 12.0
    fleet = AevFleet((vehicle_factory("a", p_max=7.0), vehicle_factory("b", p_max=11.0, p_dis=20.0)))
    assert derive_big_m(AEV_POWER, demo6, fleet) == 20.0
    assert derive_big_m(AEV_POWER, demo6, AevFleet()) == 0.0


def test_unknown_context(star4):
    with pytest.raises(ValueError):
        derive_big_m("nope", star4)
