import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from gridforge.backend_manager import SolveLimits
from gridforge.economics import default_tariff, make_tariff
from gridforge.errors import FleetValidationError
from gridforge.models import Aev, AevFleet
from gridforge.scheduler import (
    agg_profiles,
    build_sp1,
    load_agg_csv,
    load_schedules,
    save_schedules,
    schedule_cost,
    solve_sp1,
    solve_sp1_scenarios,
    worst_case_profile,
)

TARIFF4 = make_tariff([0.2486, 0.6542, 1.1121, 0.6542])


def brute_force_cost(v, tariff, hours=1.0):
    """枚举每个时段的充/放电模式，对每种组合求解 LP，取最小费用"""
    window = list(v.window)
    n = len(window)
    charge = np.array([tariff.charge_price[t - 1] for t in window]) * hours
    subsidy = np.array([tariff.discharge_subsidy[t - 1] for t in window]) * hours
    lower = np.tril(np.ones((n, n))) * hours
    best = np.inf
    for modes in itertools.product((0, 1), repeat=n):
        # 变量 [ch_1..ch_n, dis_1..dis_n]
        bounds = [(0.0, v.p_ch_max if m == 0 else 0.0) for m in modes]
        bounds += [(-v.p_dis_max if m == 1 else 0.0, 0.0) for m in modes]
        cum = np.hstack([lower, lower])
        a_ub = np.vstack([cum, -cum, -cum[-1:]])
        b_ub = np.concatenate(
            [
                np.full(n, v.e_max - v.e0),
                np.full(n, v.e0 - v.e_min),
                [v.e0 - v.e_target],
            ]
        )
        res = linprog(np.concatenate([charge, subsidy]), A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status == 0:
            best = min(best, res.fun)
    return best


def test_peak_arbitrage_hand_example(vehicle_factory, limits):
    """满电接入，晚高峰放电至下限后在平谷时段充回"""
    v = vehicle_factory(arrive=19, depart=24, e0=51.0, e_target=51.0, e_min=15.0, e_max=51.0)
    solution = solve_sp1(AevFleet((v,)), default_tariff(), limits)
    assert solution.objective == pytest.approx(-21.3516, abs=1e-4)
    assert solution.p_dis["ev1"][18:21] == pytest.approx([-12.0, -12.0, -12.0], abs=1e-6)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(e0=30.0, e_target=50.0, e_min=10.0, e_max=60.0),
        dict(e0=60.0, e_target=40.0, e_min=10.0, e_max=60.0),
        dict(e0=20.0, e_target=20.0, e_min=15.0, e_max=30.0, p_max=7.0),
        dict(e0=40.0, e_target=70.0, e_min=9.0, e_max=90.0, p_max=11.0, p_dis=6.0),
    ],
)
def test_matches_brute_force(vehicle_factory, limits, kwargs):
    v = vehicle_factory(arrive=1, depart=4, **kwargs)
    solution = solve_sp1(AevFleet((v,)), TARIFF4, limits)
    assert solution.objective == pytest.approx(brute_force_cost(v, TARIFF4), abs=1e-5)


def _random_vehicle(rng, vid, periods):
    arrive = int(rng.integers(1, periods + 1))
    depart = int(rng.integers(arrive, periods + 1))
    e_max = float(rng.uniform(30.0, 90.0))
    e_min = e_max * float(rng.uniform(0.1, 0.3))
    e0 = float(rng.uniform(e_min, e_max))
    p_ch = float(rng.uniform(3.0, 15.0))
    p_dis = float(rng.uniform(3.0, 15.0))
    reachable = min(e_max, e0 + p_ch * (depart - arrive + 1))
    e_target = float(rng.uniform(e_min, reachable))
    return Aev(vid, arrive, depart, e0, e_target, e_min, e_max, p_ch, p_dis, "office")


def test_random_instances_match_brute_force():
    rng = np.random.default_rng(20240617)
    exact = SolveLimits(gap=0.0)
    for _ in range(60):
        periods = int(rng.integers(2, 7))
        price = rng.uniform(0.1, 1.5, periods)
        tariff = make_tariff(price, discharge_subsidy=price * rng.uniform(0.5, 1.2, periods))
        vehicles = tuple(
            _random_vehicle(rng, f"ev{i}", periods) for i in range(int(rng.integers(1, 3)))
        )
        solution = solve_sp1(AevFleet(vehicles), tariff, exact)
        # 各车独立，总费用为逐车最优之和
        expected = sum(brute_force_cost(v, tariff) for v in vehicles)
        assert solution.objective == pytest.approx(expected, abs=1e-6), vehicles


def test_schedule_respects_vehicle_limits(vehicle_factory):
    v = vehicle_factory(arrive=2, depart=4, e0=40.0, e_target=45.0, e_min=10.0, e_max=60.0)
    s = solve_sp1(AevFleet((v,)), TARIFF4)
    ch, dis, mode = s.p_ch["ev1"], s.p_dis["ev1"], s.mode["ev1"]
    # 窗口外为零
    assert ch[0] == 0.0 and dis[0] == 0.0
    # 充放电互斥
    assert np.all((ch == 0.0) | (dis == 0.0))
    assert np.all(mode[dis < 0] == 1.0)
    energy = v.e0 + np.cumsum(ch + dis)
    assert np.all(energy <= v.e_max + 1e-6)
    assert np.all(energy >= v.e_min - 1e-6)
    assert energy[-1] >= v.e_target - 1e-6


def test_empty_window_vehicle(vehicle_factory):
    v = vehicle_factory(arrive=3, depart=2, e0=30.0, e_target=30.0)
    s = solve_sp1(AevFleet((v,)), TARIFF4)
    assert s.p_ch["ev1"].tolist() == [0.0] * 4
    assert s.objective == 0.0


def test_aggregate_by_region(vehicle_factory):
    fleet = AevFleet(
        (
            vehicle_factory("a", region="office"),
            vehicle_factory("b", region="office", e0=50.0, e_target=40.0),
            vehicle_factory("c", region="residential"),
        )
    )
    s = solve_sp1(fleet, TARIFF4)
    assert set(s.agg) == {"office", "residential"}
    np.testing.assert_allclose(s.agg["office"], s.net_power("a") + s.net_power("b"))
    np.testing.assert_allclose(s.agg["residential"], s.net_power("c"))
    assert s.objective == pytest.approx(
        sum(schedule_cost(s.p_ch[v], s.p_dis[v], TARIFF4) for v in "abc")
    )


def test_parallel_matches_serial(vehicle_factory):
    fleet = AevFleet(tuple(vehicle_factory(f"ev{i}", e0=20.0 + i, e_target=40.0) for i in range(6)))
    serial = solve_sp1(fleet, TARIFF4, workers=1)
    parallel = solve_sp1(fleet, TARIFF4, workers=3)
    assert list(serial.p_ch) == list(parallel.p_ch)
    for vid in serial.p_ch:
        np.testing.assert_array_equal(serial.net_power(vid), parallel.net_power(vid))


def test_build_sp1_names_rows(office_fleet):
    model = build_sp1(office_fleet, TARIFF4)
    assert model.has_var("p_ch[0,ev1,1]")
    assert model.has_var("mode[0,ev2,4]")
    assert not model.has_var("p_ch[0,ev1,4]")
    assert model.summary()["binaries"] == 6
    assert any(row.name == "e_target[ev2]" for row in model.constraints)


def test_unreachable_target_raises(vehicle_factory):
    v = vehicle_factory(arrive=1, depart=2, e0=10.0, e_target=50.0, e_min=10.0, e_max=60.0)
    with pytest.raises(FleetValidationError):
        solve_sp1(AevFleet((v,)), TARIFF4)


def test_worst_case_profile(office_fleet):
    profile = worst_case_profile(office_fleet, periods=4)
    assert profile["office"].tolist() == [12.0, 24.0, 24.0, 12.0]


def test_scenario_schedules_and_files(tmp_path, demo6):
    schedules = solve_sp1_scenarios(demo6)
    assert len(schedules) == 1
    paths = save_schedules(schedules, tmp_path)
    again = load_schedules(paths["sched"])
    np.testing.assert_allclose(again[0].agg["office"], schedules[0].agg["office"])
    agg = load_agg_csv(paths["agg"], demo6.periods, len(demo6.scenarios))
    np.testing.assert_allclose(agg[0]["office"], agg_profiles(schedules)[0]["office"])
