import copy

import numpy as np
import pytest

from gridforge.backend_manager import SolveLimits
from gridforge.case_loader import bundled_case
from gridforge.models import Aev, AevFleet, PlanOptions, PlanSolution
from gridforge.planner import V2G_CAPACITY, solve_dispatch, solve_sp2
from gridforge.verifier import (
    CB_ORDERING,
    CB_OUTPUT,
    CB_SWITCHING,
    DEVICE_GATING,
    DISPATCH_SHAPE,
    ESS_ENERGY,
    ESS_POWER,
    ESS_STATUS,
    LINE_CAPACITY,
    NODAL_BALANCE_P,
    NODAL_BALANCE_Q,
    OLTC_SWITCHING,
    OLTC_TAP,
    PV_OUTPUT,
    RADIALITY,
    REGIONAL_COUPLING,
    SUBSTATION_CAPACITY,
    SUBSTATION_VOLTAGE,
    SVC_OUTPUT,
    UNBUILT_LINE_FLOW,
    V2G_GATING,
    V2G_REACTIVE,
    VOLTAGE_BOUNDS,
    VOLTAGE_DROP,
    verify_plan,
    verify_worst_case,
)

AGG = {"office": [10.0, 10.0, 10.0, 10.0]}


@pytest.fixture
def star4_plan(star4, limits):
    return solve_sp2(star4, AGG, PlanOptions(dgrs_enabled=False), limits)


def _fleet(n, p_max=12.0):
    return AevFleet(
        tuple(
            Aev(f"ev{i:03d}", 1, 4, 30.0, 30.0, 9.0, 90.0, p_max, p_max, "office")
            for i in range(n)
        )
    )


def test_solved_plan_passes(star4, star4_plan):
    report = verify_plan(star4_plan, star4, AGG)
    assert report.passed, report.to_dict()
    assert report.families() == []


def test_wrong_profile_breaks_coupling(star4, star4_plan):
    report = verify_plan(star4_plan, star4, {"office": [20.0] * 4})
    assert REGIONAL_COUPLING in report.families()


def test_cycle_detected(star4, star4_plan):
    plan = copy.deepcopy(star4_plan)
    plan.lines_built = (True, True, False)
    report = verify_plan(plan, star4, AGG)
    assert not report.passed
    assert RADIALITY in report.families()


def test_flow_corruption(star4, star4_plan):
    plan = copy.deepcopy(star4_plan)
    plan.dispatch[0].line_p[1, 2] += 50.0
    families = verify_plan(plan, star4, AGG).families()
    assert NODAL_BALANCE_P in families
    assert VOLTAGE_DROP in families


def test_line_overload(star4, star4_plan):
    plan = copy.deepcopy(star4_plan)
    plan.dispatch[0].line_p[0, 0] = 2000.0
    report = verify_plan(plan, star4, AGG)
    overloads = [v for v in report.violations if v.family == LINE_CAPACITY]
    assert overloads
    assert overloads[0].element == (1, 2)
    assert overloads[0].period == 1


def test_voltage_bounds(star4, star4_plan):
    plan = copy.deepcopy(star4_plan)
    plan.dispatch[0].w[3, 2] = 0.5
    report = verify_plan(plan, star4, AGG)
    hits = [v for v in report.violations if v.family == VOLTAGE_BOUNDS]
    assert hits and hits[0].element == 4


def test_small_excess_is_warning(star4, star4_plan):
    plan = copy.deepcopy(star4_plan)
    # 5e-6 pu 介于容差与 10 倍容差之间
    plan.dispatch[0].w[3, 0] = star4.v_max**2 + 5e-6
    report = verify_plan(plan, star4, AGG)
    assert any(v.family == VOLTAGE_BOUNDS for v in report.warnings)
    assert not any(v.family == VOLTAGE_BOUNDS for v in report.violations)


def test_reactive_output_without_support(star4, star4_plan):
    plan = copy.deepcopy(star4_plan)
    plan.options = PlanOptions(reactive_support=False, dgrs_enabled=False)
    plan.dispatch[0].v2g_q[2][:] = 30.0
    assert V2G_REACTIVE in verify_plan(plan, star4, AGG).families()


def test_worst_case_feasible(star4, star4_plan, limits):
    report = verify_worst_case(star4_plan, star4, _fleet(3), limits=limits)
    assert report.feasible
    assert report.profiles[0]["office"].tolist() == [36.0] * 4
    assert report.dispatch is not None


def test_worst_case_reports_limiting_constraint(star4, star4_plan, limits):
    # 50 × 12 kW = 600 kW 超过 500 kVA 充电站容量
    report = verify_worst_case(star4_plan, star4, _fleet(50), limits=limits)
    assert not report.feasible
    assert report.status == "infeasible"
    assert report.limiting[0]["family"] == V2G_CAPACITY
    assert report.limiting[0]["element"] == 2
    assert report.to_dict()["limiting"][0]["family"] == V2G_CAPACITY


def test_worst_case_names_overloaded_line(star4, star4_plan, limits):
    # 120 kW 基础负荷 + 36 kW 充电超过 145 kVA 的首段线路
    narrow = star4.with_line((1, 2), s_max=145.0)
    report = verify_worst_case(star4_plan, narrow, _fleet(3), limits=limits)
    assert not report.feasible
    assert report.limiting[0]["family"] == LINE_CAPACITY
    assert report.limiting[0]["element"] == (1, 2)


def test_worst_case_empty_fleet(star4, star4_plan, limits):
    report = verify_worst_case(star4_plan, star4, AevFleet(()), limits=limits)
    assert report.feasible
    assert report.profiles == [{}]


@pytest.mark.parametrize("seed", range(6))
def test_feasible_worst_case_dispatch_verifies(star4, star4_plan, limits, seed):
    rng = np.random.default_rng(seed)
    vehicles = []
    for i in range(int(rng.integers(1, 101))):
        arrive = int(rng.integers(1, 5))
        depart = int(rng.integers(arrive, 5))
        p_max = float(rng.uniform(3.0, 12.0))
        vehicles.append(Aev(f"ev{i:03d}", arrive, depart, 30.0, 30.0, 9.0, 90.0, p_max, p_max, "office"))
    report = verify_worst_case(star4_plan, star4, AevFleet(tuple(vehicles)), limits=limits)
    if report.feasible:
        check = verify_plan(report.dispatch, star4, report.profiles)
        assert check.passed, check.to_dict()
    else:
        assert report.status == "infeasible"
        assert report.limiting


# ==================== 构造性破坏 ====================
SOLVE_LIMITS = SolveLimits(gap=1e-6, time_limit=120.0)


@pytest.fixture(scope="module")
def case_a():
    case = bundled_case("star4")
    return case, solve_sp2(case, AGG, PlanOptions(dgrs_enabled=False), SOLVE_LIMITS)


@pytest.fixture(scope="module")
def case_dgr(star4_dgr):
    built = PlanSolution(
        star4_dgr.name,
        PlanOptions(),
        (True, True, True),
        (2,),
        {"pv": (4,), "ess": (3,), "cb": (4,), "svc": (3,)},
        [],
    )
    return star4_dgr, solve_dispatch(star4_dgr, built, AGG, limits=SOLVE_LIMITS)


def _ordered(counts, levels):
    """前 count 档投入的档位矩阵 (levels × T)"""
    return np.array([[1.0 if s < c else 0.0 for c in counts] for s in range(levels)])


def _unbuild_line(plan, case):
    plan.lines_built = (True, True, False)
    plan.dispatch[0].line_p[2, 0] = 25.0


def _tap_pattern(plan, case):
    oltc = plan.dispatch[0].oltc
    oltc["steps"] = _ordered([0, 4, 0, 4], case.oltc.steps)
    oltc["tap"] = oltc["steps"].sum(axis=0)


def _cb_out_of_order(plan, case):
    rec = plan.dispatch[0].cb[4]
    dev = case.node(4).dgr["cb"]
    rec["steps"] = np.asarray(rec["steps"], dtype=float)
    rec["steps"][:, 0] = [0.0, 0.0, 1.0]
    rec["count"] = rec["steps"].sum(axis=0)
    rec["q"] = dev.q_min + dev.bank_kvar * rec["count"]


def _cb_chatter(plan, case):
    rec = plan.dispatch[0].cb[4]
    dev = case.node(4).dgr["cb"]
    rec["steps"] = _ordered([0, 3, 0, 3], dev.banks)
    rec["count"] = rec["steps"].sum(axis=0)
    rec["q"] = dev.q_min + dev.bank_kvar * rec["count"]


def _ess_both_modes(plan, case):
    rec = plan.dispatch[0].ess[3]
    rec["t_ch"] = np.asarray(rec["t_ch"], dtype=float)
    rec["t_dis"] = np.asarray(rec["t_dis"], dtype=float)
    rec["t_ch"][0] = rec["t_dis"][0] = 1.0


def _pv_not_built(plan, case):
    plan.devices = {**plan.devices, "pv": ()}
    plan.dispatch[0].pv_p[4][:] = 10.0


def _set(attr, index, value):
    def corrupt(plan, case):
        getattr(plan.dispatch[0], attr)[index] = value

    return corrupt


def _shift(attr, index, delta):
    def corrupt(plan, case):
        getattr(plan.dispatch[0], attr)[index] += delta

    return corrupt


def _shift_item(attr, key, index, delta):
    def corrupt(plan, case):
        getattr(plan.dispatch[0], attr)[key][index] += delta

    return corrupt


def _shift_record(attr, key, field, index, delta):
    def corrupt(plan, case):
        getattr(plan.dispatch[0], attr)[key][field][index] += delta

    return corrupt


def _plan_attr(name, value):
    def corrupt(plan, case):
        setattr(plan, name, value)

    return corrupt


CORRUPTIONS = [
    ("case_a", _shift("line_p", (1, 0), 1.0), NODAL_BALANCE_P),
    ("case_a", _shift("line_q", (2, 0), 1.0), NODAL_BALANCE_Q),
    ("case_a", _unbuild_line, UNBUILT_LINE_FLOW),
    ("case_a", _plan_attr("lines_built", (True, False, True)), RADIALITY),
    ("case_a", _set("line_p", (0, 0), 2000.0), LINE_CAPACITY),
    ("case_a", _set("w", (3, 2), 0.5), VOLTAGE_BOUNDS),
    ("case_a", _shift("w", (3, 1), 0.01), VOLTAGE_DROP),
    ("case_a", _shift("sub_p", 0, 10100.0), SUBSTATION_CAPACITY),
    ("case_a", _shift("w", (0, 0), 0.02), SUBSTATION_VOLTAGE),
    ("case_a", _shift_item("v2g_p", 2, 0, 600.0), V2G_CAPACITY),
    ("case_a", _plan_attr("stations", ()), V2G_GATING),
    ("case_a", _shift_item("v2g_p", 2, 1, 5.0), REGIONAL_COUPLING),
    ("case_dgr", _shift("w", (0, slice(None)), 0.02), OLTC_TAP),
    ("case_dgr", _tap_pattern, OLTC_SWITCHING),
    ("case_dgr", _shift_item("pv_p", 4, 2, 60.0), PV_OUTPUT),
    ("case_dgr", _shift_item("svc_q", 3, 0, 80.0), SVC_OUTPUT),
    ("case_dgr", _shift_record("ess", 3, "e", slice(None), 100.0), ESS_ENERGY),
    ("case_dgr", _shift_record("ess", 3, "e", 0, 5.0), ESS_ENERGY),
    ("case_dgr", _shift_record("ess", 3, "p_ch", 0, 80.0), ESS_POWER),
    ("case_dgr", _ess_both_modes, ESS_STATUS),
    ("case_dgr", _shift_record("cb", 4, "q", slice(None), 10.0), CB_OUTPUT),
    ("case_dgr", _cb_out_of_order, CB_ORDERING),
    ("case_dgr", _cb_chatter, CB_SWITCHING),
    ("case_dgr", _pv_not_built, DEVICE_GATING),
]


@pytest.mark.parametrize("fixture_name", ["case_a", "case_dgr"])
def test_uncorrupted_plans_pass(request, fixture_name):
    case, plan = request.getfixturevalue(fixture_name)
    report = verify_plan(plan, case, AGG)
    assert report.passed, report.to_dict()


@pytest.mark.parametrize(
    "fixture_name, corrupt, family",
    CORRUPTIONS,
    ids=[f"{i:02d}-{family}" for i, (_, _, family) in enumerate(CORRUPTIONS)],
)
def test_corruption_reported_in_family(request, fixture_name, corrupt, family):
    case, solved = request.getfixturevalue(fixture_name)
    plan = copy.deepcopy(solved)
    corrupt(plan, case)
    report = verify_plan(plan, case, AGG)
    assert not report.passed
    assert family in report.families(), report.families()


def test_balance_magnitude_in_kw(case_a):
    case, solved = case_a
    plan = copy.deepcopy(solved)
    plan.dispatch[0].line_p[1, 0] += 1.0
    hits = [
        v for v in verify_plan(plan, case, AGG).violations
        if v.family == NODAL_BALANCE_P and v.element == 3
    ]
    assert len(hits) == 1
    assert hits[0].scenario == 0
    assert hits[0].period == 1
    assert hits[0].magnitude == pytest.approx(1.0, abs=1e-4)


# ==================== 维度检查 ====================
@pytest.mark.parametrize("dispatch", [lambda d: [], lambda d: d * 2])
def test_scenario_count_mismatch(case_a, dispatch):
    case, solved = case_a
    plan = copy.deepcopy(solved)
    plan.dispatch = dispatch(plan.dispatch)
    report = verify_plan(plan, case, AGG)
    assert not report.passed
    assert report.families() == [DISPATCH_SHAPE]


def test_truncated_arrays(case_a):
    case, solved = case_a
    plan = copy.deepcopy(solved)
    plan.dispatch[0].w = plan.dispatch[0].w[:, :3]
    plan.dispatch[0].v2g_p[2] = plan.dispatch[0].v2g_p[2][:2]
    report = verify_plan(plan, case, AGG)
    shapes = [v.element for v in report.violations if v.family == DISPATCH_SHAPE]
    assert (0, "w") in shapes
    assert (0, "v2g_p[2]") in shapes


def test_step_matrix_width_checked(case_dgr):
    case, solved = case_dgr
    plan = copy.deepcopy(solved)
    rec = plan.dispatch[0].cb[4]
    rec["steps"] = np.asarray(rec["steps"])[:, :2]
    assert DISPATCH_SHAPE in verify_plan(plan, case, AGG).families()
