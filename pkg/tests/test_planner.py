from dataclasses import replace

import networkx as nx
import numpy as np
import pytest

from gridforge.errors import ConsistencyError, InfeasibleError, InputError
from gridforge.metrics import dispatch_summary, plan_voltage_spread
from gridforge.models import PlanOptions, PlanSolution
from gridforge.planner import (
    V2G_CAPACITY,
    REGIONAL_COUPLING,
    build_sp2,
    extract_costs,
    load_plan,
    normalize_profiles,
    save_plan,
    solve_dispatch,
    solve_sp2,
)
from gridforge.scheduler import agg_profiles, solve_sp1_scenarios

CASE_A = PlanOptions(reactive_support=True, dgrs_enabled=False)
CASE_B = PlanOptions(reactive_support=False, dgrs_enabled=True)
CASE_C = PlanOptions()

FLAT_OFFICE = {"office": [10.0, 10.0, 10.0, 10.0]}


def _rel_close(a, b, rel=1e-3):
    return abs(a - b) <= rel * max(1.0, abs(b))


def test_normalize_profiles_broadcasts(star4):
    profiles = normalize_profiles(star4, FLAT_OFFICE)
    assert len(profiles) == 1
    assert profiles[0]["office"].tolist() == [10.0] * 4


def test_normalize_profiles_checks_length(star4):
    with pytest.raises(InputError):
        normalize_profiles(star4, {"office": [1.0, 2.0]})


def test_build_sp2_size(star4):
    model = build_sp2(star4, FLAT_OFFICE, CASE_A)
    summary = model.summary()
    # 3 条线路 + 1 个充电站
    assert summary["binaries"] == 4
    # 线路与充电站视在功率锥：(3 + 1) × 4 时段
    assert summary["cones"] == 16
    assert summary["epigraphs"] == 12
    assert model.has_var("z[1,2]")
    assert model.has_var("y_v2g[2]")


def test_star4_builds_tree_and_station(star4, limits):
    plan = solve_sp2(star4, FLAT_OFFICE, CASE_C, limits)
    assert plan.lines_built == (True, True, True)
    assert plan.stations == (2,)
    d = plan.dispatch[0]
    np.testing.assert_allclose(d.v2g_p[2], [10.0] * 4, atol=1e-5)
    # 变电站供给全部负荷与网损
    assert np.all(d.sub_p >= 130.0 - 1e-6)
    assert plan.costs.total == pytest.approx(plan.objective, rel=1e-4)
    assert plan.report.max_cone_violation <= 1e-6


@pytest.mark.parametrize("options", [CASE_A, CASE_C])
def test_sp2_violation_history_never_increases(star4, limits, options):
    plan = solve_sp2(star4, FLAT_OFFICE, options, limits)
    history = plan.report.violation_history
    assert len(history) == plan.report.oa_iterations
    assert all(b <= a for a, b in zip(history, history[1:]))
    assert history[-1] == pytest.approx(plan.report.max_cone_violation)


def test_no_demand_skips_station(star4, limits):
    plan = solve_sp2(star4, None, CASE_A, limits)
    assert plan.stations == ()
    assert plan.costs.v2g_capex == 0.0


def test_region_without_station_is_infeasible(star4):
    with pytest.raises(InfeasibleError) as exc:
        solve_sp2(star4, {"residential": [5.0] * 4}, CASE_A)
    assert exc.value.hints[0]["family"] == REGIONAL_COUPLING


def test_overloaded_station_diagnosed(star4, limits):
    with pytest.raises(InfeasibleError) as exc:
        solve_sp2(star4, {"office": [800.0] * 4}, CASE_A, limits)
    families = {h["family"] for h in exc.value.hints}
    assert V2G_CAPACITY in families
    top = exc.value.hints[0]
    assert top["element"] == 2
    # 800 kW 需求 vs 500 kVA 容量
    assert top["amount"] == pytest.approx(300.0, rel=1e-2)


def test_extract_costs_line_annuity(star4):
    econ = replace(star4.econ, lifetimes={**star4.econ.lifetimes, "line": 10})
    case = replace(star4, econ=econ)
    for key, capex in zip([(1, 2), (2, 3), (2, 4)], [10.0, 20.0, 30.0]):
        case = case.with_line(key, capex=capex)
    plan = PlanSolution("star4", CASE_A, (True, True, True), (), {}, [], objective=8.941742)
    costs = extract_costs(plan, case)
    assert costs.line_capex == pytest.approx(8.9417, abs=1e-4)
    assert costs.network_loss == 0.0
    with pytest.raises(ConsistencyError):
        extract_costs(plan, case, objective=10.0)


def _spanning_trees(case):
    graph = nx.Graph()
    graph.add_edges_from(line.key for line in case.lines)
    for tree in nx.SpanningTreeIterator(graph):
        edges = {tuple(sorted(e)) for e in tree.edges}
        yield tuple(line.key in edges for line in case.lines)


@pytest.mark.slow
def test_demo6_tree_matches_enumeration(demo6, limits):
    """拓扑选择与逐棵生成树枚举的最优值一致"""
    agg = agg_profiles(solve_sp1_scenarios(demo6, limits=limits))
    trees = list(_spanning_trees(demo6))
    assert len(trees) == 12

    plan = solve_sp2(demo6, agg, CASE_A, limits)
    assert plan.stations == (2,)

    best = np.inf
    for lines in trees:
        fixed = PlanSolution(demo6.name, CASE_A, lines, (2,), {}, [])
        try:
            candidate = solve_dispatch(demo6, fixed, agg, limits=limits, diagnose=False)
        except InfeasibleError:
            continue
        best = min(best, candidate.objective)
    assert _rel_close(plan.objective, best)


@pytest.mark.slow
def test_case_ordering(demo6, limits):
    agg = agg_profiles(solve_sp1_scenarios(demo6, limits=limits))
    totals = {
        label: solve_sp2(demo6, agg, options, limits).costs.total
        for label, options in (("A", CASE_A), ("B", CASE_B), ("C", CASE_C))
    }
    slack = 1e-3 * max(1.0, totals["C"])
    assert totals["C"] <= totals["A"] + slack
    assert totals["C"] <= totals["B"] + slack


@pytest.mark.slow
def test_demo6_devices_and_oltc(demo6, limits):
    agg = agg_profiles(solve_sp1_scenarios(demo6, limits=limits))
    plan = solve_sp2(demo6, agg, CASE_C, limits)
    d = plan.dispatch[0]
    assert d.oltc is not None
    assert np.count_nonzero(np.diff(d.oltc["tap"])) <= demo6.oltc.max_switches
    for i, rec in d.cb.items():
        assert np.count_nonzero(np.diff(rec["count"])) <= demo6.node(i).dgr["cb"].max_switches
    for i, rec in d.ess.items():
        assert np.all(rec["t_ch"] + rec["t_dis"] <= 1)
    assert plan.costs.total == pytest.approx(plan.objective, rel=1e-4)


@pytest.mark.slow
def test_reactive_support_narrows_voltage_spread(stressed6, limits):
    agg = agg_profiles(solve_sp1_scenarios(stressed6, limits=limits))
    with_q = solve_sp2(stressed6, agg, CASE_C, limits)
    without_q = solve_sp2(stressed6, agg, CASE_B, limits)
    assert with_q.stations == without_q.stations == (6,)
    assert np.allclose(without_q.dispatch[0].v2g_q[6], 0.0)
    assert plan_voltage_spread(with_q) <= plan_voltage_spread(without_q) + 1e-6


def test_solve_dispatch_keeps_builds(star4, limits):
    plan = solve_sp2(star4, FLAT_OFFICE, CASE_A, limits)
    again = solve_dispatch(star4, plan, FLAT_OFFICE, limits=limits)
    assert again.build_signature() == plan.build_signature()
    assert again.objective == pytest.approx(plan.objective, rel=1e-4)


def test_fixed_builds_length_checked(star4):
    bad = PlanSolution("star4", CASE_A, (True, True), (), {}, [])
    with pytest.raises(InputError):
        build_sp2(star4, FLAT_OFFICE, CASE_A, fixed_builds=bad)


def test_plan_files_round_trip(tmp_path, star4, limits):
    plan = solve_sp2(star4, FLAT_OFFICE, CASE_C, limits)
    paths = save_plan(plan, star4, tmp_path, label="C")
    for name in ("plan", "costs", "voltage", "flows", "substation", "v2g"):
        assert paths[name].exists()
    again = load_plan(tmp_path)
    assert again.build_signature() == plan.build_signature()
    assert again.costs.total == pytest.approx(plan.costs.total)
    np.testing.assert_allclose(again.dispatch[0].w, plan.dispatch[0].w)
    summary = dispatch_summary(again, star4)
    assert summary["v2g_energy_kwh"] == pytest.approx(40.0, abs=1e-4)


def test_load_plan_missing(tmp_path):
    with pytest.raises(InputError):
        load_plan(tmp_path / "nothing")


@pytest.mark.parametrize("text", ["{not json", "[1, 2]", '{"plan": {"case": "star4"}}'])
def test_load_plan_malformed(tmp_path, text):
    (tmp_path / "plan.json").write_text(text, encoding="utf-8")
    with pytest.raises(InputError):
        load_plan(tmp_path)
