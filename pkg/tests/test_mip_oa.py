import math

import pytest

from gridforge.backend_manager import INFEASIBLE, OPTIMAL, SolveLimits, backend_manager, get_backend
from gridforge.consts import MIN_CONE_TOL
from gridforge.errors import BackendUnavailableError
from gridforge.mip_model import BINARY, GE, LE, MipModel
from gridforge.oa_engine import (
    cone_violation,
    seed_cuts,
    solve_milp,
    solve_with_oa,
    tangent_cut,
)


def _disc_model():
    """max x + y  s.t. x² + y² ≤ 1"""
    m = MipModel("disc")
    x = m.add_var("x", -2.0, 2.0)
    y = m.add_var("y", -2.0, 2.0)
    m.add_objective({x: -1.0, y: -1.0})
    m.add_cone(x, y, radius_const=1.0, name="disc")
    return m


def _non_increasing(history):
    return all(b <= a for a, b in zip(history, history[1:]))


def test_duplicate_variable_name():
    m = MipModel()
    m.add_var("a")
    with pytest.raises(ValueError):
        m.add_var("a")


def test_fix_rounds_binaries():
    m = MipModel()
    z = m.add_binary("z")
    m.fix("z", 0.9999)
    assert m.variables[z].lb == m.variables[z].ub == 1.0
    assert m.variables[z].kind == BINARY


def test_summary_counts():
    m = _disc_model()
    assert m.summary() == {"variables": 2, "binaries": 0, "constraints": 0, "cones": 1, "epigraphs": 0}
    assert not m.is_pure_milp


def test_tangent_cut_touches_circle():
    m = _disc_model()
    cut = tangent_cut(m.cones[0], 3.0, 4.0)
    assert cut.sense == LE
    assert cut.rhs == pytest.approx(1.0)
    assert cut.terms[0] == pytest.approx(0.6)
    assert cut.terms[1] == pytest.approx(0.8)


def test_seed_cuts_per_cone():
    m = _disc_model()
    assert len(seed_cuts(m, 8)) == 8
    assert seed_cuts(m, 0) == []


def test_solve_milp_rejects_cones():
    with pytest.raises(ValueError):
        solve_milp(_disc_model())


def test_small_milp():
    m = MipModel("knapsack")
    a = m.add_binary("a")
    b = m.add_binary("b")
    c = m.add_binary("c")
    m.add_constr({a: 3.0, b: 4.0, c: 5.0}, LE, 8.0)
    m.add_objective({a: -4.0, b: -5.0, c: -6.0})
    report = solve_milp(m)
    assert report.status == OPTIMAL
    assert report.objective == pytest.approx(-10.0)
    assert report.get("a") == pytest.approx(1.0)
    assert report.get("c") == pytest.approx(1.0)


def test_oa_converges_on_disc():
    report = solve_with_oa(_disc_model(), seed_tangents=8, cone_tol=MIN_CONE_TOL)
    assert report.status == OPTIMAL
    assert report.objective == pytest.approx(-math.sqrt(2.0), abs=1e-4)
    assert report.get("x") == pytest.approx(math.sqrt(0.5), abs=1e-3)
    assert report.max_cone_violation <= MIN_CONE_TOL
    assert report.oa_iterations >= 1
    assert len(report.violation_history) == report.oa_iterations
    assert _non_increasing(report.violation_history)


def test_oa_cone_gated_by_binary():
    """半径由二进制变量控制：x² + y² ≤ (2z)²"""
    m = MipModel("gated")
    x = m.add_var("x", 0.0, 5.0)
    y = m.add_var("y", -5.0, 5.0)
    z = m.add_binary("z")
    m.add_objective({x: -1.0, z: 1.5})
    m.add_cone(x, y, {z: 2.0}, 0.0, "gated")
    report = solve_with_oa(m)
    assert report.status == OPTIMAL
    assert report.get("z") == pytest.approx(1.0)
    assert report.get("x") == pytest.approx(2.0, abs=1e-4)
    assert cone_violation(m.cones[0], report.values) <= 1e-6


def test_oa_epigraph():
    m = MipModel("epi")
    x = m.add_var("x", 1.0, 3.0)
    y = m.add_var("y", -1.0, 1.0)
    e = m.add_var("e", 0.0)
    m.add_objective({e: 1.0})
    m.add_epigraph(x, y, e, hint_radius=1.0, name="loss")
    report = solve_with_oa(m, cone_tol=MIN_CONE_TOL)
    assert report.has_solution
    assert report.objective == pytest.approx(1.0, abs=1e-6)
    assert _non_increasing(report.violation_history)


def test_oa_reports_infeasible():
    m = MipModel("infeasible")
    x = m.add_var("x", 2.0, 3.0)
    y = m.add_var("y", -1.0, 1.0)
    m.add_objective({x: 1.0})
    m.add_cone(x, y, radius_const=1.0)
    report = solve_with_oa(m)
    assert report.status == INFEASIBLE
    assert not report.has_solution


def test_oa_round_limit():
    report = solve_with_oa(_disc_model(), max_rounds=1, seed_tangents=4)
    assert report.status == "limit"
    assert "no convergence" in report.message
    # 正方形顶点 (1, 1)
    assert report.max_cone_violation == pytest.approx(1.0, abs=1e-6)
    assert report.values is not None


@pytest.mark.parametrize("seed_tangents", [3, 4, 5, 6, 7])
def test_oa_history_never_increases(seed_tangents):
    report = solve_with_oa(_disc_model(), seed_tangents=seed_tangents)
    assert report.status == OPTIMAL
    assert _non_increasing(report.violation_history)
    assert report.violation_history[-1] == pytest.approx(report.max_cone_violation)


def test_oa_limit_returns_least_violating_round():
    report = solve_with_oa(_disc_model(), max_rounds=3, seed_tangents=3)
    assert report.violation_history[-1] == pytest.approx(report.max_cone_violation)
    assert _non_increasing(report.violation_history)
    assert cone_violation(_disc_model().cones[0], report.values) == pytest.approx(
        report.max_cone_violation, abs=1e-9
    )


def test_cone_tol_floor(caplog):
    with caplog.at_level("WARNING", logger="gridforge.oa"):
        report = solve_with_oa(_disc_model(), cone_tol=1e-14)
    assert report.status == OPTIMAL
    assert report.max_cone_violation <= MIN_CONE_TOL
    assert "锥容差" in caplog.text


def test_infeasible_linear_rows():
    m = MipModel()
    x = m.add_var("x", 0.0, 1.0)
    m.add_constr({x: 1.0}, GE, 2.0)
    m.add_objective({x: 1.0})
    assert solve_milp(m).status == INFEASIBLE


def test_dump_lp(tmp_path):
    path = _disc_model().dump(tmp_path / "disc.lp")
    text = path.read_text(encoding="utf-8")
    assert "Minimize" in text
    assert "\\ cone disc" in text


def test_unknown_backend():
    with pytest.raises(BackendUnavailableError):
        get_backend("gurobi")


def test_backend_status_report():
    report = backend_manager().status_report()
    assert set(report) == {"highs", "cbc"}
    assert report["highs"]["available"]


def test_cbc_backend_matches_highs():
    pytest.importorskip("mip")
    a = solve_with_oa(_disc_model(), SolveLimits(), backend=get_backend("highs"))
    b = solve_with_oa(_disc_model(), SolveLimits(), backend=get_backend("cbc"))
    assert a.objective == pytest.approx(b.objective, abs=1e-5)
