import numpy as np
import pytest

from gridforge.models import PlanOptions, PlanSolution
from gridforge.planner import Sp2Builder, solve_dispatch
from gridforge.verifier import verify_plan

AGG = {"office": [10.0, 10.0, 10.0, 10.0]}


def _all_built(case):
    return PlanSolution(
        case.name,
        PlanOptions(),
        (True, True, True),
        (2,),
        {"pv": (4,), "ess": (3,), "cb": (4,), "svc": (3,)},
        [],
    )


def test_device_variables(star4_dgr):
    b = Sp2Builder(star4_dgr, PlanOptions())
    model = b.build(AGG)
    for name in ("y_pv[4]", "y_ess[3]", "y_cb[4]", "y_svc[3]"):
        assert model.has_var(name)
    assert model.has_var("Ess_tch[0,3,4]")
    assert model.has_var("Cb_s[0,4,3,1]")
    assert model.has_var("Oltc_s[0,4,2]")
    assert model.has_var("Cb[0,4]_in[2]")
    assert not model.has_var("Cb[0,4]_in[1]")
    names = {row.name for row in model.constraints}
    assert "ess_energy[0,3,4]" in names
    assert "Cb[0,4]_budget" in names
    assert "Oltc[0]_budget" in names


def test_devices_disabled(star4_dgr):
    model = Sp2Builder(star4_dgr, PlanOptions(dgrs_enabled=False)).build(AGG)
    assert not model.has_var("y_pv[4]")
    assert not model.has_var("Oltc_s[0,1,1]")
    assert model.var("w[0,1,1]") is not None
    w = model.variables[model.var("w[0,1,1]")]
    assert w.lb == w.ub == 1.0


def test_device_dispatch_invariants(star4_dgr, limits):
    case = star4_dgr
    plan = solve_dispatch(case, _all_built(case), AGG, limits=limits)
    d = plan.dispatch[0]
    T = case.periods

    pv = case.node(4).dgr["pv"]
    assert np.all(d.pv_p[4] <= np.asarray(pv.p_max) + 1e-6)
    assert np.all(d.pv_p[4] >= -1e-6)

    svc = case.node(3).dgr["svc"]
    assert np.all(d.svc_q[3] <= svc.q_max + 1e-6)
    assert np.all(d.svc_q[3] >= svc.q_min - 1e-6)

    ess = case.node(3).dgr["ess"]
    rec = d.ess[3]
    assert np.all(rec["t_ch"] + rec["t_dis"] <= 1)
    for t in range(T):
        nxt = rec["e"][(t + 1) % T]
        expected = rec["e"][t] + ess.eta_ch * rec["p_ch"][t] - rec["p_dis"][t] / ess.eta_dis
        assert nxt == pytest.approx(expected, abs=1e-4)
    assert np.all(rec["e"] >= ess.e_min - 1e-4)
    assert np.all(rec["e"] <= ess.e_max + 1e-4)

    cb = case.node(4).dgr["cb"]
    np.testing.assert_allclose(d.cb[4]["q"], cb.bank_kvar * d.cb[4]["count"], atol=1e-4)
    assert np.count_nonzero(np.diff(d.cb[4]["count"])) <= cb.max_switches

    taps = d.oltc["tap"]
    assert np.count_nonzero(np.diff(taps)) <= case.oltc.max_switches
    tap_v = case.oltc.tap_voltages()[taps.astype(int)]
    np.testing.assert_allclose(d.voltage[case.node_index[1]], tap_v, atol=1e-6)

    assert verify_plan(plan, case, AGG).passed


def test_unbuilt_devices_stay_idle(star4_dgr, limits):
    case = star4_dgr
    plan = PlanSolution(case.name, PlanOptions(), (True, True, True), (2,), {}, [])
    result = solve_dispatch(case, plan, AGG, limits=limits)
    d = result.dispatch[0]
    assert np.allclose(d.pv_p[4], 0.0)
    assert np.allclose(d.svc_q[3], 0.0)
    assert np.allclose(d.ess[3]["e"], 0.0)
    assert np.allclose(d.cb[4]["count"], 0.0)
