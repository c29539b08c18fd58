"""
分布式调节资源的约束构建
PV / SVC / ESS / CB / OLTC，均以标幺值建模；建设变量 y 由规划模型统一创建
"""

from typing import TYPE_CHECKING, List

import numpy as np

from .mip_model import EQ, GE, LE, MipModel
from .models import CbCandidate, EssCandidate, OltcSpec, PvCandidate, SvcCandidate

if TYPE_CHECKING:
    from .planner import Sp2Builder


def add_pv(b: "Sp2Builder", k: int, i: int, pv: PvCandidate, y: int) -> None:
    """出力不超过 y·P̄_t"""
    m = b.model
    for t in range(1, b.T + 1):
        cap = pv.p_max[t - 1] / b.base
        p = m.add_var(f"Ppv[{k},{i},{t}]", 0.0, cap)
        m.add_constr({p: 1.0, y: -cap}, LE, 0.0, f"pv_gate[{k},{i},{t}]")
        b.inject_p(k, i, t, p, 1.0)


def add_svc(b: "Sp2Builder", k: int, i: int, svc: SvcCandidate, y: int) -> None:
    """y·Q̲ ≤ Q ≤ y·Q̄"""
    m = b.model
    q_min, q_max = svc.q_min / b.base, svc.q_max / b.base
    for t in range(1, b.T + 1):
        q = m.add_var(f"Qsvc[{k},{i},{t}]", min(0.0, q_min), max(0.0, q_max))
        m.add_constr({q: 1.0, y: -q_max}, LE, 0.0, f"svc_up[{k},{i},{t}]")
        m.add_constr({q: 1.0, y: -q_min}, GE, 0.0, f"svc_lo[{k},{i},{t}]")
        b.inject_q(k, i, t, q, 1.0)


def add_ess(b: "Sp2Builder", k: int, i: int, ess: EssCandidate, y: int) -> None:
    """
    储能：充放电互斥、功率上下限、能量循环
    节点注入为 P_dis − P_ch；E_{t+1} = E_t + η_ch·P_ch·Δt − P_dis·Δt/η_dis，E_{T+1} = E_1
    """
    m = b.model
    h = b.hours
    e_min, e_max = ess.e_min / b.base, ess.e_max / b.base
    p_ch_max, p_dis_max = ess.p_ch_max / b.base, ess.p_dis_max / b.base
    p_min = ess.p_min / b.base
    energy: List[int] = []
    flows = []
    for t in range(1, b.T + 1):
        e = m.add_var(f"Ess_e[{k},{i},{t}]", 0.0, e_max)
        m.add_constr({e: 1.0, y: -e_max}, LE, 0.0, f"ess_emax[{k},{i},{t}]")
        m.add_constr({e: 1.0, y: -e_min}, GE, 0.0, f"ess_emin[{k},{i},{t}]")
        ch = m.add_var(f"Ess_ch[{k},{i},{t}]", 0.0, p_ch_max)
        dis = m.add_var(f"Ess_dis[{k},{i},{t}]", 0.0, p_dis_max)
        t_ch = m.add_binary(f"Ess_tch[{k},{i},{t}]")
        t_dis = m.add_binary(f"Ess_tdis[{k},{i},{t}]")
        m.add_constr({ch: 1.0, t_ch: -p_ch_max}, LE, 0.0)
        m.add_constr({ch: 1.0, t_ch: -p_min}, GE, 0.0)
        m.add_constr({dis: 1.0, t_dis: -p_dis_max}, LE, 0.0)
        m.add_constr({dis: 1.0, t_dis: -p_min}, GE, 0.0)
        m.add_constr({t_ch: 1.0, t_dis: 1.0, y: -1.0}, LE, 0.0, f"ess_status[{k},{i},{t}]")
        b.inject_p(k, i, t, dis, 1.0)
        b.inject_p(k, i, t, ch, -1.0)
        energy.append(e)
        flows.append((ch, dis))
    for t in range(b.T):
        nxt = energy[(t + 1) % b.T]
        ch, dis = flows[t]
        m.add_constr(
            {nxt: 1.0, energy[t]: -1.0, ch: -ess.eta_ch * h, dis: h / ess.eta_dis},
            EQ,
            0.0,
            f"ess_energy[{k},{i},{t + 1}]",
        )


def _switching(
    m: MipModel,
    prefix: str,
    counts: List[dict],
    steps: int,
    budget: int,
    periods: int,
) -> None:
    """
    档位变化计数：n_t − n_{t−1} ∈ [T_in − N̄·T_de, N̄·T_in − T_de]，T_in + T_de ≤ 1，
    日内动作次数 Σ(T_in + T_de) ≤ budget
    """
    actions = {}
    for t in range(2, periods + 1):
        t_in = m.add_binary(f"{prefix}_in[{t}]")
        t_de = m.add_binary(f"{prefix}_de[{t}]")
        delta = dict(counts[t - 1])
        for var, c in counts[t - 2].items():
            delta[var] = delta.get(var, 0.0) - c
        up = dict(delta)
        up[t_in] = -float(steps)
        up[t_de] = 1.0
        m.add_constr(up, LE, 0.0, f"{prefix}_up[{t}]")
        lo = dict(delta)
        lo[t_in] = -1.0
        lo[t_de] = float(steps)
        m.add_constr(lo, GE, 0.0, f"{prefix}_lo[{t}]")
        m.add_constr({t_in: 1.0, t_de: 1.0}, LE, 1.0)
        actions[t_in] = 1.0
        actions[t_de] = 1.0
    if actions:
        m.add_constr(actions, LE, float(budget), f"{prefix}_budget")


def add_cb(b: "Sp2Builder", k: int, i: int, cb: CbCandidate, y: int) -> None:
    """电容器组：有序投切 (低编号组先投入)，Q = y·Q_min + Σ v_s·T_s"""
    m = b.model
    bank = cb.bank_kvar / b.base
    q_min = cb.q_min / b.base
    counts = []
    for t in range(1, b.T + 1):
        steps = [m.add_binary(f"Cb_s[{k},{i},{s},{t}]") for s in range(1, cb.banks + 1)]
        m.add_constr({steps[0]: 1.0, y: -1.0}, LE, 0.0)
        for s in range(1, cb.banks):
            m.add_constr({steps[s]: 1.0, steps[s - 1]: -1.0}, LE, 0.0)
        q = m.add_var(f"Qcb[{k},{i},{t}]", 0.0, cb.q_max / b.base)
        terms = {q: 1.0, y: -q_min}
        for s in steps:
            terms[s] = -bank
        m.add_constr(terms, EQ, 0.0, f"cb_q[{k},{i},{t}]")
        b.inject_q(k, i, t, q, 1.0)
        counts.append({s: 1.0 for s in steps})
    _switching(m, f"Cb[{k},{i}]", counts, cb.banks, cb.max_switches, b.T)


def add_oltc(b: "Sp2Builder", k: int, oltc: OltcSpec, w_sub: List[int]) -> None:
    """变电站电压平方固定为分接头档位值，档位有序，日内动作次数受限"""
    m = b.model
    tap_w = oltc.tap_w()
    increments = np.diff(tap_w)
    counts = []
    for t in range(1, b.T + 1):
        steps = [m.add_binary(f"Oltc_s[{k},{s},{t}]") for s in range(1, oltc.steps + 1)]
        for s in range(1, oltc.steps):
            m.add_constr({steps[s]: 1.0, steps[s - 1]: -1.0}, LE, 0.0)
        terms = {w_sub[t - 1]: 1.0}
        for s, v in zip(steps, increments):
            terms[s] = -float(v)
        m.add_constr(terms, EQ, float(tap_w[0]), f"oltc_w[{k},{t}]")
        counts.append({s: 1.0 for s in steps})
    _switching(m, f"Oltc[{k}]", counts, oltc.steps, oltc.max_switches, b.T)
