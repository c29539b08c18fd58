"""
外逼近求解引擎
在 MILP 后端之上迭代添加二维锥切平面与二次上境图梯度切平面，使其可求解 MISOCP
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .backend_manager import (
    FEASIBLE,
    INFEASIBLE,
    LIMIT,
    OPTIMAL,
    MilpBackend,
    SolveLimits,
    get_backend,
)
from .consts import DEFAULT_CONE_TOL, DEFAULT_OA_MAX_ROUNDS, DEFAULT_OA_SEED_TANGENTS, MIN_CONE_TOL
from .mip_model import LE, ConeTerm, LinearRow, MipModel, QuadEpigraph

logger = logging.getLogger("gridforge.oa")

__all__ = [
    "SolveLimits",
    "SolveReport",
    "solve_milp",
    "solve_with_oa",
    "tangent_cut",
    "gradient_cut",
    "seed_cuts",
]


@dataclass
class SolveReport:
    status: str
    objective: Optional[float]
    values: Optional[np.ndarray]
    mip_gap: float = 0.0
    oa_iterations: int = 0
    max_cone_violation: float = 0.0
    wall_time: float = 0.0
    violation_history: List[float] = field(default_factory=list)
    gap_trace: List[Tuple[float, float]] = field(default_factory=list)
    message: str = ""
    index: Optional[Mapping[str, int]] = None

    @property
    def has_solution(self) -> bool:
        return self.values is not None and self.status in (OPTIMAL, FEASIBLE)

    def get(self, name: str) -> float:
        return float(self.values[self.index[name]])

    def to_dict(self) -> Dict[str, object]:
        return {
            "status": self.status,
            "objective": self.objective,
            "mip_gap": self.mip_gap,
            "oa_iterations": self.oa_iterations,
            "max_cone_violation": self.max_cone_violation,
            "wall_time": self.wall_time,
            "violation_history": list(self.violation_history),
            "gap_trace": [list(p) for p in self.gap_trace],
            "message": self.message,
        }


# ==================== 切平面 ====================
def cone_violation(cone: ConeTerm, values) -> float:
    x, y = values[cone.x], values[cone.y]
    r = max(0.0, cone.radius_value(values))
    return x * x + y * y - r * r


def epigraph_violation(term: QuadEpigraph, values) -> float:
    x, y = values[term.x], values[term.y]
    return x * x + y * y - values[term.epi]


def tangent_cut(cone: ConeTerm, x_hat: float, y_hat: float) -> LinearRow:
    """
    在方向 (x̂, ŷ) 上的切平面 x·ux + y·uy ≤ radius

    Args:
        cone: 锥项
        x_hat, y_hat: 生成点（非零）

    Returns:
        线性约束
    """
    norm = math.hypot(x_hat, y_hat)
    ux, uy = x_hat / norm, y_hat / norm
    terms = {cone.x: ux}
    terms[cone.y] = terms.get(cone.y, 0.0) + uy
    for i, c in cone.radius.items():
        terms[i] = terms.get(i, 0.0) - c
    return LinearRow(terms, LE, cone.radius_const, f"oa_{cone.name}")


def gradient_cut(term: QuadEpigraph, x_hat: float, y_hat: float) -> LinearRow:
    """epi ≥ 2x̂·x + 2ŷ·y − (x̂² + ŷ²)"""
    terms = {term.x: 2.0 * x_hat}
    terms[term.y] = terms.get(term.y, 0.0) + 2.0 * y_hat
    terms[term.epi] = terms.get(term.epi, 0.0) - 1.0
    return LinearRow(terms, LE, x_hat * x_hat + y_hat * y_hat, f"oa_{term.name}")


def seed_cuts(model: MipModel, k: int) -> List[LinearRow]:
    """预置 k 个均匀分布的切平面"""
    if k <= 0:
        return []
    rows = []
    angles = [2.0 * math.pi * j / k for j in range(k)]
    for cone in model.cones:
        for a in angles:
            rows.append(tangent_cut(cone, math.cos(a), math.sin(a)))
    for term in model.epigraphs:
        if term.hint_radius:
            rho = term.hint_radius
            for a in angles:
                rows.append(gradient_cut(term, rho * math.cos(a), rho * math.sin(a)))
    return rows


def _separate(
    model: MipModel, values, tol: float, seen: set
) -> Tuple[List[LinearRow], float, float]:
    """返回 (新切平面, 最大违反量, 上境图低估的目标量)"""
    cuts = []
    worst = 0.0
    underestimate = 0.0
    for k, cone in enumerate(model.cones):
        viol = cone_violation(cone, values)
        worst = max(worst, viol)
        if viol > tol:
            x_hat, y_hat = values[cone.x], values[cone.y]
            norm = math.hypot(x_hat, y_hat)
            key = ("c", k, round(x_hat / norm, 10), round(y_hat / norm, 10))
            if key not in seen:
                seen.add(key)
                cuts.append(tangent_cut(cone, x_hat, y_hat))
    for k, term in enumerate(model.epigraphs):
        viol = epigraph_violation(term, values)
        worst = max(worst, viol)
        if viol > 0:
            underestimate += model.objective.get(term.epi, 0.0) * viol
        if viol > tol:
            x_hat, y_hat = values[term.x], values[term.y]
            key = ("e", k, round(x_hat, 10), round(y_hat, 10))
            if key not in seen:
                seen.add(key)
                cuts.append(gradient_cut(term, x_hat, y_hat))
    return cuts, worst, underestimate


# ==================== 求解入口 ====================
def solve_milp(
    model: MipModel,
    limits: Optional[SolveLimits] = None,
    backend: Optional[MilpBackend] = None,
) -> SolveReport:
    """
    求解纯 MILP 模型

    Args:
        model: 不含锥项的模型
        limits: gap / 时间限制
        backend: 后端实例，默认按 GRIDFORGE_SOLVER 选择

    Returns:
        SolveReport（不可行以状态返回）
    """
    if not model.is_pure_milp:
        raise ValueError("model has conic terms; use solve_with_oa")
    limits = limits or SolveLimits()
    backend = backend or get_backend()
    start = time.perf_counter()
    backend.load(model)
    result = backend.solve(limits)
    wall = time.perf_counter() - start
    status = result.status
    if status == FEASIBLE and limits.time_limit is None:
        status = OPTIMAL
    return SolveReport(
        status=status,
        objective=result.objective,
        values=result.values,
        mip_gap=result.mip_gap,
        oa_iterations=1,
        max_cone_violation=0.0,
        wall_time=wall,
        violation_history=[0.0],
        gap_trace=[(wall, result.mip_gap)],
        message=result.message,
        index=model.index,
    )


def solve_with_oa(
    model: MipModel,
    limits: Optional[SolveLimits] = None,
    cone_tol: float = DEFAULT_CONE_TOL,
    max_rounds: int = DEFAULT_OA_MAX_ROUNDS,
    seed_tangents: int = DEFAULT_OA_SEED_TANGENTS,
    backend: Optional[MilpBackend] = None,
    initial: Optional[Mapping[int, float]] = None,
) -> SolveReport:
    """
    外逼近迭代求解

    每轮记录至今违反量最小的解；未收敛时返回该解，violation_history 单调不增。

    Args:
        model: 可含 ConeTerm / QuadEpigraph 的模型
        limits: gap / 时间限制（时间为全部轮次合计）
        cone_tol: 锥违反容差，低于 MIN_CONE_TOL 时按 MIN_CONE_TOL 处理
        max_rounds: 最大轮次
        seed_tangents: 预置切平面数
        backend: 后端实例
        initial: 初始解 (变量编号 -> 值)，后端不支持时忽略

    Returns:
        SolveReport；未在 max_rounds 内收敛时 status = limit
    """
    limits = limits or SolveLimits()
    backend = backend or get_backend()
    if cone_tol < MIN_CONE_TOL:
        logger.warning(f"⚠️ 锥容差 {cone_tol:.1e} 低于下限，按 {MIN_CONE_TOL:.1e} 处理")
        cone_tol = MIN_CONE_TOL
    start = time.perf_counter()
    backend.load(model)
    seen: set = set()
    if initial and not backend.set_start(initial):
        logger.info(f"后端 {backend.name} 不支持初始解，已忽略")
    if not model.is_pure_milp:
        backend.add_rows(seed_cuts(model, seed_tangents))

    history: List[float] = []
    trace: List[Tuple[float, float]] = []
    best = None
    best_violation = math.inf
    status = LIMIT
    message = ""
    rounds = 0

    for rounds in range(1, max_rounds + 1):
        elapsed = time.perf_counter() - start
        if limits.time_limit is not None and elapsed >= limits.time_limit:
            message = f"time limit reached after {rounds - 1} rounds"
            rounds -= 1
            break
        result = backend.solve(limits.remaining(elapsed))
        if result.values is None:
            status = INFEASIBLE if result.status == INFEASIBLE else LIMIT
            message = result.message
            if status == INFEASIBLE:
                best = None
            break

        cuts, violation, underestimate = _separate(model, result.values, cone_tol, seen)
        if violation < best_violation:
            best, best_violation = result, violation
        history.append(best_violation)
        oa_gap = underestimate / max(1e-10, abs(result.objective or 0.0))
        trace.append((time.perf_counter() - start, max(result.mip_gap, oa_gap)))
        logger.debug(
            f"OA 第 {rounds} 轮: 目标 {result.objective:.6g}, 最大违反 {violation:.3e}, "
            f"新增切平面 {len(cuts)}"
        )

        if violation <= cone_tol:
            status = OPTIMAL if result.status == OPTIMAL else FEASIBLE
            if status == FEASIBLE and limits.time_limit is None:
                status = OPTIMAL
            break
        if result.status != OPTIMAL and limits.time_limit is not None:
            elapsed = time.perf_counter() - start
            if elapsed >= limits.time_limit:
                message = "time limit reached with cone violation"
                break
        if not cuts:
            message = f"OA stalled: violation {violation:.3e} with no new cuts"
            break
        backend.add_rows(cuts)
    else:
        message = f"no convergence within {max_rounds} rounds (violation {best_violation:.3e})"

    wall = time.perf_counter() - start
    values = best.values if best is not None else None
    report = SolveReport(
        status=status,
        objective=best.objective if best is not None else None,
        values=values,
        mip_gap=best.mip_gap if best is not None else 0.0,
        oa_iterations=rounds,
        max_cone_violation=best_violation if values is not None else math.inf,
        wall_time=wall,
        violation_history=history,
        gap_trace=trace,
        message=message,
        index=model.index,
    )
    if status == LIMIT:
        logger.warning(f"外逼近未收敛: {message}")
    else:
        logger.info(
            f"外逼近结束: {status}, {rounds} 轮, 最大违反 {report.max_cone_violation:.2e}, "
            f"用时 {wall:.2f}s"
        )
    return report
