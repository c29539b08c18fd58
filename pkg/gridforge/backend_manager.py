"""
求解后端管理模块
负责检查 MILP 后端依赖是否可用，并提供统一的后端适配接口
"""

import importlib
import logging
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .consts import DEFAULT_MIP_GAP
from .errors import BackendUnavailableError
from .mip_model import BINARY, EQ, GE, INF, LE, LinearRow, MipModel

logger = logging.getLogger("gridforge.backend")

SOLVER_ENV = "GRIDFORGE_SOLVER"
DEFAULT_BACKEND = "highs"

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
LIMIT = "limit"


@dataclass(frozen=True)
class SolveLimits:
    gap: float = DEFAULT_MIP_GAP
    time_limit: Optional[float] = None  # 秒
    threads: int = 1

    def remaining(self, elapsed: float) -> "SolveLimits":
        if self.time_limit is None:
            return self
        return SolveLimits(self.gap, max(0.0, self.time_limit - elapsed), self.threads)


@dataclass
class BackendResult:
    status: str
    objective: Optional[float]
    values: Optional[np.ndarray]
    mip_gap: float = 0.0
    bound: Optional[float] = None
    message: str = ""


def _trivially_violated(row: LinearRow, tol: float = 1e-9) -> bool:
    if row.sense == LE:
        return 0.0 > row.rhs + tol
    if row.sense == GE:
        return 0.0 < row.rhs - tol
    return abs(row.rhs) > tol


def _relative_gap(objective: Optional[float], bound: Optional[float]) -> float:
    if objective is None or bound is None or not np.isfinite(bound):
        return 0.0
    return abs(objective - bound) / max(1e-10, abs(objective))


class MilpBackend(ABC):
    """后端适配接口：加载模型、追加约束、求解、取值"""

    name = "abstract"

    def __init__(self):
        self._empty_infeasible = False

    @abstractmethod
    def load(self, model: MipModel) -> None:
        """载入模型的变量、线性约束与目标（忽略锥项）"""

    @abstractmethod
    def add_rows(self, rows: Sequence[LinearRow]) -> None:
        """追加线性约束（外逼近切平面）"""

    @abstractmethod
    def solve(self, limits: SolveLimits) -> BackendResult:
        """求解当前模型"""

    def set_start(self, start: Mapping[int, float]) -> bool:
        """设置初始解；不支持时返回 False"""
        return False


class HighsBackend(MilpBackend):
    """scipy.optimize.milp (HiGHS)"""

    name = "highs"

    def load(self, model: MipModel) -> None:
        from scipy.optimize import Bounds

        n = model.num_vars
        self._n = n
        self._constant = model.objective_constant
        self._c = np.zeros(n)
        for i, c in model.objective.items():
            self._c[i] = c
        self._bounds = Bounds(
            np.array([v.lb for v in model.variables], dtype=float),
            np.array([v.ub for v in model.variables], dtype=float),
        )
        self._integrality = np.array(
            [1 if v.kind == BINARY else 0 for v in model.variables], dtype=int
        )
        self._base = self._assemble(model.constraints)
        self._cuts: List[LinearRow] = []

    def _assemble(self, rows: Sequence[LinearRow]) -> Tuple:
        from scipy.sparse import csr_array

        data, row_idx, col_idx = [], [], []
        lo = np.full(len(rows), -np.inf)
        hi = np.full(len(rows), np.inf)
        for k, row in enumerate(rows):
            if not row.terms and _trivially_violated(row):
                self._empty_infeasible = True
            for i, c in row.terms.items():
                data.append(c)
                row_idx.append(k)
                col_idx.append(i)
            if row.sense in (LE, EQ):
                hi[k] = row.rhs
            if row.sense in (GE, EQ):
                lo[k] = row.rhs
        matrix = csr_array((data, (row_idx, col_idx)), shape=(len(rows), self._n))
        return matrix, lo, hi

    def add_rows(self, rows: Sequence[LinearRow]) -> None:
        self._cuts.extend(rows)

    def solve(self, limits: SolveLimits) -> BackendResult:
        from scipy.optimize import LinearConstraint, milp
        from scipy.sparse import vstack

        if self._empty_infeasible:
            return BackendResult(INFEASIBLE, None, None, message="empty row violated")
        matrix, lo, hi = self._base
        if self._cuts:
            cut_matrix, cut_lo, cut_hi = self._assemble(self._cuts)
            matrix = vstack([matrix, cut_matrix]).tocsr()
            lo = np.concatenate([lo, cut_lo])
            hi = np.concatenate([hi, cut_hi])
        constraints = [LinearConstraint(matrix, lo, hi)] if matrix.shape[0] else []
        options = {"disp": False, "mip_rel_gap": limits.gap}
        if limits.time_limit is not None:
            options["time_limit"] = max(1e-3, float(limits.time_limit))
        res = milp(
            self._c,
            integrality=self._integrality,
            bounds=self._bounds,
            constraints=constraints,
            options=options,
        )
        values = None if res.x is None else np.asarray(res.x, dtype=float)
        objective = None if res.fun is None else float(res.fun) + self._constant
        gap = getattr(res, "mip_gap", None)
        gap = 0.0 if gap is None or not np.isfinite(gap) else float(gap)
        bound = getattr(res, "mip_dual_bound", None)
        if res.status == 0:
            status = OPTIMAL
        elif res.status == 1:
            status = FEASIBLE if values is not None else LIMIT
        elif res.status == 2:
            status = INFEASIBLE
        else:
            status = LIMIT
            values = None
        return BackendResult(status, objective, values, gap, bound, str(res.message))


class CbcBackend(MilpBackend):
    """python-mip (CBC)"""

    name = "cbc"

    def load(self, model: MipModel) -> None:
        import mip

        self._mip = mip
        m = mip.Model(name=model.name, sense=mip.MINIMIZE, solver_name=mip.CBC)
        m.verbose = 0
        self._vars = [
            m.add_var(
                name=f"x{v.index}",
                lb=-mip.INF if v.lb == -INF else v.lb,
                ub=mip.INF if v.ub == INF else v.ub,
                var_type=mip.BINARY if v.kind == BINARY else mip.CONTINUOUS,
            )
            for v in model.variables
        ]
        self._m = m
        self.add_rows(model.constraints)
        m.objective = mip.minimize(
            mip.xsum(c * self._vars[i] for i, c in model.objective.items())
            + model.objective_constant
        )

    def add_rows(self, rows: Sequence[LinearRow]) -> None:
        mip = self._mip
        for row in rows:
            if not row.terms:
                if _trivially_violated(row):
                    self._empty_infeasible = True
                continue
            lhs = mip.xsum(c * self._vars[i] for i, c in row.terms.items())
            if row.sense == LE:
                self._m += lhs <= row.rhs
            elif row.sense == GE:
                self._m += lhs >= row.rhs
            else:
                self._m += lhs == row.rhs

    def set_start(self, start: Mapping[int, float]) -> bool:
        self._m.start = [(self._vars[i], float(v)) for i, v in start.items()]
        return True

    def solve(self, limits: SolveLimits) -> BackendResult:
        mip = self._mip
        if self._empty_infeasible:
            return BackendResult(INFEASIBLE, None, None, message="empty row violated")
        m = self._m
        m.max_mip_gap = limits.gap
        m.threads = limits.threads
        max_seconds = limits.time_limit if limits.time_limit is not None else mip.INF
        status = m.optimize(max_seconds=max_seconds)
        has_solution = m.num_solutions > 0
        values = (
            np.array([v.x for v in self._vars], dtype=float) if has_solution else None
        )
        objective = m.objective_value if has_solution else None
        bound = m.objective_bound
        S = mip.OptimizationStatus
        if status == S.OPTIMAL:
            return BackendResult(OPTIMAL, objective, values, _relative_gap(objective, bound), bound)
        if status == S.FEASIBLE:
            return BackendResult(FEASIBLE, objective, values, _relative_gap(objective, bound), bound)
        if status in (S.INFEASIBLE, S.INT_INFEASIBLE):
            return BackendResult(INFEASIBLE, None, None, message=str(status))
        return BackendResult(LIMIT, None, None, message=str(status))


class BackendManager:
    """后端管理器"""

    def __init__(self):
        # 后端名称 -> (所需包, 安装说明, 适配类)
        self.backends: Dict[str, Tuple[str, str, type]] = {
            "highs": ("scipy", "scipy>=1.11.0", HighsBackend),
            "cbc": ("mip", "mip>=1.15.0", CbcBackend),
        }

    def check_package_installed(self, package_name: str) -> bool:
        """
        检查指定包是否已安装

        Args:
            package_name: 包名

        Returns:
            是否已安装
        """
        try:
            importlib.import_module(package_name.replace("-", "_"))
            return True
        except ImportError:
            return False
        except Exception as e:  # python-mip 在缺少 CBC 动态库时会抛出其他异常
            logger.warning(f"导入 {package_name} 失败: {e}")
            return False

    def available_backends(self) -> List[str]:
        return [
            name
            for name, (package, _, _) in self.backends.items()
            if self.check_package_installed(package)
        ]

    def status_report(self) -> Dict[str, Dict[str, object]]:
        """各后端可用性报告"""
        report = {}
        for name, (package, spec, _) in self.backends.items():
            report[name] = {
                "package": package,
                "install": spec,
                "available": self.check_package_installed(package),
            }
        return report

    def resolve_name(self, name: Optional[str] = None) -> str:
        return (name or os.environ.get(SOLVER_ENV) or DEFAULT_BACKEND).strip().lower()

    def create(self, name: Optional[str] = None) -> MilpBackend:
        """
        创建后端实例

        Args:
            name: 后端名称；为空时读取环境变量 GRIDFORGE_SOLVER

        Returns:
            MilpBackend 实例
        """
        name = self.resolve_name(name)
        if name not in self.backends:
            raise BackendUnavailableError(
                f"unknown solver backend {name!r}; choose from {sorted(self.backends)}"
            )
        package, spec, cls = self.backends[name]
        if not self.check_package_installed(package):
            raise BackendUnavailableError(
                f"solver backend {name!r} needs package {spec} (pip install {spec})"
            )
        return cls()


_manager = BackendManager()


def get_backend(name: Optional[str] = None) -> MilpBackend:
    return _manager.create(name)


def backend_manager() -> BackendManager:
    return _manager
