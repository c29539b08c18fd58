"""
与后端无关的混合整数模型容器
变量、线性约束、线性目标，以及等待外逼近处理的二维锥项与二次上境图项
"""

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Union

CONTINUOUS = "continuous"
BINARY = "binary"

LE = "<="
GE = ">="
EQ = "=="

INF = math.inf


@dataclass
class Variable:
    index: int
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = INF


@dataclass
class LinearRow:
    """稀疏线性约束 Σ coef·x (sense) rhs"""

    terms: Dict[int, float]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class ConeTerm:
    """x² + y² ≤ radius²，radius 为仿射表达式 Σ coef·var + const"""

    x: int
    y: int
    radius: Dict[int, float] = field(default_factory=dict)
    radius_const: float = 0.0
    name: str = ""

    def radius_value(self, values) -> float:
        return self.radius_const + sum(c * values[i] for i, c in self.radius.items())


@dataclass
class QuadEpigraph:
    """epi ≥ x² + y²；hint_radius 用于预置切平面"""

    x: int
    y: int
    epi: int
    hint_radius: Optional[float] = None
    name: str = ""


class MipModel:
    """
    混合整数模型

    变量按添加顺序编号；名称唯一，可通过 var(name) 查找
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: List[Variable] = []
        self.index: Dict[str, int] = {}
        self.constraints: List[LinearRow] = []
        self.objective: Dict[int, float] = {}
        self.objective_constant = 0.0
        self.cones: List[ConeTerm] = []
        self.epigraphs: List[QuadEpigraph] = []

    # ---------- 变量 ----------
    def add_var(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = INF,
        kind: str = CONTINUOUS,
    ) -> int:
        if name in self.index:
            raise ValueError(f"duplicate variable name {name!r}")
        if kind == BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise ValueError(f"variable {name!r} has empty bounds [{lb}, {ub}]")
        var = Variable(len(self.variables), name, kind, lb, ub)
        self.variables.append(var)
        self.index[name] = var.index
        return var.index

    def add_binary(self, name: str) -> int:
        return self.add_var(name, 0.0, 1.0, BINARY)

    def var(self, name: str) -> int:
        return self.index[name]

    def has_var(self, name: str) -> bool:
        return name in self.index

    def fix(self, var: Union[int, str], value: float) -> None:
        if isinstance(var, str):
            var = self.index[var]
        v = self.variables[var]
        if v.kind == BINARY:
            value = float(round(value))
        v.lb = v.ub = float(value)

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def binaries(self) -> List[int]:
        return [v.index for v in self.variables if v.kind == BINARY]

    # ---------- 约束 ----------
    def add_constr(
        self,
        terms: Mapping[int, float],
        sense: str,
        rhs: float,
        name: str = "",
    ) -> int:
        if sense not in (LE, GE, EQ):
            raise ValueError(f"unknown sense {sense!r}")
        merged: Dict[int, float] = {}
        for i, c in terms.items():
            if c != 0.0:
                merged[i] = merged.get(i, 0.0) + c
        self.constraints.append(LinearRow(merged, sense, float(rhs), name))
        return len(self.constraints) - 1

    def add_objective(self, terms: Mapping[int, float], constant: float = 0.0) -> None:
        """累加目标项（最小化）"""
        for i, c in terms.items():
            self.objective[i] = self.objective.get(i, 0.0) + c
        self.objective_constant += constant

    def add_cone(
        self,
        x: int,
        y: int,
        radius: Optional[Mapping[int, float]] = None,
        radius_const: float = 0.0,
        name: str = "",
    ) -> ConeTerm:
        cone = ConeTerm(x, y, dict(radius or {}), float(radius_const), name)
        self.cones.append(cone)
        return cone

    def add_epigraph(
        self,
        x: int,
        y: int,
        epi: int,
        hint_radius: Optional[float] = None,
        name: str = "",
    ) -> QuadEpigraph:
        term = QuadEpigraph(x, y, epi, hint_radius, name)
        self.epigraphs.append(term)
        return term

    @property
    def is_pure_milp(self) -> bool:
        return not self.cones and not self.epigraphs

    # ---------- 校验 ----------
    def validate(self) -> None:
        n = len(self.variables)

        def check(i: int, where: str):
            if not 0 <= i < n:
                raise ValueError(f"{where} references unknown variable {i}")

        for v in self.variables:
            if v.kind == BINARY and (v.lb < 0 or v.ub > 1):
                raise ValueError(f"binary {v.name} has bounds outside [0, 1]")
        for row in self.constraints:
            for i in row.terms:
                check(i, f"constraint {row.name or '?'}")
        for i in self.objective:
            check(i, "objective")
        for cone in self.cones:
            for i in (cone.x, cone.y, *cone.radius):
                check(i, f"cone {cone.name or '?'}")
        for term in self.epigraphs:
            for i in (term.x, term.y, term.epi):
                check(i, f"epigraph {term.name or '?'}")
            if self.objective.get(term.epi, 0.0) <= 0:
                raise ValueError(
                    f"epigraph {term.name or term.epi} needs a positive objective weight"
                )

    def copy(self) -> "MipModel":
        return copy.deepcopy(self)

    def value(self, values, name: str) -> float:
        return float(values[self.index[name]])

    def objective_value(self, values) -> float:
        return self.objective_constant + sum(
            c * values[i] for i, c in self.objective.items()
        )

    # ---------- LP 文件 ----------
    def to_lp(self, extra_rows: Iterable[LinearRow] = ()) -> str:
        """CPLEX LP 格式文本，用于调试；锥项以注释列出"""
        names = [_lp_name(v.name, v.index) for v in self.variables]

        def expr(terms: Mapping[int, float]) -> str:
            if not terms:
                return "0 " + names[0] if names else "0"
            parts = []
            for i, c in terms.items():
                sign = "-" if c < 0 else "+"
                parts.append(f"{sign} {abs(c):.12g} {names[i]}")
            text = " ".join(parts)
            return text[2:] if text.startswith("+ ") else text

        lines = [f"\\ model {self.name}"]
        for cone in self.cones:
            radius = " + ".join(f"{c:g} {names[i]}" for i, c in cone.radius.items())
            lines.append(
                f"\\ cone {cone.name}: {names[cone.x]}^2 + {names[cone.y]}^2 <= "
                f"({radius or 0} + {cone.radius_const:g})^2"
            )
        for term in self.epigraphs:
            lines.append(
                f"\\ epigraph {term.name}: {names[term.epi]} >= "
                f"{names[term.x]}^2 + {names[term.y]}^2"
            )
        lines.append("Minimize")
        obj = expr(self.objective) if self.objective else "0 " + names[0]
        if self.objective_constant:
            obj += f" + {self.objective_constant:.12g} obj_const"
        lines.append(f" obj: {obj}")
        lines.append("Subject To")
        rows = list(self.constraints) + list(extra_rows)
        for k, row in enumerate(rows):
            sense = {LE: "<=", GE: ">=", EQ: "="}[row.sense]
            lines.append(f" c{k}: {expr(row.terms)} {sense} {row.rhs:.12g}")
        lines.append("Bounds")
        for v, name in zip(self.variables, names):
            lb = "-inf" if v.lb == -INF else f"{v.lb:.12g}"
            ub = "+inf" if v.ub == INF else f"{v.ub:.12g}"
            lines.append(f" {lb} <= {name} <= {ub}")
        if self.objective_constant:
            lines.append(" obj_const = 1")
        binaries = [names[v.index] for v in self.variables if v.kind == BINARY]
        if binaries:
            lines.append("Binaries")
            for k in range(0, len(binaries), 8):
                lines.append(" " + " ".join(binaries[k : k + 8]))
        lines.append("End")
        return "\n".join(lines) + "\n"

    def dump(self, path: Union[str, Path], extra_rows: Iterable[LinearRow] = ()) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_lp(extra_rows), encoding="utf-8")
        return path

    def summary(self) -> Dict[str, int]:
        return {
            "variables": len(self.variables),
            "binaries": len(self.binaries),
            "constraints": len(self.constraints),
            "cones": len(self.cones),
            "epigraphs": len(self.epigraphs),
        }


def _lp_name(name: str, index: int) -> str:
    cleaned = "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in name)
    return f"{cleaned}_{index}" if cleaned else f"x{index}"
