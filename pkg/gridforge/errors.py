"""
异常定义
求解状态（不可行 / 超时）在 SolveReport 中以状态返回，规划层再转换为这里的异常
"""

from typing import List, Optional


class GridforgeError(Exception):
    """所有 gridforge 异常的基类"""


class InputError(GridforgeError):
    """输入文件缺失或命令行参数错误"""


class CaseValidationError(GridforgeError):
    """案例文件校验失败，path 指向出错字段"""

    def __init__(self, path: str, message: str):
        self.path = path
        self.detail = message
        super().__init__(f"{path}: {message}" if path else message)


class FleetValidationError(GridforgeError):
    """车队数据不满足约束"""

    def __init__(self, vehicle_id: Optional[str], message: str):
        self.vehicle_id = vehicle_id
        prefix = f"vehicle {vehicle_id}: " if vehicle_id is not None else ""
        super().__init__(prefix + message)


class BackendUnavailableError(GridforgeError):
    """请求的 MILP 求解后端不可用"""


class InfeasibleError(GridforgeError):
    """模型不可行，hints 给出触发的约束族"""

    def __init__(self, message: str, hints: Optional[List[dict]] = None):
        self.hints = list(hints or [])
        super().__init__(message)


class SolverLimitError(GridforgeError):
    """达到时间或迭代上限且无可用解"""


class ConsistencyError(GridforgeError):
    """成本重算与求解目标不一致"""
