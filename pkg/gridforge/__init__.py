"""gridforge: V2G 充电站、线路与分布式调节资源联合规划"""

import logging

from .errors import (
    BackendUnavailableError,
    CaseValidationError,
    ConsistencyError,
    FleetValidationError,
    GridforgeError,
    InfeasibleError,
    InputError,
    SolverLimitError,
)

__version__ = "0.1.0"

logging.getLogger("gridforge").addHandler(logging.NullHandler())

__all__ = [
    "BackendUnavailableError",
    "CaseValidationError",
    "ConsistencyError",
    "FleetValidationError",
    "GridforgeError",
    "InfeasibleError",
    "InputError",
    "SolverLimitError",
    "__version__",
]
