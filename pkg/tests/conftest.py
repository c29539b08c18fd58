import json

import pytest

from gridforge.backend_manager import SolveLimits
from gridforge.case_loader import bundled_case, case_from_dict, dump_case
from gridforge.models import Aev, AevFleet


@pytest.fixture
def star4():
    return bundled_case("star4")


@pytest.fixture
def demo6():
    return bundled_case("demo6")


@pytest.fixture
def stressed6():
    return bundled_case("stressed6")


@pytest.fixture(scope="session")
def star4_dgr():
    """star4 加上全部四类资源候选，并启用 OLTC"""
    data = json.loads(dump_case(bundled_case("star4")))
    nodes = {n["id"]: n for n in data["nodes"]}
    nodes[3]["dgr"] = {
        "ess": {"e_max_kwh": 100, "e_min_kwh": 10, "p_ch_max_kw": 40, "p_dis_max_kw": 40},
        "svc": {"q_min_kvar": -20, "q_max_kvar": 60},
    }
    nodes[4]["dgr"] = {
        "pv": {"p_max_kw": [0, 20, 40, 10]},
        "cb": {"bank_kvar": 10, "banks": 3, "max_switches": 2},
    }
    data["oltc"] = {"enabled": True, "steps": 4, "max_switches": 1}
    return case_from_dict(data)


@pytest.fixture
def limits():
    return SolveLimits(gap=1e-6, time_limit=120.0)


def make_vehicle(vid="ev1", arrive=1, depart=4, e0=30.0, e_target=50.0,
                 e_min=10.0, e_max=60.0, p_max=12.0, region="office", p_dis=None):
    return Aev(
        id=vid,
        arrive=arrive,
        depart=depart,
        e0=e0,
        e_target=e_target,
        e_min=e_min,
        e_max=e_max,
        p_ch_max=p_max,
        p_dis_max=p_max if p_dis is None else p_dis,
        region=region,
    )


@pytest.fixture
def vehicle_factory():
    return make_vehicle


@pytest.fixture
def office_fleet():
    return AevFleet((make_vehicle("ev1", 1, 3, 20.0, 40.0), make_vehicle("ev2", 2, 4, 30.0, 50.0)))
