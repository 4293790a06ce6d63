import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from owf_codesign.grid.build import build_graph  # noqa: E402
from owf_codesign.grid.case import (case_from_dict, load_shipped_case,  # noqa: E402
                                    truncate_horizon)
from owf_codesign.mib_search import branch_and_bound  # noqa: E402


@lru_cache(maxsize=None)
def shipped():
    return load_shipped_case()


@lru_cache(maxsize=None)
def bnb_solution(weights=(1.0, 0.0), mode="codesign", sizes=None):
    """Cached branch-and-bound solve of the shipped case."""
    case = shipped()
    return branch_and_bound(build_graph(case, weights, mode=mode, sizes=sizes))


def reduced_case(hours=2):
    return truncate_horizon(shipped(), hours)


def single_bus_dict():
    return {
        "name": "one-bus",
        "mva_base": 100.0,
        "horizon": 2,
        "ac_buses": [{"id": 1, "vmin": 0.95, "vmax": 1.05, "pd": 0.0, "qd": 0.0}],
        "ac_branches": [],
        "generators": [{"bus": 1, "pmin": 0.0, "pmax": 1.0, "qmin": -1.0, "qmax": 1.0,
                        "ramp_p_up": 1.0, "ramp_p_down": 1.0, "ramp_q_up": 1.0,
                        "ramp_q_down": 1.0, "cost": [0.1, 5.0, 0.0]}],
        "dc_buses": [], "dc_branches": [], "converters": [],
        "batteries": [{"id": 1, "bus": 1, "bs_min": 20.0, "bs_max": 40.0,
                       "p_ch_max": 10.0, "p_dis_max": 10.0, "eta_ch": 0.8,
                       "eta_dis": 1.1, "soc_init": 10.0, "soc_final_min": 10.0,
                       "install_cost": 2.0, "operation_cost": 1.0}],
        "wind_farms": [],
        "schedule": {"load": [1.0, 1.0], "wind": [1.0, 1.0], "fuel_cost": [1.0, 1.0]},
    }


@pytest.fixture
def case():
    return shipped()


@pytest.fixture
def single_bus():
    return case_from_dict(single_bus_dict())


def zero_solution(case, **overrides):
    """Flat-voltage, zero-power operating point; ``overrides`` replace arrays."""
    import numpy as np

    from owf_codesign.grid.analysis import OperatingSolution

    T = case.horizon
    nb, nbr = len(case.ac_buses), len(case.ac_branches)
    nd, ndbr = len(case.dc_buses), len(case.dc_branches)
    ng, nc, nbt = len(case.generators), len(case.converters), len(case.batteries)
    fields = dict(
        c_bus=np.ones((T, nb)), c_br=np.ones((T, nbr)), s_br=np.zeros((T, nbr)),
        v_bus=np.ones((T, nd)), v_br=np.ones((T, ndbr)),
        pg=np.zeros((T, ng)), qg=np.zeros((T, ng)),
        p_conv=np.zeros((T, nc)), p_loss=np.zeros((T, nc)), p_dc=np.zeros((T, nc)),
        p_ch=np.zeros((T, nbt)), p_dis=np.zeros((T, nbt)),
        soc=np.tile([bt.soc_init for bt in case.batteries], (T, 1)).reshape(T, nbt),
        z=np.zeros((T, nbt)),
        sizes=np.array([bt.bs_min for bt in case.batteries]),
    )
    fields.update(overrides)
    return OperatingSolution(case=case, **fields)


ACCEPTANCE_LINES = []


def verdict(number, ok, detail):
    """Record and print one acceptance line, then assert it."""
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
