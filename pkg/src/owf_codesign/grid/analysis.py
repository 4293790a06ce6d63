"""Post-processing of solved co-design graphs.

Everything here works from an :class:`OperatingSolution`, i.e. from raw
variable values, and recomputes physics and objectives from the case data
rather than reusing the solver's bookkeeping.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..graph_model import IndexMap, Var
from .build import node_id
from .case import CaseData

INEXACT_TOL = 1e-5


@dataclass
class OperatingSolution:
    """Hourly operating point; arrays are indexed ``[hour, component]``.

    Network quantities are per unit.  Battery power is in MW, state of
    charge and sizes in MWh.
    """

    case: CaseData
    c_bus: np.ndarray  # AC voltage squares c_ii
    c_br: np.ndarray  # c_ij per AC branch
    s_br: np.ndarray  # s_ij per AC branch
    v_bus: np.ndarray  # DC voltage squares v_ii
    v_br: np.ndarray  # v_ij per DC branch
    pg: np.ndarray
    qg: np.ndarray
    p_conv: np.ndarray
    p_loss: np.ndarray
    p_dc: np.ndarray
    p_ch: np.ndarray
    p_dis: np.ndarray
    soc: np.ndarray
    z: np.ndarray
    sizes: np.ndarray
    objectives: tuple = (math.nan, math.nan)
    copies: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.c_bus.shape[0]


def extract_solution(case: CaseData, imap: IndexMap, x) -> OperatingSolution:
    """Read an :class:`OperatingSolution` out of a flattened column vector."""
    x = np.asarray(x, dtype=float)
    T = case.horizon
    base = case.mva_base

    def grab(kind, ids, name):
        return np.array([[imap.value(x, Var(node_id(kind, i, t), name)) for i in ids]
                         for t in range(1, T + 1)]).reshape(T, len(ids))

    ac_ids = [b.id for b in case.ac_buses]
    dc_ids = [b.id for b in case.dc_buses]
    acbr = list(range(1, len(case.ac_branches) + 1))
    dcbr = list(range(1, len(case.dc_branches) + 1))
    conv = [c.id for c in case.converters]
    bat = [b.id for b in case.batteries]
    pg = np.zeros((T, len(case.generators)))
    qg = np.zeros_like(pg)
    for k, g in enumerate(case.generators):
        pg[:, k] = grab("acbus", [g.bus], f"pg{k + 1}")[:, 0]
        qg[:, k] = grab("acbus", [g.bus], f"qg{k + 1}")[:, 0]
    sol = OperatingSolution(
        case=case,
        c_bus=grab("acbus", ac_ids, "c"),
        c_br=grab("acbr", acbr, "cij"),
        s_br=grab("acbr", acbr, "sij"),
        v_bus=grab("dcbus", dc_ids, "v"),
        v_br=grab("dcbr", dcbr, "vij"),
        pg=pg, qg=qg,
        p_conv=grab("conv", conv, "pconv"),
        p_loss=grab("conv", conv, "ploss"),
        p_dc=grab("conv", conv, "pdc"),
        p_ch=grab("bat", bat, "pch") * base,
        p_dis=grab("bat", bat, "pdis") * base,
        soc=grab("bat", bat, "soc") * base,
        z=grab("bat", bat, "z"),
        sizes=grab("bat", bat, "bs")[0] * base,
        copies={
            "acbr_cf": grab("acbr", acbr, "cf"), "acbr_ct": grab("acbr", acbr, "ct"),
            "dcbr_vf": grab("dcbr", dcbr, "vf"), "dcbr_vt": grab("dcbr", dcbr, "vt"),
            "conv_v": grab("conv", conv, "v"),
            "bat_bs": grab("bat", bat, "bs") * base,
        },
    )
    sol.objectives = evaluate_objectives(case, sol)
    return sol


def _check_dims(case: CaseData, sol: OperatingSolution):
    T = case.horizon
    expect = {
        "c_bus": len(case.ac_buses), "c_br": len(case.ac_branches),
        "s_br": len(case.ac_branches), "v_bus": len(case.dc_buses),
        "v_br": len(case.dc_branches), "pg": len(case.generators),
        "qg": len(case.generators), "p_conv": len(case.converters),
        "p_loss": len(case.converters), "p_dc": len(case.converters),
        "p_ch": len(case.batteries), "p_dis": len(case.batteries),
        "soc": len(case.batteries), "z": len(case.batteries),
    }
    for name, width in expect.items():
        shape = np.shape(getattr(sol, name))
        if shape != (T, width):
            raise ValueError(f"{name} has shape {shape}, expected {(T, width)}")
    if np.shape(sol.sizes) != (len(case.batteries),):
        raise ValueError("one battery size per battery expected")


def evaluate_objectives(case: CaseData, sol: OperatingSolution):
    """Total cost (currency) and total loss (MWh) recomputed from raw values."""
    _check_dims(case, sol)
    base = case.mva_base
    ff = np.asarray(case.schedule.fuel_cost)
    cost = 0.0
    for k, g in enumerate(case.generators):
        a, b, c0 = g.cost
        p = sol.pg[:, k] * base
        cost += float(ff @ (a * p ** 2 + b * p + c0))
    for k, bt in enumerate(case.batteries):
        cost += bt.install_cost * float(sol.sizes[k])
        cost += bt.operation_cost * float(np.sum(sol.p_ch[:, k] + sol.p_dis[:, k]))
    ac = case.ac_index()
    dc = case.dc_index()
    loss = 0.0
    for k, br in enumerate(case.ac_branches):
        ci, cj = sol.c_bus[:, ac[br.from_bus]], sol.c_bus[:, ac[br.to_bus]]
        loss += br.g * float(np.sum(ci + cj - 2 * sol.c_br[:, k]))
    for k, br in enumerate(case.dc_branches):
        vi, vj = sol.v_bus[:, dc[br.from_bus]], sol.v_bus[:, dc[br.to_bus]]
        loss += br.g * float(np.sum(vi + vj - 2 * sol.v_br[:, k]))
    loss += float(np.sum(sol.p_loss))
    return cost, loss * base


@dataclass
class VoltageProfile:
    magnitude: np.ndarray  # |V| per hour and AC bus
    angle: np.ndarray  # radians, slack bus at 0
    dc_magnitude: np.ndarray


@dataclass
class ExactnessReport:
    ac_gap: np.ndarray  # c_ii c_jj - c_ij^2 - s_ij^2, per hour and branch
    dc_gap: np.ndarray  # v_ii v_jj - v_ij^2
    cycle_mismatch: np.ndarray  # wrapped angle error on non-tree branches
    threshold: float = INEXACT_TOL

    @property
    def inexact_ac(self) -> np.ndarray:
        return np.argwhere(np.abs(self.ac_gap) > self.threshold)

    @property
    def inexact_dc(self) -> np.ndarray:
        return np.argwhere(np.abs(self.dc_gap) > self.threshold)

    @property
    def exact(self) -> bool:
        return (not len(self.inexact_ac) and not len(self.inexact_dc)
                and np.all(np.abs(self.cycle_mismatch) <= self.threshold))


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def recover_voltages(case: CaseData, sol: OperatingSolution, tol: float = 1e-7):
    """Invert the lifting: magnitudes, angles and a relaxation-exactness report.

    Angles are propagated from the slack bus along a breadth-first spanning
    tree using ``theta_j - theta_i = atan2(s_ij, c_ij)``; every branch off
    the tree contributes a cycle mismatch.
    """
    if np.any(sol.c_bus < -tol) or np.any(sol.v_bus < -tol):
        raise ValueError("negative voltage square beyond tolerance")
    ac = case.ac_index()
    dc = case.dc_index()
    T = sol.c_bus.shape[0]
    mag = np.sqrt(np.clip(sol.c_bus, 0.0, None))
    dc_mag = np.sqrt(np.clip(sol.v_bus, 0.0, None))

    adj = {b.id: [] for b in case.ac_buses}
    for k, br in enumerate(case.ac_branches):
        adj[br.from_bus].append((k, br.to_bus, 1.0))
        adj[br.to_bus].append((k, br.from_bus, -1.0))
    slack = case.slack_bus if case.slack_bus is not None else case.ac_buses[0].id
    # angle step along branch k from its from-bus (sign flips when reversed)
    step = np.arctan2(sol.s_br, sol.c_br)
    angle = np.zeros((T, len(case.ac_buses)))
    seen = {slack}
    tree = set()
    queue = deque([slack])
    while queue:
        i = queue.popleft()
        for k, j, sign in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            tree.add(k)
            angle[:, ac[j]] = angle[:, ac[i]] + sign * step[:, k]
            queue.append(j)
    off_tree = [k for k in range(len(case.ac_branches)) if k not in tree]
    mismatch = np.zeros((T, len(off_tree)))
    for col, k in enumerate(off_tree):
        br = case.ac_branches[k]
        diff = angle[:, ac[br.to_bus]] - angle[:, ac[br.from_bus]]
        mismatch[:, col] = _wrap(diff - step[:, k])

    ac_gap = np.zeros_like(sol.c_br)
    for k, br in enumerate(case.ac_branches):
        ci, cj = sol.c_bus[:, ac[br.from_bus]], sol.c_bus[:, ac[br.to_bus]]
        ac_gap[:, k] = ci * cj - sol.c_br[:, k] ** 2 - sol.s_br[:, k] ** 2
    dc_gap = np.zeros_like(sol.v_br)
    for k, br in enumerate(case.dc_branches):
        vi, vj = sol.v_bus[:, dc[br.from_bus]], sol.v_bus[:, dc[br.to_bus]]
        dc_gap[:, k] = vi * vj - sol.v_br[:, k] ** 2
    return VoltageProfile(mag, angle, dc_mag), ExactnessReport(ac_gap, dc_gap, mismatch)


def soc_trajectory(soc0, p_ch, p_dis, eta_ch, eta_dis) -> np.ndarray:
    """State of charge after each hour: ``SC_t = SC_{t-1} + eta_ch*Pch - eta_dis*Pdis``."""
    p_ch = np.asarray(p_ch, dtype=float)
    p_dis = np.asarray(p_dis, dtype=float)
    return soc0 + np.cumsum(eta_ch * p_ch - eta_dis * p_dis)


def battery_schedule(sol: OperatingSolution) -> list:
    """Hourly table per battery: ``(hour, net_mw, soc_mwh)`` rows.

    Net power is positive while charging.
    """
    out = []
    T = sol.p_ch.shape[0]
    for k, bt in enumerate(sol.case.batteries):
        net = sol.p_ch[:, k] - sol.p_dis[:, k]
        soc = sol.soc[:, k]
        out.append({
            "battery": bt.id,
            "size": float(sol.sizes[k]),
            "rows": [(t + 1, float(net[t]), float(soc[t])) for t in range(T)],
            "soc_model": soc_trajectory(bt.soc_init, sol.p_ch[:, k], sol.p_dis[:, k],
                                        bt.eta_ch, bt.eta_dis),
        })
    return out


def balance_residuals(case: CaseData, sol: OperatingSolution) -> dict:
    """Per-hour AC active/reactive and DC balance residuals (p.u.)."""
    T = sol.horizon
    base = case.mva_base
    ac = case.ac_index()
    dc = case.dc_index()
    nb, nd = len(case.ac_buses), len(case.dc_buses)
    lf = np.asarray(case.schedule.load)[:, None]
    wf = np.asarray(case.schedule.wind)

    p = np.zeros((T, nb))
    q = np.zeros((T, nb))
    for k, g in enumerate(case.generators):
        p[:, ac[g.bus]] += sol.pg[:, k]
        q[:, ac[g.bus]] += sol.qg[:, k]
    p -= lf * np.array([b.pd for b in case.ac_buses])
    q -= lf * np.array([b.qd for b in case.ac_buses])
    for k, cv in enumerate(case.converters):
        p[:, ac[cv.ac_bus]] += sol.p_conv[:, k]
    for k, bt in enumerate(case.batteries):
        p[:, ac[bt.bus]] += (sol.p_dis[:, k] - sol.p_ch[:, k]) / base

    # network flows from the bus admittance matrix in lifted variables
    for b in case.ac_buses:
        i = ac[b.id]
        p[:, i] -= b.gs * sol.c_bus[:, i]
        q[:, i] += b.bs * sol.c_bus[:, i]
    for k, br in enumerate(case.ac_branches):
        y = br.admittance
        g, bb = y.real, y.imag
        i, j = ac[br.from_bus], ac[br.to_bus]
        cij, sij = sol.c_br[:, k], sol.s_br[:, k]
        ci, cj = sol.c_bus[:, i], sol.c_bus[:, j]
        # flows out of each terminal
        p[:, i] -= g * ci - g * cij + bb * sij
        q[:, i] -= -(bb + br.b / 2) * ci + bb * cij + g * sij
        p[:, j] -= g * cj - g * cij - bb * sij
        q[:, j] -= -(bb + br.b / 2) * cj + bb * cij - g * sij

    pd = np.zeros((T, nd))
    for w in case.wind_farms:
        pd[:, dc[w.dc_bus]] += w.p_nom * wf / base
    for k, cv in enumerate(case.converters):
        pd[:, dc[cv.dc_bus]] -= sol.p_dc[:, k]
    for k, br in enumerate(case.dc_branches):
        i, j = dc[br.from_bus], dc[br.to_bus]
        vi, vj, vij = sol.v_bus[:, i], sol.v_bus[:, j], sol.v_br[:, k]
        pd[:, i] -= br.g * (vi - vij)
        pd[:, j] -= br.g * (vj - vij)
    conv = sol.p_conv + sol.p_loss - sol.p_dc
    return {"ac_p": p, "ac_q": q, "dc": pd, "converter": conv}


@dataclass
class PhysicsReport:
    balance: float
    loss_tightness: float
    exclusivity: float
    soc_violation: float
    soc_model_error: float
    terminal_violation: float
    voltage_violation: float
    droop_deviation: float
    cone_gaps: ExactnessReport

    def ok(self, balance_tol=1e-5, loss_tol=1e-5, soc_tol=1e-6, voltage_tol=1e-6,
           exclusivity_tol=None) -> bool:
        good = (self.balance <= balance_tol and self.loss_tightness <= loss_tol
                and self.soc_violation <= soc_tol and self.terminal_violation <= soc_tol
                and self.voltage_violation <= voltage_tol)
        if exclusivity_tol is not None:
            good = good and self.exclusivity <= exclusivity_tol
        return bool(good)

    def summary(self) -> dict:
        return {
            "max_balance_residual_pu": self.balance,
            "max_loss_epigraph_gap_pu": self.loss_tightness,
            "max_exclusivity_mw": self.exclusivity,
            "max_soc_violation_mwh": self.soc_violation,
            "max_soc_model_error_mwh": self.soc_model_error,
            "terminal_soc_violation_mwh": self.terminal_violation,
            "max_voltage_violation": self.voltage_violation,
            "max_droop_deviation": self.droop_deviation,
            "max_ac_cone_gap": float(np.abs(self.cone_gaps.ac_gap).max(initial=0.0)),
            "max_dc_cone_gap": float(np.abs(self.cone_gaps.dc_gap).max(initial=0.0)),
            "inexact_ac_branch_hours": int(len(self.cone_gaps.inexact_ac)),
        }


def physics_report(case: CaseData, sol: OperatingSolution) -> PhysicsReport:
    """Check balance, loss epigraph, battery and voltage invariants."""
    _check_dims(case, sol)
    res = balance_residuals(case, sol)
    balance = max(float(np.abs(v).max(initial=0.0)) for v in res.values())
    beta = np.array([cv.beta for cv in case.converters])
    tight = np.abs(sol.p_loss - beta * np.abs(sol.p_dc)).max(initial=0.0)
    excl = np.minimum(sol.p_ch, sol.p_dis).max(initial=0.0)
    soc_lo = (-sol.soc).max(initial=-np.inf)
    soc_hi = (sol.soc - sol.sizes[None, :]).max(initial=-np.inf)
    soc_violation = max(soc_lo, soc_hi, 0.0)
    model_err = 0.0
    term = 0.0
    for k, bt in enumerate(case.batteries):
        ref = soc_trajectory(bt.soc_init, sol.p_ch[:, k], sol.p_dis[:, k],
                             bt.eta_ch, bt.eta_dis)
        model_err = max(model_err, float(np.abs(ref - sol.soc[:, k]).max(initial=0.0)))
        term = max(term, bt.soc_final_min - float(sol.soc[-1, k]))
    vlo = np.array([b.vmin ** 2 for b in case.ac_buses])
    vhi = np.array([b.vmax ** 2 for b in case.ac_buses])
    dlo = np.array([b.vmin ** 2 for b in case.dc_buses])
    dhi = np.array([b.vmax ** 2 for b in case.dc_buses])
    volt = max(float((vlo - sol.c_bus).max()), float((sol.c_bus - vhi).max()),
               float((dlo - sol.v_bus).max()), float((sol.v_bus - dhi).max()), 0.0)
    dc = case.dc_index()
    droop = 0.0
    for k, cv in enumerate(case.converters):
        v = np.sqrt(np.clip(sol.v_bus[:, dc[cv.dc_bus]], 0.0, None))
        droop = max(droop, float(np.abs(cv.k * sol.p_conv[:, k] + cv.d - v).max()))
    _, gaps = recover_voltages(case, sol)
    return PhysicsReport(balance, float(tight), float(excl), float(soc_violation),
                         model_err, max(term, 0.0), volt, droop, gaps)
