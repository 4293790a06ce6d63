"""Co-design graph for the AC grid, MTDC network, converters and batteries.

One node per component per hour:

* AC bus -- lifted voltage square ``c``; generator outputs and fuel cost
* AC branch -- terminal copies ``cf, ct``, cross terms ``cij, sij``; the
  rotated cone ``cij^2 + sij^2 <= cf*ct`` and the branch loss
* DC bus -- ``v``
* DC branch -- ``vf, vt, vij``; ``vij^2 <= vf*vt`` and the line loss
* converter -- ``pconv, ploss, pdc`` and a copy of its DC bus ``v``; power
  balance, the loss epigraph pair and the droop cone
* battery -- size copy ``bs``, ``soc``, ``pch``, ``pdis`` and indicator ``z``

Links tie copies to their owners, enforce AC/DC bus power balance, and
couple consecutive hours (ramps, state of charge, constant size).

Battery quantities are modelled on the per-unit base (1 p.u. = 100 MW or
100 MWh for a 100 MVA base) and converted back to MW/MWh on extraction.
Objective 1 is total cost in currency units, objective 2 total loss in
MWh.
"""

from __future__ import annotations

import math

import numpy as np

from ..conic import RSOC
from ..graph_model import NodeModel, OptiGraph, Var
from .case import CaseData, CaseError

CODESIGN = "codesign"
FIXED = "fixed"

SQRT2 = math.sqrt(2.0)


def _check_weights(weights):
    w = np.asarray(weights, dtype=float)
    if w.shape != (2,) or np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights {tuple(w)} are not on the 2-simplex")
    return np.clip(w, 0.0, None)


def node_id(kind: str, index: int, hour: int) -> str:
    return f"h{hour}/{kind}{index}"


def effective_weights(case: CaseData, weights) -> np.ndarray:
    """Simplex weights divided by the case's objective scales."""
    w = _check_weights(weights)
    return w / np.asarray(case.objective_scales)


def _couple(graph: OptiGraph, con, label: str):
    """Add ``con`` as a link, or as a node constraint when it stays on one node."""
    owners = {v.node for v in con.vars()}
    if len(owners) == 1:
        graph.nodes[owners.pop()].add_constraint(con)
    else:
        graph.add_link(con, label)


def build_graph(case: CaseData, weights=(1.0, 0.0), mode: str = CODESIGN,
                sizes=None) -> OptiGraph:
    """Build the co-design graph.

    Parameters
    ----------
    case : CaseData
    weights : pair of floats on the simplex
        Objective weights; stored on the graph (after dividing by the case's
        objective scales) and used by ``flatten`` unless overridden.
    mode : {"codesign", "fixed"}
        In fixed mode every battery size is pinned to ``sizes`` (MWh).
    """
    w = _check_weights(weights)
    if mode not in (CODESIGN, FIXED):
        raise ValueError(f"unknown sizing mode {mode!r}")
    if mode == FIXED:
        if sizes is None:
            raise ValueError("fixed mode needs battery sizes")
        sizes = [float(s) for s in sizes]
        if len(sizes) != len(case.batteries):
            raise CaseError("one size per battery required")
        for bt, s in zip(case.batteries, sizes):
            if not bt.bs_min - 1e-9 <= s <= bt.bs_max + 1e-9:
                raise CaseError(
                    f"battery {bt.id}: size {s} outside [{bt.bs_min}, {bt.bs_max}]")
    T = case.horizon
    base = case.mva_base
    sched = case.schedule
    ac_pos = case.ac_index()
    dc_pos = case.dc_index()
    graph = OptiGraph(n_objectives=2, name=case.name)
    graph.weights = w / np.asarray(case.objective_scales)
    graph.meta = {"case": case, "mode": mode, "sizes": sizes, "simplex_weights": w}

    # admittance pieces: per branch series y and shunt b/2 on each end
    G_diag = np.zeros(len(case.ac_buses))
    B_diag = np.zeros(len(case.ac_buses))
    for bus in case.ac_buses:
        G_diag[ac_pos[bus.id]] += bus.gs
        B_diag[ac_pos[bus.id]] += bus.bs
    for br in case.ac_branches:
        y = br.admittance
        for end in (br.from_bus, br.to_bus):
            G_diag[ac_pos[end]] += y.real
            B_diag[ac_pos[end]] += y.imag + br.b / 2
    gdc_diag = np.zeros(len(case.dc_buses))
    for br in case.dc_branches:
        gdc_diag[dc_pos[br.from_bus]] += br.g
        gdc_diag[dc_pos[br.to_bus]] += br.g

    gens_at = {bus.id: [] for bus in case.ac_buses}
    for k, g in enumerate(case.generators):
        gens_at[g.bus].append(k)

    for t in range(1, T + 1):
        lf, wf, ff = sched.load[t - 1], sched.wind[t - 1], sched.fuel_cost[t - 1]
        bus_c = {}
        pg = {}
        qg = {}
        for i, bus in enumerate(case.ac_buses):
            nd = NodeModel(node_id("acbus", bus.id, t))
            bus_c[bus.id] = nd.add_variable("c", bus.vmin ** 2, bus.vmax ** 2)
            for k in gens_at[bus.id]:
                g = case.generators[k]
                pg[k] = nd.add_variable(f"pg{k + 1}", g.pmin, g.pmax)
                qg[k] = nd.add_variable(f"qg{k + 1}", g.qmin, g.qmax)
                a, b1, c0 = g.cost
                # P in MW = base * p
                nd.add_objective(1, (pg[k] * base).square(ff * a) + pg[k] * (ff * b1 * base) + ff * c0)
            graph.add_node(nd)

        # AC balance accumulators: bus id -> (p_expr, q_expr) of network injections
        p_net = {bus.id: G_diag[ac_pos[bus.id]] * bus_c[bus.id] for bus in case.ac_buses}
        q_net = {bus.id: -B_diag[ac_pos[bus.id]] * bus_c[bus.id] for bus in case.ac_buses}
        for k, br in enumerate(case.ac_branches):
            nd = NodeModel(node_id("acbr", k + 1, t))
            cf = nd.add_variable("cf")
            ct = nd.add_variable("ct")
            cij = nd.add_variable("cij")
            sij = nd.add_variable("sij")
            nd.add_cone(RSOC, cf, ct, SQRT2 * cij, SQRT2 * sij)
            nd.add_objective(2, (cf + ct - 2 * cij) * (br.g * base))
            graph.add_node(nd)
            graph.add_link(cf.eq(bus_c[br.from_bus]), f"tie {nd.id} cf")
            graph.add_link(ct.eq(bus_c[br.to_bus]), f"tie {nd.id} ct")
            y = br.admittance
            Gij, Bij = -y.real, -y.imag
            i, j = br.from_bus, br.to_bus
            # from side uses (cij, sij); to side (cji, sji) = (cij, -sij)
            p_net[i] = p_net[i] + Gij * cij - Bij * sij
            q_net[i] = q_net[i] - (Gij * sij + Bij * cij)
            p_net[j] = p_net[j] + Gij * cij + Bij * sij
            q_net[j] = q_net[j] - (-Gij * sij + Bij * cij)

        dc_v = {}
        for bus in case.dc_buses:
            nd = NodeModel(node_id("dcbus", bus.id, t))
            dc_v[bus.id] = nd.add_variable("v", bus.vmin ** 2, bus.vmax ** 2)
            graph.add_node(nd)
        dc_net = {bus.id: gdc_diag[dc_pos[bus.id]] * dc_v[bus.id] for bus in case.dc_buses}
        for k, br in enumerate(case.dc_branches):
            nd = NodeModel(node_id("dcbr", k + 1, t))
            vf = nd.add_variable("vf")
            vt = nd.add_variable("vt")
            vij = nd.add_variable("vij")
            nd.add_cone(RSOC, vf, vt, SQRT2 * vij)
            nd.add_objective(2, (vf + vt - 2 * vij) * (br.g * base))
            graph.add_node(nd)
            graph.add_link(vf.eq(dc_v[br.from_bus]), f"tie {nd.id} vf")
            graph.add_link(vt.eq(dc_v[br.to_bus]), f"tie {nd.id} vt")
            dc_net[br.from_bus] = dc_net[br.from_bus] - br.g * vij
            dc_net[br.to_bus] = dc_net[br.to_bus] - br.g * vij

        ac_inj = {bus.id: 0.0 for bus in case.ac_buses}
        dc_inj = {bus.id: 0.0 for bus in case.dc_buses}
        for wfarm in case.wind_farms:
            dc_inj[wfarm.dc_bus] = dc_inj[wfarm.dc_bus] + wfarm.p_nom * wf / base
        for k, cv in enumerate(case.converters):
            nd = NodeModel(node_id("conv", cv.id, t))
            pconv = nd.add_variable("pconv")
            ploss = nd.add_variable("ploss")
            pdc = nd.add_variable("pdc")
            vdc = nd.add_variable("v")
            nd.add_constraint((pconv + ploss).eq(pdc))
            nd.add_constraint(ploss >= cv.beta * pdc)
            nd.add_constraint(ploss >= -cv.beta * pdc)
            nd.add_cone(RSOC, vdc, 0.5, cv.k * pconv + cv.d)
            nd.add_objective(2, ploss * base)
            graph.add_node(nd)
            graph.add_link(vdc.eq(dc_v[cv.dc_bus]), f"tie {nd.id} v")
            ac_inj[cv.ac_bus] = ac_inj[cv.ac_bus] + pconv
            dc_inj[cv.dc_bus] = dc_inj[cv.dc_bus] - pdc

        for k, bt in enumerate(case.batteries):
            nd = NodeModel(node_id("bat", bt.id, t))
            if mode == FIXED:
                lo = hi = sizes[k] / base
            else:
                lo, hi = bt.bs_min / base, bt.bs_max / base
            bs = nd.add_variable("bs", lo, hi)
            soc_lo = bt.soc_final_min / base if t == T else 0.0
            soc = nd.add_variable("soc", soc_lo)
            pch = nd.add_variable("pch", 0.0, bt.p_ch_max / base)
            pdis = nd.add_variable("pdis", 0.0, bt.p_dis_max / base)
            z = nd.add_variable("z", binary=True)
            nd.add_constraint(pch <= (bt.p_ch_max / base) * z)
            nd.add_constraint(pdis <= (bt.p_dis_max / base) * (1 - z))
            nd.add_constraint(soc <= bs)
            if t == 1:
                nd.add_constraint((soc - bt.soc_init / base).eq(bt.eta_ch * pch - bt.eta_dis * pdis))
                nd.add_objective(1, bs * (bt.install_cost * base))
            nd.add_objective(1, (pch + pdis) * (bt.operation_cost * base))
            graph.add_node(nd)
            ac_inj[bt.bus] = ac_inj[bt.bus] - pch + pdis
            if t > 1:
                prev = Var(node_id("bat", bt.id, t - 1), "soc")
                graph.add_link((soc - prev).eq(bt.eta_ch * pch - bt.eta_dis * pdis),
                               f"soc {nd.id}")
                if mode == CODESIGN:
                    graph.add_link(bs.eq(Var(node_id("bat", bt.id, t - 1), "bs")),
                                   f"size {nd.id}")

        for bus in case.ac_buses:
            gen_p = sum((pg[k] for k in gens_at[bus.id]), 0.0)
            gen_q = sum((qg[k] for k in gens_at[bus.id]), 0.0)
            lhs_p = gen_p - bus.pd * lf + ac_inj[bus.id]
            lhs_q = gen_q - bus.qd * lf
            _couple(graph, (lhs_p - p_net[bus.id]).eq(0.0), f"pbal h{t}/acbus{bus.id}")
            _couple(graph, (lhs_q - q_net[bus.id]).eq(0.0), f"qbal h{t}/acbus{bus.id}")
        for bus in case.dc_buses:
            _couple(graph, (dc_inj[bus.id] - dc_net[bus.id]).eq(0.0),
                    f"dcbal h{t}/dcbus{bus.id}")

        if t > 1:
            for k, g in enumerate(case.generators):
                prev = node_id("acbus", g.bus, t - 1)
                dp = pg[k] - Var(prev, f"pg{k + 1}")
                dq = qg[k] - Var(prev, f"qg{k + 1}")
                graph.add_link(dp <= g.ramp_p_up, f"ramp+ P gen{k + 1} h{t}")
                graph.add_link(dp >= -g.ramp_p_down, f"ramp- P gen{k + 1} h{t}")
                graph.add_link(dq <= g.ramp_q_up, f"ramp+ Q gen{k + 1} h{t}")
                graph.add_link(dq >= -g.ramp_q_down, f"ramp- Q gen{k + 1} h{t}")

    graph.meta["binary_order"] = [
        Var(node_id("bat", bt.id, t), "z")
        for bt in case.batteries for t in range(1, T + 1)]
    return graph
