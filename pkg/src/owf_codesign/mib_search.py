"""Branch-and-bound over conic relaxations for the binary variables of a graph.

Binaries are relaxed to ``[0, 1]`` (their variable bounds) in every node
relaxation.  A node fixes a subset of them through appended equality rows;
the solver's presolve then substitutes the fixed columns out, so continuous
variables gated by a fixed binary come back as exact zeros.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .conic import (INFEASIBLE, OPTIMAL, ZERO, Cone, ConicProgram, SolverConfig,
                    reformulate_quadratic, solve)
from .graph_model import IndexMap, OptiGraph, flatten

log = logging.getLogger(__name__)

# result statuses
BNB_OPTIMAL = "optimal"
GAP_NOT_CLOSED = "gap-not-closed"
NO_INCUMBENT = "no-incumbent"
BNB_INFEASIBLE = "infeasible"

INTEGRAL_TOL = 1e-6


def default_solver() -> SolverConfig:
    return SolverConfig(method="interior")


@dataclass(frozen=True)
class BnBConfig:
    abs_gap: float = 1e-4
    node_limit: int = 10_000
    branching: str = "most-fractional"
    order: str = "best-first"
    solver: SolverConfig = field(default_factory=default_solver)
    polish_tol: float | None = 1e-8  # re-solve the incumbent's leaf this tightly

    def __post_init__(self):
        if not self.abs_gap > 0:
            raise ValueError("gap tolerance must be positive")
        if self.polish_tol is not None and not self.polish_tol > 0:
            raise ValueError("polish tolerance must be positive")
        if self.node_limit < 1:
            raise ValueError("node limit must be at least 1")
        if self.branching != "most-fractional":
            raise ValueError(f"unsupported branching rule {self.branching!r}")
        if self.order != "best-first":
            raise ValueError(f"unsupported search order {self.order!r}")


@dataclass
class MIBResult:
    """Outcome of a relaxed, branch-and-bound or enumeration solve.

    ``x`` is indexed like the graph's flattened columns.  ``objective`` is
    the scalarized (weighted) objective and ``objective_values`` the raw
    per-objective values at ``x``.
    """

    status: str
    x: np.ndarray
    objective: float
    objective_values: np.ndarray
    imap: IndexMap
    bound: float = -math.inf
    nodes: int = 0
    solves: int = 0
    fractionality: float = 0.0
    root_objective: float = math.nan
    trace: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        if not np.isfinite(self.objective):
            return math.inf
        return max(self.objective - self.bound, 0.0)

    @property
    def ok(self) -> bool:
        return self.status in (BNB_OPTIMAL, GAP_NOT_CLOSED) and np.all(np.isfinite(self.x))

    def binary_values(self) -> np.ndarray:
        return self.x[self.imap.binaries]


class _Problem:
    """Flattened graph plus a cache-free way to solve it under fixings."""

    def __init__(self, graph: OptiGraph, weights, solver: SolverConfig):
        program, imap = flatten(graph, weights)
        self.imap = imap
        self.base = reformulate_quadratic(program)
        self.solver = solver
        self.order = _binary_order(graph, imap)
        self.solves = 0

    def fixed(self, fixings: dict) -> ConicProgram:
        return fix_columns(self.base, list(fixings), list(fixings.values()))

    def solve(self, fixings: dict):
        self.solves += 1
        sol = solve(self.fixed(fixings), self.solver)
        return sol

    def result(self, status, sol, **kw) -> MIBResult:
        n = len(self.imap.columns)
        if sol is None or not np.all(np.isfinite(sol.x)):
            x = np.full(n, np.nan)
            return MIBResult(status, x, math.inf, np.full(self.imap.n_objectives, np.nan),
                             self.imap, solves=self.solves, **kw)
        x = sol.x[:n].copy()
        return MIBResult(status, x, float(sol.objective), self.imap.objective_values(x),
                         self.imap, solves=self.solves, **kw)


def _binary_order(graph: OptiGraph, imap: IndexMap) -> np.ndarray:
    """Binary columns in tie-breaking order (graph-declared if available)."""
    declared = graph.meta.get("binary_order")
    if declared:
        cols = [imap.col(v) for v in declared]
        rest = [j for j in imap.binaries if j not in set(cols)]
        return np.array(cols + rest, dtype=int)
    return np.asarray(imap.binaries, dtype=int)


def fix_columns(program: ConicProgram, cols, values) -> ConicProgram:
    """Copy of ``program`` with ``x[cols] == values`` prepended as equality rows."""
    if len(cols) == 0:
        return program
    cols = np.asarray(cols, dtype=int)
    k = len(cols)
    F = sp.csc_matrix((np.ones(k), (np.arange(k), cols)), shape=(k, program.n))
    return ConicProgram(
        c=program.c, A=sp.vstack([F, program.A], format="csc"),
        b=np.concatenate([np.asarray(values, dtype=float), program.b]),
        cones=(Cone(ZERO, k),) + tuple(program.cones), Q=program.Q,
        offset=program.offset, aux=program.aux, meta=dict(program.meta))


def _most_fractional(x, order):
    z = x[order]
    frac = np.minimum(z, 1 - z)
    k = int(np.argmax(frac))  # first maximum wins: ties follow ``order``
    return int(order[k]), float(frac[k])


def solve_relaxed(graph: OptiGraph, weights=None,
                  solver: SolverConfig | None = None) -> MIBResult:
    """Solve the continuous relaxation (binaries within their ``[0, 1]`` bounds).

    The result's ``fractionality`` is the largest ``min(z, 1 - z)`` over the
    binary columns.
    """
    prob = _Problem(graph, weights, solver or default_solver())
    sol = prob.solve({})
    if sol.status != OPTIMAL:
        status = BNB_INFEASIBLE if sol.status == INFEASIBLE else sol.status
        return prob.result(status, None, info={"solver_status": sol.status})
    res = prob.result(BNB_OPTIMAL, sol, bound=float(sol.objective), nodes=1)
    res.root_objective = res.objective
    if len(prob.order):
        res.fractionality = _most_fractional(sol.x, prob.order)[1]
    return res


def branch_and_bound(graph: OptiGraph, weights=None,
                     config: BnBConfig | None = None) -> MIBResult:
    """Best-first branch-and-bound on the graph's binary columns.

    Returns status ``optimal`` once the incumbent is within ``abs_gap`` of
    the best open bound, ``gap-not-closed`` when the node limit stops the
    search with an incumbent, ``no-incumbent`` when it stops without one,
    and ``infeasible`` when every branch is infeasible.
    """
    config = config or BnBConfig()
    prob = _Problem(graph, weights, config.solver)
    order = prob.order
    best = None  # (objective, Solution, fixings)
    trace = []

    def integral_solve(fixings, parent_value):
        nonlocal best
        sol = prob.solve(fixings)
        if sol.status != OPTIMAL:
            return None
        trace.append({"fixings": len(fixings), "parent": parent_value,
                      "value": float(sol.objective), "integral": True})
        if best is None or sol.objective < best[0]:
            best = (float(sol.objective), sol, dict(fixings))
        return sol

    def rounded(x, fixings):
        out = dict(fixings)
        for j in order:
            out.setdefault(int(j), float(round(min(max(x[j], 0.0), 1.0))))
        return out

    root = prob.solve({})
    nodes = 1
    if root.status != OPTIMAL:
        status = BNB_INFEASIBLE if root.status == INFEASIBLE else NO_INCUMBENT
        return prob.result(status, None, nodes=nodes, trace=trace,
                           info={"solver_status": root.status})
    root_value = float(root.objective)
    trace.append({"fixings": 0, "parent": None, "value": root_value, "integral": False})
    root_frac = _most_fractional(root.x, order)[1] if len(order) else 0.0

    if len(order) == 0:
        best = (root_value, root, {})
        heap = []
    else:
        # incumbent seed: round the root relaxation and re-solve
        integral_solve(rounded(root.x, {}), root_value)
        heap = [(root_value, 0, {}, root)]
    counter = itertools.count(1)
    pruned_bound = math.inf

    while heap:
        bound, _, fixings, sol = heapq.heappop(heap)
        if best is not None and bound >= best[0] - config.abs_gap:
            # best-first: every open node is at least this bound
            pruned_bound = bound
            heap.clear()
            break
        j, frac = _most_fractional(sol.x, order)
        if frac <= INTEGRAL_TOL:
            integral_solve(rounded(sol.x, fixings), float(sol.objective))
            continue
        stopped = False
        for val in (round(sol.x[j]), 1 - round(sol.x[j])):
            if nodes >= config.node_limit:
                heapq.heappush(heap, (bound, next(counter), fixings, sol))
                stopped = True
                break
            child = dict(fixings)
            child[j] = float(val)
            csol = prob.solve(child)
            nodes += 1
            if csol.status != OPTIMAL:
                continue
            value = float(csol.objective)
            trace.append({"fixings": len(child), "parent": float(sol.objective),
                          "value": value, "integral": False})
            if best is not None and value >= best[0] - config.abs_gap:
                continue
            heapq.heappush(heap, (value, next(counter), child, csol))
        if stopped:
            break

    open_bound = min((h[0] for h in heap), default=pruned_bound)
    kw = dict(nodes=nodes, trace=trace, fractionality=root_frac,
              root_objective=root_value)
    if best is None:
        status = NO_INCUMBENT if heap else BNB_INFEASIBLE
        return prob.result(status, None, bound=open_bound, **kw)
    bound = min(open_bound, best[0])
    status = BNB_OPTIMAL if best[0] - bound <= config.abs_gap else GAP_NOT_CLOSED
    final, polished = best[1], False
    if config.polish_tol is not None:
        # a tighter leaf solve sharpens the continuous part; kept only if it succeeds
        tight = replace(config.solver, eps_primal=config.polish_tol,
                        eps_dual=config.polish_tol, eps_gap=config.polish_tol)
        prob.solves += 1
        sol = solve(prob.fixed(best[2]), tight)
        if sol.status == OPTIMAL and abs(sol.objective - best[0]) <= config.abs_gap:
            final, polished = sol, True
    res = prob.result(status, final, bound=bound, **kw)
    res.info["fixings"] = best[2]
    res.info["polished"] = polished
    log.debug("branch_and_bound: %s obj=%.8g nodes=%d solves=%d", status,
              res.objective, nodes, prob.solves)
    return res


def enumerate_exact(graph: OptiGraph, weights=None, limit: int = 256,
                    solver: SolverConfig | None = None) -> MIBResult:
    """Solve every binary assignment and return the best feasible one.

    Raises ``ValueError`` when ``2**B`` exceeds ``limit``.
    """
    prob = _Problem(graph, weights, solver or default_solver())
    cols = [int(j) for j in prob.order]
    total = 2 ** len(cols)
    if total > limit:
        raise ValueError(f"{len(cols)} binaries need {total} solves; limit is {limit}")
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=len(cols)):
        sol = prob.solve(dict(zip(cols, bits)))
        if sol.status == OPTIMAL and (best is None or sol.objective < best.objective):
            best = sol
    if best is None:
        return prob.result(BNB_INFEASIBLE, None, nodes=total)
    return prob.result(BNB_OPTIMAL, best, bound=float(best.objective), nodes=total)
