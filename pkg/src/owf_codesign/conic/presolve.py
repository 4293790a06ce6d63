"""Fixed-column elimination for conic programs.

Columns pinned by singleton rows (an equality row, or a pair of opposite
inequality rows whose bounds meet) are substituted out before the
iterative solve.  This keeps pinned quantities exact, which matters when
branch-and-bound fixes binaries: the continuous variables gated by a
binary then come back as exact zeros instead of ``~1e-7`` noise.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cones import NONNEG, ZERO, Cone
from .program import ConicProgram


class PresolveInfeasible(Exception):
    pass


@dataclass
class Reduction:
    program: ConicProgram
    free_cols: np.ndarray
    keep_rows: np.ndarray
    fixed_cols: np.ndarray
    fixed_vals: np.ndarray
    # reverse-order justification stack: (col, kind, rows)
    stack: list


def _row_kinds(program):
    kinds = np.empty(program.m, dtype=object)
    start = 0
    for cone in program.cones:
        kinds[start:start + cone.dim] = cone.kind
        start += cone.dim
    return kinds


def presolve(program: ConicProgram, tol: float = 1e-9) -> Reduction:
    A = program.A
    csr = A.tocsr()
    csc = A.tocsc()
    m, n = A.shape
    kinds = _row_kinds(program)
    linear = (kinds == ZERO) | (kinds == NONNEG)

    b_eff = program.b.astype(float).copy()
    count = np.diff(csr.indptr).copy()
    fixed = np.zeros(n, dtype=bool)
    value = np.zeros(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    lo_row = np.full(n, -1)
    hi_row = np.full(n, -1)
    stack = []

    queue = deque(i for i in range(m) if linear[i] and count[i] == 1)

    def fix(j, v, kind, rows):
        fixed[j] = True
        value[j] = v
        stack.append((j, kind, rows))
        for p in range(csc.indptr[j], csc.indptr[j + 1]):
            i = csc.indices[p]
            b_eff[i] -= csc.data[p] * v
            count[i] -= 1
            if count[i] == 1 and linear[i]:
                queue.append(i)

    while queue:
        i = queue.popleft()
        if count[i] != 1:
            continue
        j, a = -1, 0.0
        for p in range(csr.indptr[i], csr.indptr[i + 1]):
            if not fixed[csr.indices[p]] and csr.data[p] != 0.0:
                j, a = csr.indices[p], csr.data[p]
                break
        if j < 0:
            continue
        bound = b_eff[i] / a
        if kinds[i] == ZERO:
            fix(j, bound, ZERO, (i,))
            continue
        if a > 0 and bound < hi[j]:
            hi[j], hi_row[j] = bound, i
        elif a < 0 and bound > lo[j]:
            lo[j], lo_row[j] = bound, i
        if np.isfinite(lo[j] + hi[j]) and lo[j] > hi[j] + tol * (1 + abs(hi[j])):
            raise PresolveInfeasible(
                f"column {j}: bounds [{lo[j]}, {hi[j]}] are empty")
        if np.isfinite(lo[j] + hi[j]) and lo[j] >= hi[j] - 1e-12 * (1 + abs(hi[j])):
            fix(j, 0.5 * (lo[j] + hi[j]), NONNEG, (lo_row[j], hi_row[j]))

    # rows left without free columns must already be satisfied
    empty = linear & (count == 0)
    for i in np.flatnonzero(empty):
        slack = tol * (1 + abs(program.b[i]))
        if kinds[i] == ZERO and abs(b_eff[i]) > slack:
            raise PresolveInfeasible(f"row {i}: equality residual {b_eff[i]:.3g}")
        if kinds[i] == NONNEG and b_eff[i] < -slack:
            raise PresolveInfeasible(f"row {i}: inequality violated by {-b_eff[i]:.3g}")

    keep_rows = np.flatnonzero(~empty)
    free_cols = np.flatnonzero(~fixed)
    fixed_cols = np.flatnonzero(fixed)

    cones = []
    start = 0
    for cone in program.cones:
        if cone.kind in (ZERO, NONNEG):
            kept = int((~empty[start:start + cone.dim]).sum())
            if kept:
                cones.append(Cone(cone.kind, kept))
        else:
            cones.append(cone)
        start += cone.dim

    reduced = ConicProgram(
        c=program.c[free_cols].copy(),
        A=sp.csc_matrix(csr[keep_rows][:, free_cols]),
        b=b_eff[keep_rows],
        cones=tuple(cones),
        offset=program.offset + float(program.c[fixed_cols] @ value[fixed_cols]),
    )
    return Reduction(reduced, free_cols, keep_rows, fixed_cols,
                     value[fixed_cols], stack)


def postsolve(program: ConicProgram, red: Reduction, x_red, y_red, s_red):
    """Map a reduced solution back to the full program.

    Duals of dropped rows are rebuilt in reverse fixing order so that the
    dual residual of every fixed column vanishes.
    """
    n, m = program.n, program.m
    x = np.zeros(n)
    x[red.free_cols] = x_red
    x[red.fixed_cols] = red.fixed_vals
    y = np.zeros(m)
    y[red.keep_rows] = y_red
    s = program.b - program.A @ x
    s[red.keep_rows] = s_red
    kinds = _row_kinds(program)
    dropped = np.ones(m, dtype=bool)
    dropped[red.keep_rows] = False
    s[dropped & (kinds == ZERO)] = 0.0
    s[dropped & (kinds == NONNEG)] = np.maximum(s[dropped & (kinds == NONNEG)], 0.0)

    csc = program.A.tocsc()
    for j, kind, rows in reversed(red.stack):
        sl = slice(csc.indptr[j], csc.indptr[j + 1])
        col_rows, col_vals = csc.indices[sl], csc.data[sl]
        r = program.c[j] + float(col_vals @ y[col_rows])
        if r == 0.0:
            continue
        for i in rows:
            if i < 0 or not dropped[i]:
                continue
            a = csc[i, j]
            if a == 0.0:
                continue
            yi = y[i] - r / a
            if kind == NONNEG and yi < 0:
                continue
            y[i] = yi
            break
    return x, y, s
