"""Standard-form conic programs.

A program is ``minimize c@x + x@Q@x + offset`` subject to
``A@x + s == b`` with ``s`` in a product of cones.  The quadratic part is
optional and must be removed with :func:`reformulate_quadratic` before
calling the solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .cones import RSOC, Cone


@dataclass(frozen=True)
class ConicProgram:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: tuple
    Q: sp.csc_matrix | None = None
    offset: float = 0.0
    # columns appended by reformulation; solutions are truncated to n - aux
    aux: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m, n = self.A.shape
        if self.c.shape != (n,):
            raise ValueError(f"c has shape {self.c.shape}, expected ({n},)")
        if self.b.shape != (m,):
            raise ValueError(f"b has shape {self.b.shape}, expected ({m},)")
        total = sum(cone.dim for cone in self.cones)
        if total != m:
            raise ValueError(
                f"cone dimensions sum to {total} but A has {m} rows")
        if self.Q is not None and self.Q.shape != (n, n):
            raise ValueError("quadratic part has the wrong shape")

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def has_quadratic(self) -> bool:
        return self.Q is not None and self.Q.nnz > 0

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        val = float(self.c @ x) + self.offset
        if self.has_quadratic:
            val += float(x @ (self.Q @ x))
        return val


def make_program(c, A, b, cones, Q=None, offset=0.0, meta=None):
    """Build a :class:`ConicProgram` from loosely typed inputs."""
    A = sp.csc_matrix(A, dtype=float)
    if Q is not None:
        Q = sp.csc_matrix(Q, dtype=float)
    cones = tuple(c_ if isinstance(c_, Cone) else Cone(*c_) for c_ in cones)
    return ConicProgram(
        c=np.asarray(c, dtype=float).ravel(),
        A=A,
        b=np.asarray(b, dtype=float).ravel(),
        cones=cones,
        Q=Q,
        offset=float(offset),
        meta=dict(meta or {}),
    )


def _psd_factor(Q: sp.csc_matrix, cols: np.ndarray, tol: float = 1e-10):
    """Return ``L`` with ``Q[cols][:, cols] == L @ L.T``."""
    sub = Q[cols][:, cols].toarray()
    sub = 0.5 * (sub + sub.T)
    vals, vecs = np.linalg.eigh(sub)
    scale = max(1.0, float(np.abs(vals).max()))
    if vals.min() < -tol * scale:
        raise ValueError(
            f"quadratic objective is not PSD (min eigenvalue {vals.min():.3g})")
    keep = vals > tol * scale
    return vecs[:, keep] * np.sqrt(vals[keep])


def reformulate_quadratic(program: ConicProgram) -> ConicProgram:
    """Move the quadratic objective into rotated-cone epigraphs.

    For a diagonal quadratic part each term ``q*x_j**2`` gets its own
    epigraph variable ``t_j`` with ``2*t_j*(1/2) >= (sqrt(q)*x_j)**2``;
    otherwise one cone bounds ``x@Q@x`` through a factor of ``Q``.
    The returned program has a linear objective and ``aux`` extra trailing
    columns.
    """
    if not program.has_quadratic:
        return program
    Q = sp.csc_matrix(program.Q)
    asym = abs(Q - Q.T)
    if asym.nnz and asym.max() > 1e-12 * max(1.0, abs(Q).max()):
        raise ValueError("quadratic objective must be symmetric")
    n, m = program.n, program.m
    off = Q - sp.diags(Q.diagonal())
    off.eliminate_zeros()

    rows, cols, vals = [], [], []
    rhs = []
    cones = []
    n_new = 0

    def add_epigraph(zrows):
        # zrows: list of (col_indices, coefficients) for each z component
        nonlocal n_new
        t = n + n_new
        n_new += 1
        r0 = m + len(rhs)
        rows.append(r0)
        cols.append(t)
        vals.append(-1.0)
        rhs.extend([0.0, 0.5])
        for k, (zc, zv) in enumerate(zrows):
            r = r0 + 2 + k
            rows.extend([r] * len(zc))
            cols.extend(zc)
            vals.extend(-np.asarray(zv))
            rhs.append(0.0)
        cones.append(Cone(RSOC, 2 + len(zrows)))

    if off.nnz == 0:
        d = Q.diagonal()
        if np.any(d < 0):
            raise ValueError("quadratic objective is not PSD (negative diagonal)")
        for j in np.flatnonzero(d):
            add_epigraph([([j], [np.sqrt(d[j])])])
    else:
        support = np.unique(np.concatenate([Q.indices, np.flatnonzero(Q.diagonal())]))
        L = _psd_factor(Q, support)
        zrows = [(list(support), list(L[:, k])) for k in range(L.shape[1])]
        if zrows:
            add_epigraph(zrows)

    m_new = len(rhs)
    extra = sp.csc_matrix((vals, (rows, cols)), shape=(m + m_new, n + n_new))
    A = sp.vstack(
        [sp.hstack([program.A, sp.csc_matrix((m, n_new))]),
         sp.csc_matrix((m_new, n + n_new))], format="csc")
    A = (A + extra).tocsc()
    c = np.concatenate([program.c, np.ones(n_new)])
    b = np.concatenate([program.b, rhs])
    return replace(
        program, c=c, A=A, b=b, cones=tuple(program.cones) + tuple(cones),
        Q=None, aux=program.aux + n_new, meta=dict(program.meta))


def dump_program(program: ConicProgram, path) -> None:
    """Write ``program`` as a plain-text sparse-triplet file.

    Layout: a header ``n m nnz cone...``, then one ``row col value`` line
    per nonzero of ``A``, then ``b`` and ``c`` one value per line.
    """
    A = program.A.tocoo()
    with open(path, "w") as fh:
        cones = " ".join(str(c) for c in program.cones)
        fh.write(f"{program.n} {program.m} {A.nnz} {cones}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {float(v)!r}\n")
        for v in program.b:
            fh.write(f"{float(v)!r}\n")
        for v in program.c:
            fh.write(f"{float(v)!r}\n")


def load_program(path) -> ConicProgram:
    with open(path) as fh:
        header = fh.readline().split()
        n, m, nnz = (int(t) for t in header[:3])
        cones = [Cone.parse(t) for t in header[3:]]
        trip = [fh.readline().split() for _ in range(nnz)]
        b = [float(fh.readline()) for _ in range(m)]
        c = [float(fh.readline()) for _ in range(n)]
    if trip:
        i, j, v = zip(*trip)
        A = sp.csc_matrix(
            (np.array(v, float), (np.array(i, int), np.array(j, int))),
            shape=(m, n))
    else:
        A = sp.csc_matrix((m, n))
    return make_program(c, A, b, cones)
