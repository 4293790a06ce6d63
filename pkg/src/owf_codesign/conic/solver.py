"""Operator-splitting conic solver on the homogeneous self-dual embedding.

``method="interior"`` routes the same program through an interior-point
solver instead (see :mod:`.interior`); everything around the iteration
(presolve, postsolve and the final residual check) is shared.

The iteration is the classic splitting-conic-solver scheme: one
quasi-definite KKT factorization is computed up front and reused for the
linear step of every iteration, followed by a projection onto
``R^n x K* x R_+``.  Primal/dual residuals and the duality gap are
monitored on the *unscaled* data.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ProductCone
from .interior import interior_solve
from .presolve import PresolveInfeasible, postsolve, presolve
from .program import ConicProgram

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITERATIONS = "max-iterations"
INFEASIBLE = "infeasible-detected"
UNBOUNDED = "unbounded-detected"


METHODS = ("admm", "interior")


class SolverError(RuntimeError):
    """Raised when the linear system cannot be factorized."""


@dataclass(frozen=True)
class SolverConfig:
    eps_primal: float = 1e-6
    eps_dual: float = 1e-6
    eps_gap: float = 1e-6
    max_iter: int = 100_000
    alpha: float = 1.6
    scale: bool = True
    equil_rounds: int = 10
    eps_infeasible: float = 1e-7
    check_every: int = 10
    presolve: bool = True
    anderson: int = 8
    method: str = "admm"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        for name in ("eps_primal", "eps_dual", "eps_gap", "eps_infeasible"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.alpha < 2:
            raise ValueError("over-relaxation parameter must lie in (0, 2)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    @classmethod
    def with_tol(cls, tol: float, **kw) -> "SolverConfig":
        return cls(eps_primal=tol, eps_dual=tol, eps_gap=tol, **kw)


@dataclass
class Solution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: str
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    gap: float = np.inf
    iterations: int = 0
    objective: float = np.nan
    solve_time: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def residuals(program: ConicProgram, solution=None, *, x=None, y=None, s=None):
    """Relative primal residual, dual residual and duality gap.

    ``||Ax+s-b|| / (1+||b||)``, ``||A'y+c|| / (1+||c||)`` and
    ``|c'x+b'y| / (1+|c'x|+|b'y|)``, all in the infinity norm.
    """
    if solution is not None:
        x, y, s = solution.x, solution.y, solution.s
    x, y, s = (np.asarray(v, dtype=float) for v in (x, y, s))
    if x.shape != (program.n,) or y.shape != (program.m,) or s.shape != (program.m,):
        raise ValueError("solution vectors do not match the program dimensions")
    A, b, c = program.A, program.b, program.c
    nb = np.abs(b).max(initial=0.0)
    nc = np.abs(c).max(initial=0.0)
    pres = np.abs(A @ x + s - b).max(initial=0.0) / (1 + nb)
    dres = np.abs(A.T @ y + c).max(initial=0.0) / (1 + nc)
    cx, by = float(c @ x), float(b @ y)
    gap = abs(cx + by) / (1 + abs(cx) + abs(by))
    return float(pres), float(dres), float(gap)


def _equilibrate(A, pcone, rounds):
    """Ruiz scaling with shared factors inside each non-separable cone."""
    m, n = A.shape
    d = np.ones(m)
    e = np.ones(n)
    groups = [g for g in pcone.block_index() if g.size > 1]
    M = sp.csr_matrix(A)
    for _ in range(rounds):
        absM = abs(M)
        rn = absM.max(axis=1).toarray().ravel()
        for g in groups:
            rn[g] = rn[g].max()
        rn = np.where(rn > 0, rn, 1.0)
        cn = absM.max(axis=0).toarray().ravel()
        cn = np.where(cn > 0, cn, 1.0)
        dr = np.clip(1 / np.sqrt(rn), 1e-4, 1e4)
        dc = np.clip(1 / np.sqrt(cn), 1e-4, 1e4)
        d *= dr
        e *= dc
        M = sp.diags(dr) @ M @ sp.diags(dc)
    return d, e, sp.csc_matrix(M)


class _Anderson:
    """Type-II Anderson acceleration on the fixed-point map ``z -> T(z)``."""

    def __init__(self, mem):
        self.mem = mem
        self.dG = []
        self.dF = []
        self.prev_g = None
        self.prev_f = None

    def reset(self):
        self.dG.clear()
        self.dF.clear()
        self.prev_g = self.prev_f = None

    def step(self, z, g):
        f = g - z
        if self.prev_g is not None:
            self.dG.append(g - self.prev_g)
            self.dF.append(f - self.prev_f)
            if len(self.dG) > self.mem:
                self.dG.pop(0)
                self.dF.pop(0)
        self.prev_g, self.prev_f = g, f
        if not self.dF:
            return g
        F = np.column_stack(self.dF)
        G = np.column_stack(self.dG)
        gamma, *_ = np.linalg.lstsq(F, f, rcond=None)
        return g - G @ gamma


class _Embedding:
    def __init__(self, program: ConicProgram, config: SolverConfig):
        self.config = config
        self.program = program
        A = program.A
        m, n = A.shape
        self.m, self.n = m, n
        self.pcone = ProductCone(program.cones)
        if config.scale and config.equil_rounds > 0:
            self.d, self.e, As = _equilibrate(A, self.pcone, config.equil_rounds)
        else:
            self.d, self.e, As = np.ones(m), np.ones(n), sp.csc_matrix(A)
        bh = self.d * program.b
        ch = self.e * program.c
        if config.scale:
            self.sigma = 1.0 / max(np.abs(bh).max(initial=0.0), 1e-3)
            self.rho = 1.0 / max(np.abs(ch).max(initial=0.0), 1e-3)
        else:
            self.sigma = self.rho = 1.0
        self.As = As
        self.bh = self.sigma * bh
        self.ch = self.rho * ch
        kkt = sp.bmat([[sp.identity(n), As.T], [As, -sp.identity(m)]], format="csc")
        try:
            self.lu = spla.splu(kkt, permc_spec="MMD_AT_PLUS_A",
                                diag_pivot_thresh=0.0,
                                options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SolverError(f"KKT factorization failed: {exc}") from exc
        self.h = np.concatenate([self.ch, self.bh])
        self.g = self._solve_m(self.h)
        self.hg = 1.0 + float(self.h @ self.g)

    def _solve_m(self, r):
        n = self.n
        rhs = r.copy()
        rhs[n:] = -rhs[n:]
        return self.lu.solve(rhs)

    def unscale(self, u, v):
        n, m = self.n, self.m
        tau = u[-1]
        x = self.e * u[:n] / (tau * self.sigma)
        y = self.d * u[n:n + m] / (tau * self.rho)
        s = v[n:n + m] / (self.d * tau * self.sigma)
        return x, y, s

    def project(self, w):
        n, m = self.n, self.m
        out = w.copy()
        out[n:n + m] = self.pcone.project(w[n:n + m], dual=True)
        out[-1] = max(w[-1], 0.0)
        return out

    def step(self, u, v):
        n, m = self.n, self.m
        alpha = self.config.alpha
        w = u + v
        z0 = self._solve_m(w[:-1])
        tau = (w[-1] + float(self.h @ z0)) / self.hg
        ut = np.empty_like(u)
        ut[:-1] = z0 - tau * self.g
        ut[-1] = tau
        ur = alpha * ut + (1 - alpha) * u
        u_new = self.project(ur - v)
        v_new = v - ur + u_new
        return u_new, v_new


def _certificates(program, emb, u, v, eps):
    n, m = emb.n, emb.m
    A, b, c = program.A, program.b, program.c
    y = emb.d * u[n:n + m]
    by = float(b @ y)
    if by < 0:
        y = y / -by
        if np.abs(A.T @ y).max(initial=0.0) <= eps:
            return INFEASIBLE
    x = emb.e * u[:n]
    s = v[n:n + m] / emb.d
    cx = float(c @ x)
    if cx < 0:
        x, s = x / -cx, s / -cx
        if np.abs(A @ x + s).max(initial=0.0) <= eps:
            return UNBOUNDED
    return None


def _admm(program: ConicProgram, config: SolverConfig, accept=None):
    emb = _Embedding(program, config)
    n, m = emb.n, emb.m
    u = np.zeros(n + m + 1)
    v = np.zeros(n + m + 1)
    u[-1] = v[-1] = 1.0
    acc = _Anderson(config.anderson) if config.anderson > 0 else None
    z = np.concatenate([u, v])
    best = None
    status = MAX_ITERATIONS
    k = 0
    res = (np.inf, np.inf, np.inf)
    tol = (config.eps_primal, config.eps_dual, config.eps_gap)
    for k in range(1, config.max_iter + 1):
        u1, v1 = emb.step(u, v)
        if acc is not None:
            g = np.concatenate([u1, v1])
            z_acc = acc.step(z, g)
            # safeguard: only keep accelerated points that stay in the cone
            # product and keep tau positive
            ua, va = z_acc[:n + m + 1], z_acc[n + m + 1:]
            if ua[-1] > 0 and np.all(np.isfinite(z_acc)):
                ua = emb.project(ua)
                u, v = ua, va
                z = np.concatenate([u, v])
            else:
                acc.reset()
                u, v = u1, v1
                z = g
        else:
            u, v = u1, v1
        if k % config.check_every and k != config.max_iter:
            continue
        if u[-1] > 0:
            x, y, s = emb.unscale(u, v)
            s = emb.pcone.project(s)
            res = residuals(program, x=x, y=y, s=s)
            if best is None or max(res) < max(best[3]):
                best = (x, y, s, res)
            if all(r <= t for r, t in zip(res, tol)):
                if accept is None or accept(x, y, s):
                    status = OPTIMAL
                    break
        cert = _certificates(program, emb, u, v, config.eps_infeasible)
        if cert is not None:
            status = cert
            break
        if acc is not None and k % 200 == 0 and best is not None \
                and max(res) > 10 * max(best[3]):
            acc.reset()
    if status == OPTIMAL:
        x, y, s = best[0], best[1], best[2]
        return x, y, s, status, k
    if status in (INFEASIBLE, UNBOUNDED):
        x = np.full(n, np.nan)
        return x, np.zeros(m), np.zeros(m), status, k
    if best is None:
        return np.full(n, np.nan), np.zeros(m), np.zeros(m), status, k
    return best[0], best[1], best[2], status, k


def solve(program: ConicProgram, config: SolverConfig | None = None) -> Solution:
    """Solve a linear-objective conic program.

    Returns a :class:`Solution` whose status is one of ``optimal``,
    ``max-iterations``, ``infeasible-detected`` or ``unbounded-detected``.
    A status of ``optimal`` is only reported after the residuals have been
    recomputed on the original (unreduced, unscaled) program.
    """
    config = config or SolverConfig()
    if program.has_quadratic:
        raise ValueError("call reformulate_quadratic before solve")
    if program.n == 0 and program.m == 0:
        raise ValueError("program is structurally empty")
    t0 = time.perf_counter()
    tol = (config.eps_primal, config.eps_dual, config.eps_gap)

    if config.presolve:
        try:
            red = presolve(program)
        except PresolveInfeasible as exc:
            return Solution(np.full(program.n, np.nan), np.zeros(program.m),
                            np.zeros(program.m), INFEASIBLE,
                            solve_time=time.perf_counter() - t0,
                            info={"presolve": str(exc)})
    else:
        red = None
    inner = red.program if red is not None else program

    def lift(x, y, s):
        if red is None:
            return x, y, s
        return postsolve(program, red, x, y, s)

    def accept(x, y, s):
        xf, yf, sf = lift(x, y, s)
        res = residuals(program, x=xf, y=yf, s=sf)
        return all(r <= t for r, t in zip(res, tol))

    if inner.n == 0:
        x, y, s = lift(np.zeros(0), np.zeros(inner.m), inner.b.copy())
        pc = ProductCone(inner.cones)
        ok = np.allclose(pc.project(inner.b), inner.b, atol=1e-9)
        status, iters = (OPTIMAL if ok else INFEASIBLE), 0
    else:
        if config.method == "interior":
            x, y, s, status, iters = interior_solve(
                inner, max_iter=min(config.max_iter, 500),
                tol=min(1e-8, 0.01 * min(tol)))
        else:
            x, y, s, status, iters = _admm(inner, config, accept)
        if status == OPTIMAL or status == MAX_ITERATIONS:
            x, y, s = lift(x, y, s)
        else:
            x = np.full(program.n, np.nan)
            y = np.zeros(program.m)
            s = np.zeros(program.m)
    sol = Solution(x, y, s, status, iterations=iters,
                   solve_time=time.perf_counter() - t0)
    if np.all(np.isfinite(x)):
        sol.primal_residual, sol.dual_residual, sol.gap = residuals(program, sol)
        sol.objective = program.objective(x)
        if status == OPTIMAL and not all(
                r <= t for r, t in zip(
                    (sol.primal_residual, sol.dual_residual, sol.gap), tol)):
            sol.status = MAX_ITERATIONS
    log.debug("solve: status=%s iters=%d time=%.3fs", sol.status, iters,
              sol.solve_time)
    return sol
