"""Independent reference computations used by the test suite."""

from __future__ import annotations

import itertools

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq, minimize

from owf_codesign.conic import NONNEG, RSOC, SOC, ZERO, Cone, ConicProgram

R2 = 1 / np.sqrt(2)


def _to_rotated(v):
    v = np.array(v, dtype=float)
    a, b = v[0], v[1]
    v[0], v[1] = R2 * (a + b), R2 * (a - b)
    return v


def _soc_pair(rng, d):
    """Complementary (s, y) in a standard second-order cone of size ``d``."""
    kind = rng.integers(3)
    u = rng.normal(size=d - 1)
    if kind == 0:  # s interior, y = 0
        return np.r_[np.linalg.norm(u) + rng.uniform(0.5, 2), u], np.zeros(d)
    if kind == 1:  # y interior, s = 0
        return np.zeros(d), np.r_[np.linalg.norm(u) + rng.uniform(0.5, 2), u]
    nu = np.linalg.norm(u)
    return np.r_[nu, u], rng.uniform(0.5, 2) * np.r_[nu, -u]


def kkt_socp(rng, n=None, cones=None):
    """Random conic program whose optimum is known from a KKT triple.

    A primal point ``x``, a slack ``s`` and a dual ``y`` are drawn so that
    ``s`` and ``y`` lie in the cone, are complementary, and ``b = A x + s``,
    ``c = -A' y``.  The optimal value is then ``c'x``, and the slack cones
    keep plenty of strictly feasible points.
    """
    n = n or int(rng.integers(3, 9))
    if cones is None:
        cones = [Cone(NONNEG, int(rng.integers(n, 2 * n)))]
        if rng.random() < 0.5:
            cones.insert(0, Cone(ZERO, 1))
        for _ in range(int(rng.integers(1, 4))):
            cones.append(Cone(SOC if rng.random() < 0.5 else RSOC, int(rng.integers(3, 6))))
    s_parts, y_parts = [], []
    for cone in cones:
        if cone.kind == ZERO:
            s_parts.append(np.zeros(cone.dim))
            y_parts.append(rng.normal(size=cone.dim))
        elif cone.kind == NONNEG:
            active = rng.random(cone.dim) < 0.5
            s_parts.append(np.where(active, 0.0, rng.uniform(0.5, 2, cone.dim)))
            y_parts.append(np.where(active, rng.uniform(0.5, 2, cone.dim), 0.0))
        else:
            s, y = _soc_pair(rng, cone.dim)
            if cone.kind == RSOC:
                s, y = _to_rotated(s), _to_rotated(y)
            s_parts.append(s)
            y_parts.append(y)
    s, y = np.concatenate(s_parts), np.concatenate(y_parts)
    m = s.size
    A = rng.normal(size=(m, n))
    x = rng.normal(size=n)
    b = A @ x + s
    c = -A.T @ y
    prog = ConicProgram(c=c, A=sp.csc_matrix(A), b=b, cones=tuple(cones))
    return prog, float(c @ x)


def _in_cone(cone, p, tol=1e-12):
    if cone.kind == NONNEG:
        return bool(np.all(p >= -tol))
    if cone.kind == SOC:
        return p[0] >= np.linalg.norm(p[1:]) - tol
    return p[0] >= -tol and p[1] >= -tol and 2 * p[0] * p[1] >= p[2:] @ p[2:] - tol


def project_brute(cone: Cone, v, starts=2, seed=0):
    """Euclidean projection by exhaustive candidate search.

    The projection is either ``v`` itself, a point of a boundary ray (apex
    included), or a point of the smooth part of the boundary.  The smooth
    part is parametrized explicitly and searched with multi-start BFGS; the
    closest feasible candidate wins.
    """
    v = np.asarray(v, dtype=float)
    if cone.kind == ZERO:
        return np.zeros_like(v)
    if cone.kind == NONNEG:
        # every orthant face is a candidate support; brute force over them
        best = np.zeros_like(v)
        for mask in itertools.product((False, True), repeat=v.size):
            p = np.where(mask, np.maximum(v, 0.0), 0.0)
            if np.sum((p - v) ** 2) < np.sum((best - v) ** 2):
                best = p
        return best
    cands = [np.zeros_like(v)]
    if _in_cone(cone, v):
        cands.append(v.copy())
    if cone.kind == SOC:
        def point(z):
            return np.r_[np.linalg.norm(z), z]

        def fun(z):
            nz = np.linalg.norm(z)
            f = (nz - v[0]) ** 2 + np.sum((z - v[1:]) ** 2)
            g = 2 * (z - v[1:]) + (2 * (nz - v[0]) * z / nz if nz > 0 else 0.0)
            return f, g
        z0s = [v[1:], -v[1:], np.ones(v.size - 1)]
    else:
        for axis in (0, 1):  # rays where one of the two scale entries vanishes
            p = np.zeros_like(v)
            p[axis] = max(v[axis], 0.0)
            cands.append(p)

        def point(q):
            x = np.exp(np.clip(q[0], -30.0, 30.0))
            return np.r_[x, q[1:] @ q[1:] / (2 * x), q[1:]]

        def fun(q):
            x, y, z = point(q)[0], point(q)[1], q[1:]
            f = (x - v[0]) ** 2 + (y - v[1]) ** 2 + np.sum((z - v[2:]) ** 2)
            ga = 2 * (x - v[0]) * x - 2 * (y - v[1]) * y
            gz = 2 * (y - v[1]) * z / x + 2 * (z - v[2:])
            return f, np.r_[ga, gz]
        z0s = [np.r_[np.log(max(abs(v[0]), 1e-3)), v[2:]], np.r_[0.0, v[2:]],
               np.r_[np.log(max(abs(v[1]), 1e-3)), -v[2:]]]
    rng = np.random.default_rng(seed)
    z0s += [rng.normal(size=z0s[0].size) * (1 + np.abs(v).max()) for _ in range(starts)]
    for z0 in z0s:
        r = minimize(fun, z0, jac=True, method="BFGS",
                     options={"gtol": 1e-12, "maxiter": 2000})
        cands.append(point(r.x))
    dist = [np.sum((p - v) ** 2) for p in cands]
    return cands[int(np.argmin(dist))]


def project_simplex_bisect(v):
    """Simplex projection by bisection on the shift ``tau`` in ``max(v - tau, 0)``."""
    v = np.asarray(v, dtype=float)
    g = lambda tau: np.maximum(v - tau, 0.0).sum() - 1.0  # noqa: E731
    tau = brentq(g, v.min() - 2.0, v.max(), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return np.maximum(v - tau, 0.0)


def nondominated_bruteforce(pts):
    """O(n^2) filter on objective tuples, duplicates collapsed."""
    uniq = sorted(set(map(tuple, pts)))
    out = []
    for p in uniq:
        dominated = any(all(q[i] <= p[i] for i in range(len(p))) and q != p for q in uniq)
        if not dominated:
            out.append(p)
    return out


def all_fixings(k):
    return list(itertools.product((0.0, 1.0), repeat=k))
