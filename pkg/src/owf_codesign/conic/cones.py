"""Cone descriptors and Euclidean projections.

Rotated second-order cones use the convention ``2*x*y >= ||z||^2`` with
``x, y >= 0``, which makes them self-dual just like the standard
second-order cone ``t >= ||x||``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"
RSOC = "rsoc"

KINDS = (ZERO, NONNEG, SOC, RSOC)

_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("cone dimension must be positive")
        if self.kind == SOC and self.dim < 1:
            raise ValueError("second-order cone needs dimension >= 1")
        if self.kind == RSOC and self.dim < 2:
            raise ValueError("rotated second-order cone needs dimension >= 2")

    def __str__(self):
        return f"{self.kind}:{self.dim}"

    @classmethod
    def parse(cls, text: str) -> "Cone":
        kind, dim = text.split(":")
        return cls(kind, int(dim))


def _soc_batch(v: np.ndarray) -> np.ndarray:
    """Project each row ``(t, x)`` of ``v`` onto the second-order cone."""
    t = v[:, 0]
    x = v[:, 1:]
    nx = np.sqrt(np.einsum("ij,ij->i", x, x))
    out = v.copy()
    inside = nx <= t
    polar = nx <= -t
    mid = ~(inside | polar)
    out[polar] = 0.0
    if mid.any():
        a = 0.5 * (t[mid] + nx[mid])
        out[mid, 0] = a
        out[mid, 1:] = (a / nx[mid])[:, None] * x[mid]
    return out


def _rotate(v: np.ndarray) -> np.ndarray:
    # symmetric orthogonal map taking the rotated cone onto the standard one
    out = v.copy()
    a = v[:, 0]
    b = v[:, 1]
    out[:, 0] = _SQRT_HALF * (a + b)
    out[:, 1] = _SQRT_HALF * (a - b)
    return out


def _rsoc_batch(v: np.ndarray) -> np.ndarray:
    return _rotate(_soc_batch(_rotate(v)))


def project_cone(cone: Cone, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``cone``."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != cone.dim:
        raise ValueError(
            f"vector of length {v.shape} does not match cone {cone}")
    if cone.kind == ZERO:
        return np.zeros_like(v)
    if cone.kind == NONNEG:
        return np.maximum(v, 0.0)
    if cone.kind == SOC:
        return _soc_batch(v[None, :])[0]
    return _rsoc_batch(v[None, :])[0]


def in_cone(cone: Cone, v, tol: float = 1e-9) -> bool:
    v = np.asarray(v, dtype=float)
    if cone.kind == ZERO:
        return bool(np.all(np.abs(v) <= tol))
    if cone.kind == NONNEG:
        return bool(np.all(v >= -tol))
    if cone.kind == SOC:
        return bool(np.linalg.norm(v[1:]) <= v[0] + tol)
    x, y, z = v[0], v[1], v[2:]
    return bool(x >= -tol and y >= -tol and z @ z <= 2 * x * y + tol)


class ProductCone:
    """Batched projector for an ordered list of cones.

    Cones of the same kind and dimension are gathered into 2-D blocks so
    that one projection per iteration costs a handful of numpy calls.
    """

    def __init__(self, cones):
        self.cones = list(cones)
        self.dim = sum(c.dim for c in self.cones)
        offsets = np.cumsum([0] + [c.dim for c in self.cones])
        self.offsets = offsets
        zero, nonneg = [], []
        groups: dict[tuple[str, int], list[int]] = {}
        for cone, start in zip(self.cones, offsets[:-1]):
            rows = range(start, start + cone.dim)
            if cone.kind == ZERO:
                zero.extend(rows)
            elif cone.kind == NONNEG:
                nonneg.extend(rows)
            else:
                groups.setdefault((cone.kind, cone.dim), []).append(start)
        self.zero_idx = np.array(zero, dtype=int)
        self.nonneg_idx = np.array(nonneg, dtype=int)
        self.blocks = []
        for (kind, dim), starts in groups.items():
            idx = np.asarray(starts)[:, None] + np.arange(dim)[None, :]
            self.blocks.append((kind, idx))

    def project(self, v: np.ndarray, dual: bool = False) -> np.ndarray:
        """Project onto the product cone, or onto its dual if ``dual``.

        Only the zero cone differs from its dual (the free space).
        """
        out = v.copy()
        if not dual and self.zero_idx.size:
            out[self.zero_idx] = 0.0
        if self.nonneg_idx.size:
            out[self.nonneg_idx] = np.maximum(v[self.nonneg_idx], 0.0)
        for kind, idx in self.blocks:
            block = v[idx]
            if kind == SOC:
                out[idx] = _soc_batch(block)
            else:
                out[idx] = _rsoc_batch(block)
        return out

    def block_index(self):
        """Row groups that must share a common scaling factor."""
        groups = [np.array([i]) for i in self.zero_idx]
        groups += [np.array([i]) for i in self.nonneg_idx]
        for _, idx in self.blocks:
            groups.extend(idx)
        return groups
