"""Graph-structured optimization models.

Each node owns its variables, constraints and objective terms; edges
(links) hold affine coupling constraints between nodes.  ``flatten``
turns the graph into one standard-form :class:`ConicProgram` together
with an :class:`IndexMap` that translates columns and rows back to the
graph.

Expressions are built with ordinary arithmetic on :class:`Var` handles::

    node = NodeModel("bus1")
    v = node.add_variable("c", lower=0.81, upper=1.21)
    node.add_constraint(v - 1.0 <= 0)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from numbers import Real

import numpy as np
import scipy.sparse as sp

from .conic import NONNEG, RSOC, SOC, ZERO, Cone, ConicProgram

CONTINUOUS = "continuous"
BINARY = "binary"


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Var:
    node: str
    name: str

    def _aff(self):
        return Affine({self: 1.0})

    def __add__(self, other):
        return self._aff() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self._aff() - other

    def __rsub__(self, other):
        return other - self._aff()

    def __mul__(self, k):
        return self._aff() * k

    __rmul__ = __mul__

    def __neg__(self):
        return self._aff() * -1.0

    def __truediv__(self, k):
        return self._aff() * (1.0 / k)

    def __le__(self, other):
        return self._aff() <= other

    def __ge__(self, other):
        return self._aff() >= other

    def eq(self, other):
        return self._aff().eq(other)

    def __str__(self):
        return f"{self.node}.{self.name}"


def _as_affine(x):
    if isinstance(x, Affine):
        return x
    if isinstance(x, Var):
        return Affine({x: 1.0})
    if isinstance(x, Real):
        return Affine({}, float(x))
    raise TypeError(f"cannot use {type(x).__name__} in an affine expression")


class Affine:
    """Sparse affine expression ``sum(coef * var) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms or {})
        self.const = float(const)

    def __add__(self, other):
        if isinstance(other, Quadratic):
            return other + self
        other = _as_affine(other)
        terms = dict(self.terms)
        for v, k in other.terms.items():
            terms[v] = terms.get(v, 0.0) + k
        return Affine(terms, self.const + other.const)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * _as_affine(other)

    def __rsub__(self, other):
        return _as_affine(other) - self

    def __mul__(self, k):
        if not isinstance(k, Real):
            raise TypeError("affine expressions can only be scaled by numbers")
        k = float(k)
        return Affine({v: c * k for v, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __truediv__(self, k):
        return self * (1.0 / k)

    def __le__(self, other):
        return LinearConstraint(self - other, "<=")

    def __ge__(self, other):
        return LinearConstraint(self - other, ">=")

    def eq(self, other):
        return LinearConstraint(self - other, "==")

    def square(self, scale=1.0):
        """``scale * self**2`` as a :class:`Quadratic`."""
        items = list(self.terms.items())
        quad = {}
        for i, (vi, ci) in enumerate(items):
            for vj, cj in items[i:]:
                key = (vi, vj)
                quad[key] = quad.get(key, 0.0) + scale * ci * cj * (1 if vi == vj else 2)
        lin = Affine({v: 2 * scale * self.const * c for v, c in items},
                     scale * self.const ** 2)
        return Quadratic(quad, lin)

    def vars(self):
        return set(self.terms)

    def evaluate(self, values) -> float:
        return self.const + sum(c * values[v] for v, c in self.terms.items())

    def __repr__(self):
        parts = [f"{c:+g}*{v}" for v, c in self.terms.items()]
        return " ".join(parts + [f"{self.const:+g}"])


class Quadratic:
    """``sum(coef * vi * vj) + affine``; must be convex where used."""

    __slots__ = ("quad", "lin")

    def __init__(self, quad=None, lin=None):
        self.quad = dict(quad or {})
        self.lin = lin if lin is not None else Affine()

    def __add__(self, other):
        if isinstance(other, Quadratic):
            quad = dict(self.quad)
            for key, k in other.quad.items():
                quad[key] = quad.get(key, 0.0) + k
            return Quadratic(quad, self.lin + other.lin)
        return Quadratic(self.quad, self.lin + _as_affine(other))

    __radd__ = __add__

    def __mul__(self, k):
        k = float(k)
        return Quadratic({key: c * k for key, c in self.quad.items()}, self.lin * k)

    __rmul__ = __mul__

    def vars(self):
        out = set(self.lin.terms)
        for a, b in self.quad:
            out.update((a, b))
        return out

    def evaluate(self, values) -> float:
        return self.lin.evaluate(values) + sum(
            c * values[a] * values[b] for (a, b), c in self.quad.items())


@dataclass
class LinearConstraint:
    expr: Affine
    sense: str  # "==", "<=", ">="

    def vars(self):
        return self.expr.vars()

    def violation(self, values) -> float:
        val = self.expr.evaluate(values)
        if self.sense == "==":
            return abs(val)
        if self.sense == "<=":
            return max(val, 0.0)
        return max(-val, 0.0)


@dataclass
class ConeConstraint:
    """``(exprs[0], exprs[1], ...)`` lies in a second-order or rotated cone."""

    kind: str
    exprs: list

    def __post_init__(self):
        if self.kind not in (SOC, RSOC):
            raise GraphError(f"unsupported cone constraint {self.kind!r}")
        self.exprs = [_as_affine(e) for e in self.exprs]

    def vars(self):
        out = set()
        for e in self.exprs:
            out |= e.vars()
        return out


@dataclass(frozen=True)
class DecisionVariable:
    node: str
    name: str
    lower: float = -math.inf
    upper: float = math.inf
    kind: str = CONTINUOUS

    def __post_init__(self):
        if self.lower > self.upper:
            raise GraphError(f"{self.node}.{self.name}: lower bound exceeds upper bound")
        if self.kind == BINARY and (self.lower < 0 or self.upper > 1):
            raise GraphError(f"{self.node}.{self.name}: binary bounds must lie in [0, 1]")
        if self.kind not in (CONTINUOUS, BINARY):
            raise GraphError(f"unknown variable kind {self.kind!r}")

    @property
    def ref(self) -> Var:
        return Var(self.node, self.name)


class NodeModel:
    """Variables, constraints and tagged objective terms of one sub-system."""

    def __init__(self, node_id: str, label: str | None = None):
        self.id = node_id
        self.label = label or node_id
        self.variables: dict[str, DecisionVariable] = {}
        self.constraints: list = []
        self.objectives: list[tuple[int, Affine | Quadratic]] = []

    def add_variable(self, name, lower=-math.inf, upper=math.inf, binary=False) -> Var:
        if name in self.variables:
            raise GraphError(f"duplicate variable {self.id}.{name}")
        kind = BINARY if binary else CONTINUOUS
        if binary:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        self.variables[name] = DecisionVariable(self.id, name, float(lower), float(upper), kind)
        return Var(self.id, name)

    def var(self, name) -> Var:
        if name not in self.variables:
            raise GraphError(f"node {self.id} has no variable {name!r}")
        return Var(self.id, name)

    def add_constraint(self, con):
        self.constraints.append(con)
        return con

    def add_cone(self, kind, *exprs):
        return self.add_constraint(ConeConstraint(kind, list(exprs)))

    def add_objective(self, index: int, expr):
        if isinstance(expr, (Var, Real)):
            expr = _as_affine(expr)
        self.objectives.append((index, expr))

    def validate(self, n_objectives=None):
        own = {Var(self.id, name) for name in self.variables}
        for con in self.constraints:
            foreign = con.vars() - own
            if foreign:
                names = ", ".join(sorted(str(v) for v in foreign))
                raise GraphError(f"node {self.id}: constraint references foreign variables {names}")
        for index, expr in self.objectives:
            if n_objectives is not None and not 1 <= index <= n_objectives:
                raise GraphError(f"node {self.id}: objective index {index} outside 1..{n_objectives}")
            foreign = expr.vars() - own
            if foreign:
                raise GraphError(f"node {self.id}: objective references foreign variables")


@dataclass
class LinkConstraint:
    constraint: LinearConstraint
    label: str = ""

    @property
    def nodes(self):
        return {v.node for v in self.constraint.vars()}


@dataclass
class IndexMap:
    """Bidirectional bookkeeping between graph entities and program indices."""

    columns: list  # Var per column
    col_of: dict
    row_origin: list  # per row: (owner, detail)
    binaries: np.ndarray
    n_objectives: int
    objective_parts: list  # per objective: (c, Q, offset)
    link_rows: dict = field(default_factory=dict)
    node_rows: dict = field(default_factory=dict)

    def col(self, var: Var) -> int:
        return self.col_of[var]

    def value(self, x, var: Var) -> float:
        return float(x[self.col_of[var]])

    def values(self, x) -> dict:
        return {v: float(x[j]) for j, v in enumerate(self.columns)}

    def objective_values(self, x) -> np.ndarray:
        x = np.asarray(x)[:len(self.columns)]
        out = []
        for c, Q, off in self.objective_parts:
            val = float(c @ x) + off
            if Q is not None:
                val += float(x @ (Q @ x))
            out.append(val)
        return np.array(out)


class OptiGraph:
    def __init__(self, n_objectives: int = 1, name: str = "graph"):
        if n_objectives < 1:
            raise GraphError("a graph needs at least one objective")
        self.name = name
        self.n_objectives = n_objectives
        self.nodes: dict[str, NodeModel] = {}
        self.links: list[LinkConstraint] = []
        self.frozen = False
        self.weights = None
        self.meta: dict = {}
        self._var_index: set = set()

    def _check_mutable(self):
        if self.frozen:
            raise GraphError("graph has been flattened and can no longer change")

    def add_node(self, model: NodeModel) -> str:
        self._check_mutable()
        if model.id in self.nodes:
            raise GraphError(f"duplicate node id {model.id!r}")
        model.validate(self.n_objectives)
        self.nodes[model.id] = model
        self._var_index.update(Var(model.id, n) for n in model.variables)
        return model.id

    def add_link(self, constraint: LinearConstraint, label: str = "") -> int:
        self._check_mutable()
        if not isinstance(constraint, LinearConstraint):
            raise GraphError("links must be affine equalities or inequalities")
        link = LinkConstraint(constraint, label)
        missing = constraint.vars() - self._var_index
        if missing:
            names = ", ".join(sorted(str(v) for v in missing))
            raise GraphError(f"link {label!r} references unknown variables {names}")
        if len(link.nodes) < 2:
            raise GraphError(f"link {label!r} spans a single node; make it a node constraint")
        self.links.append(link)
        return len(self.links) - 1

    def variable(self, var: Var) -> DecisionVariable:
        return self.nodes[var.node].variables[var.name]

    @property
    def n_variables(self) -> int:
        return sum(len(nd.variables) for nd in self.nodes.values())

    def without_link(self, index: int) -> "OptiGraph":
        """Unfrozen copy of the graph with one link removed."""
        g = OptiGraph(self.n_objectives, self.name)
        g.nodes = dict(self.nodes)
        g._var_index = set(self._var_index)
        g.links = [lk for k, lk in enumerate(self.links) if k != index]
        g.weights = self.weights
        g.meta = dict(self.meta)
        return g

    def flatten(self, weights=None):
        return flatten(self, weights)


def _emit_linear(con, label, rows):
    e = con.expr
    if con.sense == "<=":
        coefs = {v: c for v, c in e.terms.items()}
        rhs = -e.const
        kind = NONNEG
    else:
        coefs = {v: -c for v, c in e.terms.items()}
        rhs = e.const
        kind = ZERO if con.sense == "==" else NONNEG
    rows[kind].append((coefs, rhs, label))


def flatten(graph: OptiGraph, weights=None):
    """Flatten ``graph`` into a conic program.

    Columns follow node insertion order and variable declaration order.
    Rows are grouped zero cone first, then nonnegative rows (variable bounds
    and inequalities), then one cone per node cone constraint.  The slack
    ``s = b - A x`` of each row equals the value of the original
    expression (negated for ``<=`` constraints).

    ``weights`` scalarizes the tagged objectives (default: the graph's own
    ``weights`` attribute, else uniform); the per-objective parts are kept
    in the returned :class:`IndexMap`.
    """
    if not graph.nodes:
        raise GraphError("cannot flatten an empty graph")
    N = graph.n_objectives
    if weights is None:
        weights = graph.weights
    if weights is None:
        weights = np.full(N, 1.0 / N)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (N,):
        raise GraphError(f"expected {N} objective weights, got {weights.shape}")

    columns, bins = [], []
    col_of = {}
    for node in graph.nodes.values():
        for name, dv in node.variables.items():
            ref = Var(node.id, name)
            col_of[ref] = len(columns)
            columns.append(ref)
            if dv.kind == BINARY:
                bins.append(col_of[ref])
    n = len(columns)

    rows = {ZERO: [], NONNEG: []}
    cone_rows = []
    for node in graph.nodes.values():
        for name, dv in node.variables.items():
            ref = Var(node.id, name)
            if np.isfinite(dv.lower):
                rows[NONNEG].append(({ref: -1.0}, -dv.lower, (node.id, f"{name}>=lb")))
            if np.isfinite(dv.upper):
                rows[NONNEG].append(({ref: 1.0}, dv.upper, (node.id, f"{name}<=ub")))
        for k, con in enumerate(node.constraints):
            label = (node.id, f"con{k}")
            if isinstance(con, LinearConstraint):
                _emit_linear(con, label, rows)
            elif isinstance(con, ConeConstraint):
                block = [({v: -c for v, c in e.terms.items()}, e.const, label)
                         for e in con.exprs]
                cone_rows.append((Cone(con.kind, len(block)), block))
            else:
                raise GraphError(f"unsupported constraint form {type(con).__name__}")
    for k, link in enumerate(graph.links):
        _emit_linear(link.constraint, ("link", k), rows)

    ordered = rows[ZERO] + rows[NONNEG]
    cones = []
    if rows[ZERO]:
        cones.append(Cone(ZERO, len(rows[ZERO])))
    if rows[NONNEG]:
        cones.append(Cone(NONNEG, len(rows[NONNEG])))
    for cone, block in cone_rows:
        cones.append(cone)
        ordered.extend(block)

    ri, ci, vals = [], [], []
    b = np.empty(len(ordered))
    origin = []
    link_rows: dict = {}
    node_rows: dict = {}
    for i, (coefs, rhs, label) in enumerate(ordered):
        for v, c in coefs.items():
            if c != 0.0:
                ri.append(i)
                ci.append(col_of[v])
                vals.append(c)
        b[i] = rhs
        origin.append(label)
        if label[0] == "link":
            link_rows.setdefault(label[1], []).append(i)
        else:
            node_rows.setdefault(label[0], []).append(i)
    A = sp.csc_matrix((vals, (ri, ci)), shape=(len(ordered), n))

    parts = []
    for index in range(1, N + 1):
        c = np.zeros(n)
        qi, qj, qv = [], [], []
        off = 0.0
        for node in graph.nodes.values():
            for idx, expr in node.objectives:
                if idx != index:
                    continue
                lin = expr.lin if isinstance(expr, Quadratic) else expr
                for v, k in lin.terms.items():
                    c[col_of[v]] += k
                off += lin.const
                if isinstance(expr, Quadratic):
                    for (va, vb), k in expr.quad.items():
                        a_, b_ = col_of[va], col_of[vb]
                        if a_ == b_:
                            qi.append(a_), qj.append(b_), qv.append(k)
                        else:
                            qi.extend((a_, b_)), qj.extend((b_, a_)), qv.extend((k / 2, k / 2))
        Q = sp.csc_matrix((qv, (qi, qj)), shape=(n, n)) if qv else None
        parts.append((c, Q, off))

    imap = IndexMap(columns, col_of, origin, np.array(bins, dtype=int), N, parts,
                    link_rows, node_rows)
    program = scalarize(imap, A, b, tuple(cones), weights)
    graph.frozen = True
    return program, imap


def scalarize(imap: IndexMap, A, b, cones, weights) -> ConicProgram:
    """Program with objective ``sum_k weights[k] * objective_k``."""
    weights = np.asarray(weights, dtype=float)
    n = len(imap.columns)
    c = np.zeros(n)
    Q = None
    off = 0.0
    for w, (ck, Qk, ok) in zip(weights, imap.objective_parts):
        if w == 0.0:
            continue
        c += w * ck
        off += w * ok
        if Qk is not None:
            Q = w * Qk if Q is None else Q + w * Qk
    return ConicProgram(c=c, A=A, b=b, cones=cones, Q=Q, offset=off,
                        meta={"weights": tuple(weights)})
