from collections import Counter

import numpy as np
import pytest

from conftest import shipped
from owf_codesign.conic import NONNEG, RSOC, SOC, ZERO
from owf_codesign.graph_model import (BINARY, ConeConstraint, DecisionVariable, GraphError,
                                      LinearConstraint, NodeModel, OptiGraph, Var, flatten)
from owf_codesign.grid.build import build_graph


def test_single_variable_node():
    g = OptiGraph()
    nd = NodeModel("a")
    nd.add_variable("x")
    g.add_node(nd)
    assert len(g.nodes) == 1 and g.n_variables == 1


def test_one_variable_box_program():
    g = OptiGraph()
    nd = NodeModel("a")
    x = nd.add_variable("x", 0.0, 1.0)
    nd.add_objective(1, x)
    g.add_node(nd)
    prog, imap = flatten(g)
    assert prog.n == 1 and prog.m == 2
    assert [c.kind for c in prog.cones] == [NONNEG]
    np.testing.assert_array_equal(prog.c, [1.0])


def test_equality_link_gives_one_coupling_row():
    g = OptiGraph()
    for name in "ab":
        nd = NodeModel(name)
        nd.add_variable("x")
        g.add_node(nd)
    g.add_link(Var("a", "x").eq(Var("b", "x")), "tie")
    prog, imap = flatten(g)
    assert prog.m == 1 and prog.cones[0].kind == ZERO
    assert prog.A.toarray().tolist() in ([[-1.0, 1.0]], [[1.0, -1.0]])
    assert imap.link_rows == {0: [0]}


def test_foreign_reference_rejected():
    g = OptiGraph()
    nd = NodeModel("a")
    x = nd.add_variable("x")
    nd.add_constraint(x + Var("b", "y") <= 1.0)
    with pytest.raises(GraphError, match="foreign"):
        g.add_node(nd)


def test_link_errors():
    g = OptiGraph()
    for name in "ab":
        nd = NodeModel(name)
        nd.add_variable("x")
        g.add_node(nd)
    with pytest.raises(GraphError, match="single node"):
        g.add_link(Var("a", "x") <= 2.0)
    with pytest.raises(GraphError, match="unknown"):
        g.add_link(Var("a", "x").eq(Var("c", "x")))
    with pytest.raises(GraphError):
        g.add_link(ConeConstraint(SOC, [Var("a", "x"), Var("b", "x")]))


def test_variable_and_graph_validation():
    with pytest.raises(GraphError):
        DecisionVariable("n", "x", 2.0, 1.0)
    with pytest.raises(GraphError):
        DecisionVariable("n", "z", 0.0, 2.0, BINARY)
    nd = NodeModel("n")
    nd.add_variable("x")
    with pytest.raises(GraphError, match="duplicate"):
        nd.add_variable("x")
    g = OptiGraph(n_objectives=2)
    nd.add_objective(3, nd.var("x"))
    with pytest.raises(GraphError, match="objective index"):
        g.add_node(nd)
    with pytest.raises(GraphError):
        OptiGraph(n_objectives=0)
    with pytest.raises(GraphError, match="empty"):
        flatten(OptiGraph())
    with pytest.raises(GraphError):
        ConeConstraint("psd", [1.0])


def test_duplicate_node_and_frozen_graph():
    g = OptiGraph()
    g.add_node(NodeModel("a"))
    with pytest.raises(GraphError, match="duplicate"):
        g.add_node(NodeModel("a"))
    g.nodes["a"].add_variable("x")
    flatten(g)
    with pytest.raises(GraphError, match="flattened"):
        g.add_node(NodeModel("b"))


def test_unsupported_constraint_form():
    g = OptiGraph()
    nd = NodeModel("a")
    nd.add_variable("x")
    g.add_node(nd)
    nd.constraints.append("x <= 1")
    with pytest.raises(GraphError, match="unsupported"):
        flatten(g)


def test_binaries_pass_through():
    g = OptiGraph()
    nd = NodeModel("a")
    nd.add_variable("x", 0, 5)
    nd.add_variable("z", binary=True)
    g.add_node(nd)
    _, imap = flatten(g)
    assert imap.binaries.tolist() == [1]


def test_quadratic_objective_collected():
    g = OptiGraph(n_objectives=2)
    nd = NodeModel("a")
    x = nd.add_variable("x")
    nd.add_objective(1, (x + 1.0).square(2.0))
    nd.add_objective(2, x * 3.0)
    g.add_node(nd)
    prog, imap = flatten(g, weights=(1.0, 0.0))
    assert prog.Q is not None and prog.Q[0, 0] == pytest.approx(2.0)
    np.testing.assert_allclose(imap.objective_values([2.0]), [18.0, 6.0])
    assert prog.objective([2.0]) == pytest.approx(18.0)
    with pytest.raises(GraphError):
        flatten(g, weights=(1.0,))


# ------------------------------------------------------------- properties

def random_graph(rng, n_nodes=4, n_links=4):
    g = OptiGraph(n_objectives=2)
    for k in range(n_nodes):
        nd = NodeModel(f"n{k}")
        xs = []
        for j in range(rng.integers(2, 5)):
            lo = rng.choice([-np.inf, rng.normal()])
            hi = rng.choice([np.inf, lo + abs(rng.normal()) if np.isfinite(lo) else 1.0])
            xs.append(nd.add_variable(f"x{j}", lo, hi))
        for _ in range(rng.integers(1, 4)):
            e = sum(rng.normal() * v for v in xs) + rng.normal()
            nd.add_constraint([e <= 0.0, e >= 0.0, e.eq(0.0)][rng.integers(3)])
        kind = [SOC, RSOC][rng.integers(2)]
        nd.add_cone(kind, *[xs[i] * rng.normal() + rng.normal()
                            for i in rng.permutation(len(xs))])
        nd.add_objective(1 + rng.integers(2), xs[0] * rng.normal())
        g.add_node(nd)
    ids = list(g.nodes)
    for k in range(n_links):
        a, b = rng.choice(len(ids), 2, replace=False)
        va = Var(ids[a], "x0")
        vb = Var(ids[b], "x1")
        e = rng.normal() * va - rng.normal() * vb + rng.normal()
        g.add_link([e <= 0.0, e.eq(0.0)][rng.integers(2)], f"l{k}")
    return g


def slack_of(con: LinearConstraint, values):
    val = con.expr.evaluate(values)
    return -val if con.sense == "<=" else val


@pytest.mark.parametrize("seed", range(10))
def test_flatten_is_lossless(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng)
    prog, imap = flatten(g)
    x = rng.normal(size=prog.n)
    values = imap.values(x)
    s = prog.b - prog.A @ x
    rows = {}
    for i, origin in enumerate(imap.row_origin):
        rows.setdefault(origin, []).append(i)
    for node in g.nodes.values():
        for name, dv in node.variables.items():
            v = values[Var(node.id, name)]
            if np.isfinite(dv.lower):
                (i,) = rows[(node.id, f"{name}>=lb")]
                assert s[i] == pytest.approx(v - dv.lower, abs=1e-12)
            if np.isfinite(dv.upper):
                (i,) = rows[(node.id, f"{name}<=ub")]
                assert s[i] == pytest.approx(dv.upper - v, abs=1e-12)
        for k, con in enumerate(node.constraints):
            idx = rows[(node.id, f"con{k}")]
            if isinstance(con, LinearConstraint):
                assert s[idx[0]] == pytest.approx(slack_of(con, values), abs=1e-12)
            else:
                np.testing.assert_allclose(s[idx], [e.evaluate(values) for e in con.exprs],
                                           atol=1e-12)
    for k, link in enumerate(g.links):
        (i,) = rows[("link", k)]
        assert s[i] == pytest.approx(slack_of(link.constraint, values), abs=1e-12)
    # objectives too
    for index in (1, 2):
        ref = sum(e.evaluate(values) for nd in g.nodes.values()
                  for j, e in nd.objectives if j == index)
        assert imap.objective_values(x)[index - 1] == pytest.approx(ref, abs=1e-12)


def row_signatures(prog, imap, relabel=lambda o: o):
    A = prog.A.tocsr()
    out = Counter()
    for i, origin in enumerate(imap.row_origin):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        coefs = tuple(sorted((str(imap.columns[j]), float(v))
                             for j, v in zip(A.indices[lo:hi], A.data[lo:hi])))
        out[(relabel(origin), coefs, float(prog.b[i]))] += 1
    return out


@pytest.mark.parametrize("seed", range(5))
def test_removing_a_link_touches_only_its_rows(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_graph(rng)
    drop = int(rng.integers(len(g.links)))
    h = g.without_link(drop)
    before = row_signatures(*flatten(g))

    def shift(origin):
        if origin[0] == "link" and origin[1] >= drop:
            return ("link", origin[1] + 1)
        return origin

    after = row_signatures(*flatten(h), relabel=shift)
    removed = before - after
    assert sum(removed.values()) == 1
    assert all(key[0] == ("link", drop) for key in removed)
    assert not after - before


def test_flatten_is_deterministic():
    p1, m1 = flatten(random_graph(np.random.default_rng(4)))
    p2, m2 = flatten(random_graph(np.random.default_rng(4)))
    assert m1.columns == m2.columns and m1.row_origin == m2.row_origin
    assert (p1.A != p2.A).nnz == 0
    np.testing.assert_array_equal(p1.b, p2.b)


# ------------------------------------------------------------- full case

def test_full_case_node_count_and_recount():
    case = shipped()
    g = build_graph(case)
    per_hour = 9 + 9 + 4 + 4 + 2 + 2
    assert per_hour == 30
    assert len(g.nodes) == per_hour * case.horizon == 240
    n_cols = sum(len(nd.variables) for nd in g.nodes.values())
    n_rows = len(g.links)
    for nd in g.nodes.values():
        n_rows += sum(int(np.isfinite(dv.lower)) + int(np.isfinite(dv.upper))
                      for dv in nd.variables.values())
        for con in nd.constraints:
            n_rows += 1 if isinstance(con, LinearConstraint) else len(con.exprs)
    prog, imap = flatten(g)
    assert prog.n == n_cols and prog.m == n_rows


def test_case_links_are_multi_node():
    g = build_graph(shipped())
    soc = [lk for lk in g.links if lk.label.startswith("soc ")]
    ramps = [lk for lk in g.links if lk.label.startswith("ramp")]
    assert soc and all(len(lk.nodes) == 2 and lk.constraint.sense == "==" for lk in soc)
    assert ramps and all(lk.constraint.sense in ("<=", ">=") and len(lk.nodes) == 2
                         for lk in ramps)
