import pytest

from xqjoin import frontend as fe
from xqjoin.algebra import Distinct, Join, LitTable, Rank, Ser
from xqjoin.compiler import (
    compile_expr,
    compile_plan,
    compile_query,
    compile_rule_comp,
    compile_rule_ddo,
    compile_rule_doc,
    compile_rule_for,
    compile_rule_if,
    compile_rule_step,
    top_loop,
)
from xqjoin.evaluator import Interpreter, eval_plan, eval_xquery, gen_query, items
from xqjoin.infoset import NodeTest

from conftest import Q1

ITEMS = ("iter", "pos", "item")


def rows(node, doc):
    t = eval_plan(node, doc).project(ITEMS)
    return sorted(t.rows)


def ctx(*triples):
    return LitTable(ITEMS, triples)


def test_q1_stacked_plan(sample):
    plan = compile_query(Q1)
    assert isinstance(plan.root, Ser)
    assert plan.count(Rank) >= 2 and plan.count(Distinct) >= 2 and plan.count(Join) >= 2
    assert items(eval_plan(plan, sample)) == [1]


def test_var_returns_bound_plan():
    q = ctx((1, 1, 5))
    assert compile_expr(fe.Var("x"), {"x": q}, top_loop()) is q


def test_doc_rule(sample):
    assert rows(compile_rule_doc("auction.xml", top_loop()), sample) == [(1, 1, 0)]


def test_step_child_text(sample):
    q = compile_rule_step(ctx((1, 1, 6), (1, 2, 8)), "child", NodeTest("text"))
    assert rows(q, sample) == [(1, 1, 7), (1, 2, 9)]


def test_step_self_recomputes_pos(sample):
    q = compile_rule_step(ctx((1, 5, 8), (1, 9, 3)), "self", NodeTest("node"))
    assert rows(q, sample) == [(1, 1, 3), (1, 2, 8)]


def test_step_descendant_bidder(sample):
    q = compile_rule_step(ctx((1, 1, 1)), "descendant", NodeTest("element", "bidder"))
    assert rows(q, sample) == [(1, 1, 5)]


def test_for_over_empty(sample):
    e = fe.normalize(fe.parse("for $x in () return $x"))
    assert items(eval_plan(compile_plan(e), sample)) == []


def test_for_binding_each_bidder(sample):
    e = fe.normalize(fe.parse('for $x in doc("auction.xml")/descendant::bidder return $x/child::time'))
    assert eval_plan(compile_plan(e), sample).project(("pos", "item")).rows == [(1, 6)]


def test_nested_for_keeps_outer_order(two_bidders):
    q = (
        'for $a in doc("auction.xml")/descendant::open_auction return '
        "for $b in $a/child::bidder return $b/child::time"
    )
    got = items(eval_plan(compile_query(q), two_bidders))
    assert got == eval_xquery(q, two_bidders)
    assert [two_bidders.rows[p + 1].value for p in got] == ["1", "2", "3", "4"]


def test_for_rule_directly(sample):
    loop = top_loop()
    q_in = compile_expr(fe.normalize(fe.parse('doc("auction.xml")/descendant::node()')), {}, loop)
    q = compile_rule_for("x", q_in, fe.Var("x"), {}, loop)
    # the attribute id (pre 2) is not a descendant node
    assert [r[2] for r in rows(q, sample)] == [1, 3, 4, 5, 6, 7, 8, 9]


def test_if_with_empty_condition(sample):
    q = compile_rule_if(fe.Ebv(fe.Empty()), fe.Doc("auction.xml"), {}, top_loop())
    assert rows(q, sample) == []


def test_if_restricts_loop(sample):
    # iterations 1..3 bound to open_auction (has a bidder), initial, bidder (has time)
    loop = LitTable(["iter"], [(1,), (2,), (3,)])
    env = {"x": ctx((1, 1, 1), (2, 1, 3), (3, 1, 5))}
    cond = fe.Ebv(fe.Ddo(fe.Step(fe.Var("x"), "child", NodeTest("element"))))
    q = compile_rule_if(cond, fe.Var("x"), env, loop)
    assert rows(q, sample) == [(1, 1, 1), (3, 1, 5)]


def test_comp_numeric(sample):
    env = {"x": ctx((1, 1, 3))}
    q = compile_rule_comp(fe.Var("x"), ">", 10, env, top_loop())
    assert rows(q, sample) == [(1, 1, 1)]
    assert rows(compile_rule_comp(fe.Var("x"), ">", 20, env, top_loop()), sample) == []


def test_comp_string(sample):
    q = compile_rule_comp(fe.Var("x"), "=", "18:43", {"x": ctx((1, 1, 6))}, top_loop())
    assert rows(q, sample) == [(1, 1, 1)]


def test_comp_empty_operand(sample):
    assert rows(compile_rule_comp(fe.Var("x"), "=", "a", {"x": ctx()}, top_loop()), sample) == []


def test_ddo_rule(sample):
    assert rows(compile_rule_ddo(ctx((1, 1, 5), (1, 2, 5))), sample) == [(1, 1, 5)]
    once = compile_rule_ddo(ctx((1, 1, 8), (1, 2, 6)))
    assert rows(once, sample) == [(1, 1, 6), (1, 2, 8)]
    assert rows(compile_rule_ddo(once), sample) == rows(once, sample)


def test_subexpression_invariants(corpus_docs, monkeypatch):
    """Every compiled subexpression yields iter|pos|item, its iterations lie in
    its loop, and (iter, pos) is unique except for bare step results, which
    carry duplicates until the enclosing ddo removes them."""
    import xqjoin.compiler as compiler

    seen = []
    inner = compiler.compile_expr

    def recording(e, env, loop):
        node = inner(e, env, loop)
        seen.append((e, node, loop))
        return node

    monkeypatch.setattr(compiler, "compile_expr", recording)
    doc = corpus_docs[0]
    for seed in range(150):
        e = gen_query(seed, 1 + seed % 4)
        seen.clear()
        plan = compiler.compile_plan(fe.normalize(e))
        run = Interpreter(doc)
        assert items(run(plan)) == eval_xquery(e, doc)
        assert seen
        for sub, node, loop in seen:
            assert set(node.cols) == set(ITEMS)
            t = run(node)
            iters = {r[0] for r in run(loop).rows}
            assert set(t.column("iter")) <= iters
            if not isinstance(sub, fe.Step):
                pairs = t.project(("iter", "pos")).rows
                assert len(set(pairs)) == len(pairs), fe.render(sub)


def test_unsupported_construct():
    with pytest.raises(ValueError):
        compile_plan(fe.ContextItem())
